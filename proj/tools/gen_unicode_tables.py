#!/usr/bin/env python3
"""Emit src/unicode_tables.inc: codepoint ranges for \\p{L}, \\p{N} and \\s.

The ranges are taken from the `regex` module, the same engine the canonical
GPT-2 encoder uses for its pre-tokenization pattern, so the C++ pre-tokenizer
classifies codepoints identically.
"""
import sys

import regex

CLASSES = {
    "kLetterRanges": regex.compile(r"\p{L}"),
    "kNumberRanges": regex.compile(r"\p{N}"),
    "kSpaceRanges": regex.compile(r"\s"),
}


def ranges(pattern):
    out = []
    start = None
    for cp in range(0x110000):
        if 0xD800 <= cp <= 0xDFFF:
            hit = False
        else:
            hit = pattern.fullmatch(chr(cp)) is not None
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def main(path):
    lines = [
        "// Generated by tools/gen_unicode_tables.py (regex %s). Do not edit." % regex.__version__,
        "",
    ]
    for name, pattern in CLASSES.items():
        rs = ranges(pattern)
        lines.append("inline constexpr CodepointRange %s[] = {" % name)
        for lo, hi in rs:
            lines.append("    {0x%X, 0x%X}," % (lo, hi))
        lines.append("};")
        lines.append("")
    with open(path, "w") as f:
        f.write("\n".join(lines))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/unicode_tables.inc")
