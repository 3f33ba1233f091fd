#!/usr/bin/env python3
"""Freeze a (text -> GPT-2 token ids) corpus for the C++ tokenizer tests.

Encodes with the canonical GPT-2 byte-level BPE procedure (the `regex`
pre-split pattern plus lowest-rank-first merging) and, when `transformers`
is importable, cross-checks every string against its GPT2Tokenizer.

usage: make_tokenizer_oracle.py data/gpt2 tests/data/tokenizer_oracle.jsonl
"""
import json
import random
import sys

import regex

PAT = regex.compile(r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+""")


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


class Encoder:
    def __init__(self, vocab_dir):
        with open(f"{vocab_dir}/vocab.json", encoding="utf-8") as f:
            self.encoder = json.load(f)
        with open(f"{vocab_dir}/merges.txt", encoding="utf-8") as f:
            lines = f.read().split("\n")[1:]
        merges = [tuple(l.split()) for l in lines if l.strip()]
        self.ranks = dict(zip(merges, range(len(merges))))
        self.byte_encoder = bytes_to_unicode()

    def bpe(self, token):
        word = list(token)
        while len(word) > 1:
            pairs = {(word[i], word[i + 1]) for i in range(len(word) - 1)}
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            merged = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and (word[i], word[i + 1]) == best:
                    merged.append(word[i] + word[i + 1])
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = merged
        return word

    def encode(self, text):
        ids = []
        for piece in regex.findall(PAT, text):
            mapped = "".join(self.byte_encoder[b] for b in piece.encode("utf-8"))
            ids.extend(self.encoder[t] for t in self.bpe(mapped))
        return ids


NAMES = ["Kyle", "Anthony", "Madison", "Grant", "Anne", "Chelsea", "Jeremy", "Craig", "Elizabeth", "Bob"]
ITEMS = ["Ham", "Egg", "Bread", "Steak", "Table", "Lamp", "Chair", "Book"]
MONTHS = ["January", "February", "March", "April", "May", "June", "July", "August",
          "September", "October", "November", "December"]
WORDS = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
         "eleven", "twelve", "thirteen", "seventeen", "twenty"]
ASCII_WORDS = ["the", "quick", "brown", "fox", "jumps", "over", "lazy", "dog", "don't", "I'll",
               "we're", "they've", "I'm", "she'd", "it's", "IT'S", "O'Neil", "rock'n'roll",
               "hello", "world", "foo_bar", "x", "#include", "<vector>", "a+b=c", "$3.50",
               "1,000", "3rd", "1990s", "v2.0", "e-mail", "(parens)", "[brackets]", "{}", "...",
               "!!!", "?", "@user", "100%", "C++", "--flag", "snake_case", "CamelCase"]
UNICODE_BITS = ["héllo", "naïve", "café", "Ünïcödé", "Ελληνικά", "русский", "日本語", "中文字",
                "한국어", "🎉", "😀😃", "👍🏽", "١٢٣", "٤٥", "Ⅻ", "½", "²", "ß", "ﬁ", "é",
                " ", " ", "​", "　", "—", "–", "…", "“quoted”", "‘single’",
                "€100", "£5", "¥", "©", "™", "∑x²", "→", "≤≥", "🇺🇸", "Z̤͔ͧ", "ـ"]
SPACES = [" ", "  ", "   ", "\n", "\n\n", "\t", " \n", "\r\n", " \t ", "\n  "]


def sample_text(rng, kind):
    if kind == 0:
        tmpl = rng.choice(["{} born in", "{} lost in", "{} done in"])
        fill = rng.choice([NAMES, ITEMS])
        seq = rng.choice([[str(i) for i in range(1, 13)], MONTHS, WORDS[:12]])
        start = rng.randrange(0, len(seq) - 4)
        parts = []
        for k in range(4):
            parts.append(tmpl.format(rng.choice(fill)) + " " + seq[start + k] + ".")
        parts.append(tmpl.format(rng.choice(fill)))
        return " ".join(parts)
    if kind == 1:
        start = rng.randrange(1, 95)
        n = rng.randrange(1, 8)
        return " ".join(str(start + i * rng.choice([1, 2, 10])) for i in range(n))
    if kind == 2:
        n = rng.randrange(1, 12)
        out = []
        for _ in range(n):
            out.append(rng.choice(ASCII_WORDS))
            out.append(rng.choice(SPACES) if rng.random() < 0.3 else " ")
        return "".join(out).rstrip() if rng.random() < 0.5 else "".join(out)
    if kind == 3:
        n = rng.randrange(1, 8)
        pool = UNICODE_BITS + ASCII_WORDS[:10] + SPACES
        return "".join(rng.choice(pool) + (" " if rng.random() < 0.5 else "") for _ in range(n))
    # printable ASCII noise
    n = rng.randrange(1, 30)
    return "".join(chr(rng.randrange(32, 127)) if rng.random() < 0.9 else rng.choice(SPACES) for _ in range(n))


def main(vocab_dir, out_path, count=1000, seed=20240101):
    enc = Encoder(vocab_dir)
    rng = random.Random(seed)
    fixed = ["", " ", "a", " 12", " January", " twelve", " 5", "eleven", " eleven", "1 2 3 4",
             "May June July August", " seven eight nine ten", "8 9 10 11",
             "Kyle born in February.", "Kyle born in February. Anthony born in March.",
             "Anne born in 2. Chelsea born in 3. Jeremy born in 4. Craig born in 5. Elizabeth born in",
             "hello  world\n\n x", "trailing space ", "  leading", "\n", "don't stop", "'s'S's",
             "héllo 世界 🎉 ١٢٣"]
    texts = list(fixed)
    seen = set(texts)
    while len(texts) < count:
        t = sample_text(rng, rng.randrange(5))
        if t not in seen and "<|endoftext|>" not in t:
            seen.add(t)
            texts.append(t)

    reference = None
    try:
        from transformers import GPT2Tokenizer
        reference = GPT2Tokenizer(f"{vocab_dir}/vocab.json", f"{vocab_dir}/merges.txt")
    except Exception as exc:  # pragma: no cover - optional cross-check
        print(f"note: transformers cross-check unavailable ({exc})", file=sys.stderr)

    mismatches = 0
    with open(out_path, "w", encoding="utf-8") as f:
        for t in texts:
            ids = enc.encode(t)
            if reference is not None:
                ref = reference.encode(t)
                if ref != ids:
                    mismatches += 1
                    print(f"mismatch vs transformers: {t!r}: {ids} != {ref}", file=sys.stderr)
            f.write(json.dumps({"text": t, "ids": ids}, ensure_ascii=False) + "\n")
    print(f"wrote {len(texts)} strings, {mismatches} cross-check mismatches", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
