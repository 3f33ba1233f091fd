#!/usr/bin/env python3
"""Write a GPT-2 checkpoint in the layout seqcirc loads.

The engine reads Hugging Face GPT-2 tensor names (wte.weight, wpe.weight,
h.<i>.ln_1.weight, h.<i>.attn.c_attn.weight [d, 3d], ..., ln_f.bias) with
Conv1D [in, out] weight orientation, F32, plus the metadata keys n_head and
ln_eps. A "transformer." prefix is tolerated by the loader but stripped here.

usage:
  convert_gpt2.py SRC OUT.safetensors        SRC: pytorch_model.bin, model.safetensors or a directory
  convert_gpt2.py --random OUT.safetensors    random GPT-2 Small shaped weights (for smoke tests only)
"""

import argparse
import os
import sys

import numpy as np
from safetensors.numpy import save_file

N_LAYER, N_HEAD, D_MODEL, VOCAB, N_CTX = 12, 12, 768, 50257, 1024
SKIP_SUFFIXES = (".attn.bias", ".attn.masked_bias", "lm_head.weight")


def load_source(src):
    if os.path.isdir(src):
        for name in ("model.safetensors", "pytorch_model.bin"):
            if os.path.exists(os.path.join(src, name)):
                return load_source(os.path.join(src, name))
        sys.exit(f"no model.safetensors or pytorch_model.bin in {src}")
    if src.endswith(".safetensors"):
        from safetensors.numpy import load_file

        return load_file(src)
    import torch

    state = torch.load(src, map_location="cpu", weights_only=True)
    return {k: v.float().numpy() for k, v in state.items()}


def normalise(state):
    out = {}
    for key, value in state.items():
        if key.endswith(SKIP_SUFFIXES):
            continue
        if key.startswith("transformer."):
            key = key[len("transformer."):]
        out[key] = np.ascontiguousarray(value, dtype=np.float32)
    return out


def random_state(seed=0):
    rng = np.random.default_rng(seed)
    d, f = D_MODEL, 4 * D_MODEL

    def w(*shape, scale=0.02):
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    state = {"wte.weight": w(VOCAB, d), "wpe.weight": w(N_CTX, d, scale=0.01)}
    for i in range(N_LAYER):
        p = f"h.{i}."
        state.update({
            p + "ln_1.weight": np.ones(d, np.float32), p + "ln_1.bias": np.zeros(d, np.float32),
            p + "attn.c_attn.weight": w(d, 3 * d), p + "attn.c_attn.bias": np.zeros(3 * d, np.float32),
            p + "attn.c_proj.weight": w(d, d), p + "attn.c_proj.bias": np.zeros(d, np.float32),
            p + "ln_2.weight": np.ones(d, np.float32), p + "ln_2.bias": np.zeros(d, np.float32),
            p + "mlp.c_fc.weight": w(d, f), p + "mlp.c_fc.bias": np.zeros(f, np.float32),
            p + "mlp.c_proj.weight": w(f, d), p + "mlp.c_proj.bias": np.zeros(d, np.float32),
        })
    state["ln_f.weight"] = np.ones(d, np.float32)
    state["ln_f.bias"] = np.zeros(d, np.float32)
    return state


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("src", nargs="?", help="Hugging Face GPT-2 checkpoint file or directory")
    ap.add_argument("out", help="output .safetensors path")
    ap.add_argument("--random", action="store_true", help="write random weights instead of converting")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.random:
        state = random_state(args.seed)
    elif args.src:
        state = normalise(load_source(args.src))
    else:
        ap.error("SRC is required unless --random is given")

    n_params = sum(v.size for v in state.values())
    save_file(state, args.out, metadata={"n_head": str(N_HEAD), "ln_eps": "1e-05"})
    print(f"wrote {args.out}: {len(state)} tensors, {n_params:,} parameters")


if __name__ == "__main__":
    main()
