#!/usr/bin/env python3
"""Build a tiny random GPT-2 with HF transformers and freeze its outputs.

Writes <out>/tiny_gpt2.safetensors (canonical tensor names, F32) and
<out>/tiny_gpt2_reference.json holding logits, attention patterns and
per-layer residual states computed by the transformers implementation.
The C++ engine tests compare against these values.
"""
import json
import sys

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel


def main(out_dir):
    torch.manual_seed(1234)
    cfg = GPT2Config(vocab_size=101, n_positions=48, n_embd=32, n_layer=2, n_head=4,
                     resid_pdrop=0.0, embd_pdrop=0.0, attn_pdrop=0.0,
                     activation_function="gelu_new", layer_norm_epsilon=1e-5)
    model = GPT2LMHeadModel(cfg).eval()
    # Default init leaves biases and LN params trivial; perturb so every term is exercised.
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias") or ".ln_" in name or "ln_f" in name:
                p.add_(0.1 * torch.randn_like(p))
            else:
                p.mul_(8.0)

    tensors = {}
    for name, t in model.transformer.state_dict().items():
        if name.endswith(".attn.bias") or name.endswith(".attn.masked_bias"):
            continue
        tensors[name] = t.detach().to(torch.float32).contiguous()
    save_file(tensors, f"{out_dir}/tiny_gpt2.safetensors",
              metadata={"n_head": "4", "ln_eps": "1e-05"})

    sequences = [[5, 17, 3, 99, 42, 0, 7], [100], [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]]
    cases = []
    with torch.no_grad():
        for seq in sequences:
            ids = torch.tensor([seq])
            out = model(ids, output_attentions=True, output_hidden_states=True)
            cases.append({
                "tokens": seq,
                "logits": out.logits[0].tolist(),
                # hidden_states[l] is resid_pre of layer l; the last entry has ln_f applied.
                "resid_pre": [h[0].tolist() for h in out.hidden_states[:-1]],
                "patterns": [a[0].tolist() for a in out.attentions],
            })
    with open(f"{out_dir}/tiny_gpt2_reference.json", "w") as f:
        json.dump({"n_layers": 2, "n_heads": 4, "d_model": 32, "vocab": 101, "cases": cases}, f)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
