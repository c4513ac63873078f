#!/usr/bin/env python3
"""Writes a BERT checkpoint as the directory layout the bert encoder reads.

    convert_to_safetensors.py bert-base-uncased weights/bert-base-uncased

The source is a Hugging Face model name or a local directory. The output
directory receives config.json, vocab.txt, tokenizer_config.json and
model.safetensors (float32, encoder tensors only).
"""
import argparse
import json
import os

from safetensors.torch import save_file
from transformers import BertModel, BertTokenizer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="model name or directory")
    ap.add_argument("out", help="output directory")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    model = BertModel.from_pretrained(args.source, add_pooling_layer=False).eval()
    tokenizer = BertTokenizer.from_pretrained(args.source)

    tensors = {k: v.detach().float().contiguous() for k, v in model.state_dict().items()}
    save_file(tensors, os.path.join(args.out, "model.safetensors"))
    cfg = model.config.to_dict()
    cfg["model_type"] = "bert"
    with open(os.path.join(args.out, "config.json"), "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True, default=str)
    tokenizer.save_vocabulary(args.out)
    with open(os.path.join(args.out, "tokenizer_config.json"), "w") as f:
        json.dump({"do_lower_case": bool(tokenizer.do_lower_case)}, f)
    print(f"wrote {len(tensors)} tensors to {args.out}")


if __name__ == "__main__":
    main()
