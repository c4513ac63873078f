#!/usr/bin/env python3
"""Dependency heads for pre-tokenized sentences, using spaCy.

Reads one sentence per line (tokens separated by single spaces) on stdin and
writes one line per sentence of 0-based head indices, -1 for the root. Use it
as `parser = cmd:python3 tools/spacy_heads.py [model]`.

A sentence that spaCy splits into several roots is joined into one tree by
attaching every extra root to the first one.
"""
import sys

import spacy
from spacy.tokens import Doc


def heads_of(doc):
    heads = [-1 if tok.head.i == tok.i else tok.head.i for tok in doc]
    roots = [i for i, h in enumerate(heads) if h == -1]
    for extra in roots[1:]:
        heads[extra] = roots[0]
    return heads


def main():
    model = sys.argv[1] if len(sys.argv) > 1 else "en_core_web_sm"
    nlp = spacy.load(model, disable=["ner", "lemmatizer"])
    lines = [line.rstrip("\n") for line in sys.stdin]
    docs = (Doc(nlp.vocab, words=line.split(" ")) for line in lines)
    for doc in nlp.pipe(docs, batch_size=256):
        print(" ".join(str(h) for h in heads_of(doc)))


if __name__ == "__main__":
    main()
