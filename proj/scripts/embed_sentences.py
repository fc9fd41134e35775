#!/usr/bin/env python3
"""Precompute a sentence-embedding table for `evaluation.embedding_table`.

Reads sentences from tab-separated corpus files or plain text files (one
sentence per line) and writes `sentence<TAB>v1,...,v384` lines.  Needs the
sentence-transformers package.
"""

import argparse
import re
import sys


def normalize(text):
    text = re.sub(r"[!-/:-@\[-`{-~]", "", text.lower())
    return " ".join(text.split())


def read_sentences(paths):
    seen = {}
    for path in paths:
        with open(path, encoding="utf-8") as f:
            for line in f:
                for cell in line.rstrip("\n").split("\t"):
                    s = normalize(cell)
                    if s:
                        seen.setdefault(s, None)
    return list(seen)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("inputs", nargs="+", help="corpus TSV or text files")
    ap.add_argument("--output", required=True)
    ap.add_argument("--model", default="all-MiniLM-L6-v2")
    ap.add_argument("--batch-size", type=int, default=256)
    args = ap.parse_args()

    try:
        from sentence_transformers import SentenceTransformer
    except ImportError:
        sys.exit("sentence-transformers is not installed")

    sentences = read_sentences(args.inputs)
    model = SentenceTransformer(args.model)
    vectors = model.encode(sentences, batch_size=args.batch_size, show_progress_bar=True)
    if vectors.shape[1] != 384:
        sys.exit(f"model produces {vectors.shape[1]}-dim vectors, expected 384")
    with open(args.output, "w", encoding="utf-8") as out:
        for s, v in zip(sentences, vectors):
            out.write(s + "\t" + ",".join(f"{x:.8g}" for x in v) + "\n")
    print(f"wrote {len(sentences)} embeddings to {args.output}")


if __name__ == "__main__":
    main()
