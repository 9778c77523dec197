"""Encoder ablation on the synthetic context corpus.

    python3 scripts/ablation.py --seeds 3 --max-epochs 15
"""

import argparse
import logging
from dataclasses import replace

from dialogact.ablation import ablate, format_table
from dialogact.config import ENCODER_VARIANTS
from dialogact.corpus import LabelSet
from dialogact.experiments import CONTEXT_MODEL, CONTEXT_TRAINING, ContextCorpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--max-epochs", type=int, default=CONTEXT_TRAINING.max_epochs)
    ap.add_argument("--corpus-seed", type=int, default=0)
    ap.add_argument("--variants", default=",".join(ENCODER_VARIANTS))
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    corpus = ContextCorpus()
    splits = corpus.generate(args.corpus_seed)
    rows = ablate(splits, LabelSet(corpus.labels), args.variants.split(","), list(range(args.seeds)),
                  CONTEXT_MODEL, replace(CONTEXT_TRAINING, max_epochs=args.max_epochs))
    print(format_table(rows))
    means = {r.variant: r.mean for r in rows if r.mean is not None}
    if {"birnn-selfattn-context", "birnn-selfattn"} <= set(means):
        print("self-attention gains from context:", means["birnn-selfattn-context"] > means["birnn-selfattn"])
    if "tfidf-glove" in means and len(means) > 1:
        print("tf-idf is the weakest variant:", min(means, key=means.get) == "tfidf-glove")


if __name__ == "__main__":
    main()
