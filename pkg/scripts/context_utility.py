"""Context-aware vs context-free model on synthetic Markov-chain corpora.

    python3 scripts/context_utility.py --seeds 5
"""

import argparse
import logging

from dialogact.experiments import run_context_utility


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    res = run_context_utility(range(args.seeds))
    print(f"{'seed':>4} {'full':>7} {'no-ctx':>7} {'argmax':>7} {'secs':>6}")
    for r in res.results:
        print(f"{r.seed:>4} {r.full:>7.3f} {r.no_context:>7.3f} {r.argmax:>7.3f} {r.seconds:>6.0f}")
    print(f"mean {res.mean('full'):>7.3f} {res.mean('no_context'):>7.3f} {res.mean('argmax'):>7.3f}")
    print(f"paired gap vs no-context {100 * res.mean('gap_context'):+.1f} points, "
          f"vs argmax decoding {100 * res.mean('gap_argmax'):+.1f} points")


if __name__ == "__main__":
    main()
