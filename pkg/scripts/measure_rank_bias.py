"""
Measure the bias of the sampled rank estimate ⌊(Y−1)/N⌋.

For a label set of size Y with one positive and a known number r of margin
violators, prints the exact expected estimate, the mean over sampled runs,
and the resulting weights L against L(r).

Usage:
    python scripts/measure_rank_bias.py
    python scripts/measure_rank_bias.py --Y 50 --ranks 1,2,5,10,25,49 --runs 100000
"""

import argparse
import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.losses import AlphaScheme
from features.experiments import rank_estimator_bias


def main():
    parser = argparse.ArgumentParser(description="Bias of the WARP rank estimator")
    parser.add_argument("--Y", type=int, default=50, help="label universe size")
    parser.add_argument("--ranks", default="1,2,5,10,25,49", help="true margin ranks")
    parser.add_argument("--runs", type=int, default=20000, help="sampled runs per rank")
    parser.add_argument("--alpha", default="harmonic")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    ranks = [int(r) for r in args.ranks.split(",")]
    scheme = AlphaScheme.parse(args.alpha)

    print("\n" + "=" * 60)
    print(f"Rank estimator bias (Y={args.Y}, alpha={scheme.name})")
    print("=" * 60 + "\n")

    rows = rank_estimator_bias(args.Y, ranks, n_runs=args.runs, scheme=scheme, seed=args.seed)
    print(f"{'r':>5} {'E[est]':>10} {'sampled':>10} {'L(r)':>10} {'E[L(est)]':>10} {'found':>8}")
    for row in rows:
        print(f"{row.true_rank:>5} {row.expected_estimate:>10.3f} {row.empirical_estimate:>10.3f} "
              f"{row.loss_at_true_rank:>10.3f} {row.expected_loss:>10.3f} {row.found_fraction:>8.3f}")

    print("\n" + "=" * 60)
    print("✅ Done")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    main()
