"""
Compare WARP against AUC training on the latent synthetic.

Trains one tag-prediction model per loss and seed at the same step budget
and prints the test precision@1 of each, plus the per-loss median.

Usage:
    python scripts/compare_losses.py
    python scripts/compare_losses.py --seeds 0,1,2,3,4 --max-steps 40000
"""

import argparse
import logging
import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from dotenv import load_dotenv

load_dotenv()

from core import settings
from core.losses import AlphaScheme
from core.synthgen import SynthSpec
from core.trainer import TrainConfig
from features.experiments import compare_losses


def main():
    parser = argparse.ArgumentParser(description="WARP vs AUC on synthetic tag prediction")
    parser.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    parser.add_argument("--n-songs", dest="n_songs", type=int, default=2000)
    parser.add_argument("--n-tags", dest="n_tags", type=int, default=50)
    parser.add_argument("--noise", type=float, default=0.1)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--alpha", default="harmonic", help="uniform, harmonic or p@K")
    parser.add_argument("--max-steps", dest="max_steps", type=int, default=30000)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO if args.verbose else settings.LOG_LEVEL)
    seeds = [int(s) for s in args.seeds.split(",")]

    print("\n" + "=" * 60)
    print("WARP vs AUC")
    print("=" * 60 + "\n")
    print(f"📚 {args.n_songs} songs, {args.n_tags} tags, noise {args.noise}, seeds {seeds}")
    print(f"   d={args.dim} lr={args.lr} alpha={args.alpha} steps={args.max_steps}\n")

    spec = SynthSpec(n_songs=args.n_songs, n_tags=args.n_tags, noise_sigma=args.noise)
    config = TrainConfig(
        d=args.dim,
        gamma=args.lr,
        alpha=AlphaScheme.parse(args.alpha),
        max_steps=args.max_steps,
        eval_every=max(1, args.max_steps // 10),
    )
    study = compare_losses(spec, config, seeds)

    print(study.summary())
    print("\n" + "=" * 60)
    if study.median("warp") > study.median("auc"):
        print("✅ WARP beats AUC on median p@1")
    else:
        print("⚠️  WARP did not beat AUC on median p@1")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    main()
