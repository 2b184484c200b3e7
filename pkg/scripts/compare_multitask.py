"""
Joint multi-task training against single-task models, and a small ensemble
against its members, on the latent synthetic.

Usage:
    python scripts/compare_multitask.py
    python scripts/compare_multitask.py --tasks ap,tp,ss --seeds 0,1,2
    python scripts/compare_multitask.py --ensemble 3
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
from core.embedding_model import TaskId
from core.synthgen import SynthSpec
from core.trainer import TrainConfig
from features.experiments import compare_multitask, ensemble_vs_members


def main():
    parser = argparse.ArgumentParser(description="Multi-task and ensemble studies")
    parser.add_argument("--tasks", default="ap,tp,ss")
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--n-songs", dest="n_songs", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--max-steps", dest="max_steps", type=int, default=30000)
    parser.add_argument("--ensemble", type=int, default=0,
                        help="also compare an ensemble of this many members (first task only)")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO if args.verbose else settings.LOG_LEVEL)
    seeds = [int(s) for s in args.seeds.split(",")]
    tasks = TaskId.parse_list(args.tasks)

    print("\n" + "=" * 60)
    print("Multi-task study")
    print("=" * 60 + "\n")
    print(f"📚 tasks {','.join(t.value for t in tasks)}, seeds {seeds}, steps {args.max_steps}\n")

    spec = SynthSpec(n_songs=args.n_songs)
    config = TrainConfig(tasks=tuple(tasks), d=args.dim, gamma=args.lr,
                         max_steps=args.max_steps, eval_every=max(1, args.max_steps // 10))
    study = compare_multitask(spec, config, seeds, tasks)
    print(study.summary())

    for t in tasks:
        joint, single = study.median(f"joint:{t.value}"), study.median(f"single:{t.value}")
        mark = "✓" if joint >= single - 0.01 else "✗"
        print(f"  {mark} {t.value}: joint {joint:.4f} vs single {single:.4f}")

    if args.ensemble:
        print("\n🔗 Ensemble study...")
        ens = ensemble_vs_members(spec, config, seeds, n_members=args.ensemble)
        print(ens.summary())

    print("\n" + "=" * 60)
    print("✅ Done")
    print("=" * 60 + "\n")


if __name__ == "__main__":
    main()
