"""
songspace command-line interface.

Usage:
    python cli.py synth --preset separable --out data/sep/
    python cli.py train --data data/sep/train.tsv --valid data/sep/valid.tsv \\
        --tasks tp --dim 16 --seed 7 --out models/sep.musl
    python cli.py eval --model models/sep.musl --data data/sep/test.tsv --tasks tp --k 1,3

Exit codes: 0 success, 1 usage, 2 I/O or file format, 3 data invariant.
Reports go to --out (or stdout); progress and errors go to stderr.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from core import settings
from core.baselines import cosine_evaluate, ovr_evaluate, ovr_train
from core.binary_formats import (
    load_codebook, load_frames, load_model, load_ovr, save_codebook, save_model, save_ovr,
)
from core.dataset import Dataset, SongRecord, load_artist_similarity, load_dataset, save_dataset
from core.embedding_model import EnsembleModel, SongCorpus, TaskId
from core.errors import ConfigError, DataInvariantError, DimensionMismatchError, SongSpaceError, UsageError
from core.evaluation import evaluate
from core.featurizer import encode_songs, kmeans_fit
from core.losses import AlphaScheme, LossKind
from core.synthgen import write_synth
from core.trainer import TrainConfig, train
from features.reports import eval_report_tsv, eval_table, train_report_tsv, write_report

logger = logging.getLogger("songspace")

FRAMES_SUFFIX = ".frms"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _say(message: str = ""):
    print(message, file=sys.stderr)


def _banner(title: str):
    _say("=" * 60)
    _say(title)
    _say("=" * 60)


def _parse_ks(text: str) -> List[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"--k expects comma-separated integers, got {text!r}")
    if not ks or min(ks) < 1:
        raise UsageError(f"--k values must be positive, got {text!r}")
    return ks


def _params(args: argparse.Namespace, **extra) -> Dict[str, object]:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "command", "verbose")}
    params.update(extra)
    return {k: ("" if v is None else v) for k, v in params.items()}


def _similarity(args, n_artists: int):
    path = getattr(args, "artist_sim", None)
    return load_artist_similarity(path, n_artists) if path else None


def _check_sa(tasks: Sequence[TaskId], similarity):
    if TaskId.SIM_ARTIST in tasks and not similarity:
        raise ConfigError("task sa requires --artist-sim")


def _frame_files(path: str) -> List[Path]:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob(f"*{FRAMES_SUFFIX}"))
    else:
        files = [path]
    if not files:
        raise FileNotFoundError(f"no {FRAMES_SUFFIX} files in {path}")
    return files


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    overrides = dict(
        seed=args.seed, n_songs=args.n_songs, n_artists=args.n_artists, n_tags=args.n_tags,
        feat_dim=args.feat_dim, latent_dim=args.latent_dim, noise_sigma=args.noise, zipf=args.zipf,
    )
    paths = write_synth(args.out, args.preset, **overrides)
    for name, path in paths.items():
        _say(f"✓ {name}: {path}")
    return 0


def cmd_train(args) -> int:
    _banner("Training joint embedding")
    dataset = load_dataset(args.data)
    valid = load_dataset(args.valid)
    similarity = _similarity(args, dataset.n_artists)
    tasks = TaskId.parse_list(args.tasks)
    _check_sa(tasks, similarity)

    config = TrainConfig(
        tasks=tuple(tasks),
        loss=LossKind.parse(args.loss),
        alpha=AlphaScheme.parse(args.alpha),
        d=args.dim,
        C=args.C,
        gamma=args.lr,
        max_steps=args.max_steps,
        eval_every=args.eval_every,
        patience=args.patience,
        seed=args.seed,
        k_eval=args.k_eval,
        candidate_pool=args.candidate_pool,
    )
    _say(f"📚 {len(dataset)} training songs, {len(valid)} validation songs")
    _say(f"   tasks={','.join(t.value for t in config.tasks)} loss={config.loss.value} "
         f"alpha={config.alpha.name} d={config.d}")

    report = train(dataset, valid, config, similarity)
    save_model(report.model, args.out)
    if args.report:
        write_report(train_report_tsv(report, _params(args, **config.as_dict())), args.report)

    _say(f"✓ {report.steps_taken} steps, {len(report.checkpoints)} checkpoints, "
         f"best p@{config.k_eval}={report.best_precision:.4f} at step {report.best_step}")
    _say(f"✓ Model saved to {args.out}")
    return 0


def _evaluate_and_report(args, scorer, command: str) -> int:
    test = load_dataset(args.data)
    similarity = _similarity(args, test.n_artists)
    tasks = TaskId.parse_list(args.tasks)
    _check_sa(tasks, similarity)
    ks = _parse_ks(args.k)
    train_ids = load_dataset(args.train).song_ids if args.train else None

    result = evaluate(scorer, test, tasks, ks, artist_similarity=similarity,
                      train_song_ids=train_ids, oracle=args.oracle, n_jobs=args.threads)
    write_report(eval_report_tsv(result, command, _params(args)), args.out)
    if args.out:
        _say(eval_table(result))
        _say(f"✓ Report saved to {args.out}")
    return 0


def cmd_eval(args) -> int:
    return _evaluate_and_report(args, load_model(args.model), "eval")


def cmd_ensemble_eval(args) -> int:
    paths = [p for p in args.models.split(",") if p.strip()]
    if not paths:
        raise UsageError("--models needs at least one model file")
    return _evaluate_and_report(args, EnsembleModel([load_model(p) for p in paths]), "ensemble-eval")


def cmd_query(args) -> int:
    model = load_model(args.model)
    task = TaskId.parse(args.task)
    songs: Optional[Dataset] = load_dataset(args.data) if args.data else None

    if task.query_kind == "artist":
        if args.artist is None:
            raise UsageError(f"task {task.value} needs --artist")
        query = args.artist
        exclude = ()
    else:
        if args.song_id is None or songs is None:
            raise UsageError(f"task {task.value} needs --song-id and --data")
        ids = songs.song_ids
        if args.song_id not in ids:
            raise DataInvariantError(f"song {args.song_id!r} not found in {args.data}")
        index = ids.index(args.song_id)
        query = songs.records[index].features
        exclude = (index,) if task is TaskId.SIM_SONG else ()

    corpus = None
    if task.label_kind == "song":
        if songs is None:
            raise UsageError(f"task {task.value} ranks songs and needs --data")
        corpus = SongCorpus(songs)

    ranked = model.rank_all(task, query, args.k, corpus=corpus, exclude=exclude)
    lines = ["rank\tlabel\tscore"]
    for rank, (label, score) in enumerate(ranked.items, 1):
        name = songs.song_ids[label] if task.label_kind == "song" else str(label)
        lines.append(f"{rank}\t{name}\t{score:.6f}")
    write_report("\n".join(lines) + "\n", args.out)
    return 0


def _load_frame_sets(path: str):
    files = _frame_files(path)
    return files, [load_frames(f) for f in files]


def cmd_featurize_fit(args) -> int:
    _banner("Fitting k-means codebook")
    files, frame_sets = _load_frame_sets(args.frames)
    pooled = [(path, f) for path, f in zip(files, frame_sets) if f.size]
    if not pooled:
        raise DataInvariantError("every frame file is empty")
    F = pooled[0][1].shape[1]
    for path, f in pooled:
        if f.shape[1] != F:
            raise DimensionMismatchError(f"{path}: frame dim {f.shape[1]} != {F} of {pooled[0][0]}")
    pooled = [f for _, f in pooled]
    X = np.vstack(pooled)
    _say(f"📚 {X.shape[0]} frames of dim {X.shape[1]} from {len(files)} songs")
    codebook = kmeans_fit(X, args.D, args.iters, args.seed, n_jobs=args.threads)
    save_codebook(codebook, args.out)
    if codebook.inertia_history:
        _say(f"✓ inertia {codebook.inertia_history[0]:.6g} -> {codebook.inertia_history[-1]:.6g}")
    _say(f"✓ Codebook saved to {args.out}")
    return 0


def cmd_featurize_encode(args) -> int:
    codebook = load_codebook(args.codebook)
    files, frame_sets = _load_frame_sets(args.frames)
    features = encode_songs(codebook, frame_sets, n_jobs=args.threads)

    if args.extra_codebook or args.extra_frames:
        if not (args.extra_codebook and args.extra_frames):
            raise UsageError("--extra-codebook and --extra-frames go together")
        extra_book = load_codebook(args.extra_codebook)
        extra_files, extra_sets = _load_frame_sets(args.extra_frames)
        if [f.stem for f in extra_files] != [f.stem for f in files]:
            raise DataInvariantError("extra frame files do not match the primary frame files")
        extra = encode_songs(extra_book, extra_sets, n_jobs=args.threads)
        features = [a.concat(b) for a, b in zip(features, extra)]

    by_id = {f.stem: v for f, v in zip(files, features)}
    feat_dim = features[0].dim
    if args.labels:
        labels = load_dataset(args.labels)
        missing = [r.song_id for r in labels.records if r.song_id not in by_id]
        if missing:
            raise FileNotFoundError(f"no frame file for song {missing[0]!r}")
        records = [SongRecord(r.song_id, r.artists, r.tags, by_id[r.song_id]) for r in labels.records]
        dataset = Dataset(records, labels.n_artists, labels.n_tags, feat_dim)
    else:
        dataset = Dataset([SongRecord(sid, (), (), v) for sid, v in by_id.items()], 0, 0, feat_dim)

    save_dataset(dataset, args.out)
    _say(f"✓ Encoded {len(dataset)} songs (|S|={feat_dim}) to {args.out}")
    return 0


def cmd_ovr_train(args) -> int:
    _banner("Training one-vs-rest baseline")
    dataset = load_dataset(args.data)
    model = ovr_train(dataset, args.label_kind, args.epochs, args.lr, np.random.default_rng(args.seed))
    save_ovr(model, args.out)
    _say(f"✓ {len(model.epoch_losses)} epochs, final hinge loss {model.epoch_losses[-1]:.4f}")
    _say(f"✓ Model saved to {args.out}")
    return 0


def cmd_ovr_eval(args) -> int:
    model = load_ovr(args.model, args.label_kind)
    result = ovr_evaluate(model, load_dataset(args.data), _parse_ks(args.k))
    write_report(eval_report_tsv(result, "ovr-eval", _params(args)), args.out)
    if args.out:
        _say(eval_table(result))
    return 0


def cmd_cosine_eval(args) -> int:
    result = cosine_evaluate(load_dataset(args.data), _parse_ks(args.k), n_jobs=args.threads)
    write_report(eval_report_tsv(result, "cosine-eval", _params(args)), args.out)
    if args.out:
        _say(eval_table(result))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED, help="RNG seed")
    p.add_argument("--threads", type=int, default=settings.DEFAULT_THREADS, help="worker cap")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")


def _eval_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="test dataset TSV")
    p.add_argument("--tasks", default="tp", help="comma-separated tasks (ap,sp,sa,ss,tp)")
    p.add_argument("--k", default="1,3,6,9,12,15", help="comma-separated k values")
    p.add_argument("--artist-sim", dest="artist_sim", help="artist similarity TSV (task sa)")
    p.add_argument("--train", help="training dataset TSV, only to warn about overlapping songs")
    p.add_argument("--oracle", action="store_true", help="rank with the brute-force scorer")
    p.add_argument("--out", help="report path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="songspace", description="Joint song/artist/tag embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    _common(p)
    p.add_argument("--preset", default="latent", help="separable, latent, latent-clean or small")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-songs", dest="n_songs", type=int)
    p.add_argument("--n-artists", dest="n_artists", type=int)
    p.add_argument("--n-tags", dest="n_tags", type=int)
    p.add_argument("--feat-dim", dest="feat_dim", type=int)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--noise", type=float, help="feature noise sigma")
    p.add_argument("--zipf", type=float, help="artist popularity exponent")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an embedding model")
    _common(p)
    p.add_argument("--data", required=True, help="training dataset TSV")
    p.add_argument("--valid", required=True, help="validation dataset TSV")
    p.add_argument("--tasks", default="tp", help="comma-separated tasks (ap,sp,sa,ss,tp)")
    p.add_argument("--loss", default="warp", help="warp or auc")
    p.add_argument("--alpha", default="harmonic", help="uniform, harmonic or p@K")
    p.add_argument("--dim", type=int, default=settings.DEFAULT_DIM)
    p.add_argument("--C", type=float, default=settings.DEFAULT_C, help="column norm bound")
    p.add_argument("--lr", type=float, default=settings.DEFAULT_LR)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=settings.DEFAULT_MAX_STEPS)
    p.add_argument("--eval-every", dest="eval_every", type=int, help="default: 10 x training songs")
    p.add_argument("--patience", type=int, default=settings.DEFAULT_PATIENCE)
    p.add_argument("--k-eval", dest="k_eval", type=int, default=1)
    p.add_argument("--candidate-pool", dest="candidate_pool", type=int)
    p.add_argument("--artist-sim", dest="artist_sim", help="artist similarity TSV (task sa)")
    p.add_argument("--report", help="validation history TSV")
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="precision@k of a model")
    _common(p)
    p.add_argument("--model", required=True)
    _eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble-eval", help="precision@k of summed model scores")
    _common(p)
    p.add_argument("--models", required=True, help="comma-separated model files")
    _eval_flags(p)
    p.set_defaults(func=cmd_ensemble_eval)

    p = sub.add_parser("query", help="top-k labels for one query")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--data", help="dataset holding the query song and candidate songs")
    p.add_argument("--song-id", dest="song_id")
    p.add_argument("--artist", type=int)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("featurize-fit", help="fit a k-means codebook over frame files")
    _common(p)
    p.add_argument("--frames", required=True, help=f"directory of {FRAMES_SUFFIX} files")
    p.add_argument("--D", type=int, default=2000, help="codebook size")
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--out", required=True, help="codebook file")
    p.set_defaults(func=cmd_featurize_fit)

    p = sub.add_parser("featurize-encode", help="encode frame files as codeword counts")
    _common(p)
    p.add_argument("--codebook", required=True)
    p.add_argument("--frames", required=True, help=f"directory of {FRAMES_SUFFIX} files")
    p.add_argument("--extra-codebook", dest="extra_codebook", help="second codebook to concatenate")
    p.add_argument("--extra-frames", dest="extra_frames", help="frames for the second codebook")
    p.add_argument("--labels", help="dataset TSV supplying song ids, artists and tags")
    p.add_argument("--out", required=True, help="dataset TSV")
    p.set_defaults(func=cmd_featurize_encode)

    p = sub.add_parser("ovr-train", help="train the one-vs-rest baseline")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--label-kind", dest="label_kind", default="tag", choices=("tag", "artist"))
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ovr_train)

    p = sub.add_parser("ovr-eval", help="precision@k of the one-vs-rest baseline")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--label-kind", dest="label_kind", default="tag", choices=("tag", "artist"))
    p.add_argument("--data", required=True)
    p.add_argument("--k", default="1,3,6,9,12,15")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ovr_eval)

    p = sub.add_parser("cosine-eval", help="similar-song precision@k of feature cosine")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", default="1,3,6,9,12,15")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cosine_eval)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the exit code and never raises."""
    try:
        args = build_parser().parse_args(argv)
        level = logging.INFO if args.verbose else getattr(logging, settings.LOG_LEVEL, logging.WARNING)
        logging.basicConfig(level=level, stream=sys.stderr, force=True,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0
    except SongSpaceError as e:
        _say(f"error: {e}")
        return e.exit_code
    except OSError as e:
        _say(f"error: {e}")
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
