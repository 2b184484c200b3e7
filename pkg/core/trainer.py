"""
Multi-task stochastic gradient training of the joint embedding.

Each step picks a task uniformly, a training example for it, and a positive
label; WARP then draws negatives until one violates the margin and takes a
hinge step scaled by L(⌊(Y−1)/N⌋). AUC mode takes a plain hinge step on one
uniform negative. Only the columns that took part in the step are changed
and re-projected; a full projection runs at every validation checkpoint.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from core import settings
from core.dataset import Dataset, SparseVector
from core.embedding_model import EmbeddingModel, TaskId
from core.errors import ConfigError, UnusableTaskError
from core.evaluation import evaluate
from core.losses import AlphaScheme, LossKind, NegativeSampler, big_L, hinge, sample_violator

logger = logging.getLogger(__name__)

ArtistSimilarity = Dict[int, Tuple[int, ...]]


@dataclass(frozen=True)
class TrainConfig:
    tasks: Tuple[TaskId, ...] = (TaskId.TAG_PRED,)
    loss: LossKind = LossKind.WARP
    alpha: AlphaScheme = field(default_factory=AlphaScheme.harmonic)
    d: int = settings.DEFAULT_DIM
    C: float = settings.DEFAULT_C
    gamma: float = settings.DEFAULT_LR
    max_steps: int = settings.DEFAULT_MAX_STEPS
    # None means 10 × |train|; the right cadence is data dependent
    eval_every: Optional[int] = None
    patience: int = settings.DEFAULT_PATIENCE
    seed: int = settings.DEFAULT_SEED
    k_eval: int = 1
    # song-valued tasks only: rank estimates use a pool of this many candidates
    candidate_pool: Optional[int] = None

    def __post_init__(self):
        tasks = self.tasks
        if isinstance(tasks, (str, TaskId)):
            tasks = (tasks,)
        object.__setattr__(self, "tasks", tuple(TaskId(t) for t in tasks))
        object.__setattr__(self, "loss", LossKind(self.loss))
        self.validate()

    def validate(self):
        if not self.tasks:
            raise ConfigError("at least one task is required")
        if len(set(self.tasks)) != len(self.tasks):
            raise ConfigError("tasks must not repeat")
        if not self.gamma > 0:
            raise ConfigError(f"learning rate must be positive, got {self.gamma}")
        if not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if self.d < 1:
            raise ConfigError(f"d must be at least 1, got {self.d}")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be non-negative")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.k_eval < 1:
            raise ConfigError("k_eval must be at least 1")
        if self.candidate_pool is not None and self.candidate_pool < 2:
            raise ConfigError("candidate_pool must be at least 2")

    def resolved_eval_every(self, n_train: int) -> int:
        return self.eval_every if self.eval_every is not None else max(1, 10 * n_train)

    def as_dict(self) -> Dict[str, str]:
        """Flat string view for report headers."""
        out = {}
        for key, value in asdict(self).items():
            if key == "tasks":
                value = ",".join(t.value for t in self.tasks)
            elif key == "alpha":
                value = self.alpha.name
            elif key == "loss":
                value = self.loss.value
            out[key] = str(value)
        return out


@dataclass(frozen=True)
class TaskExample:
    """Query plus its positive labels; `query_index` is excluded from ranking for sa/ss."""

    query: Union[int, SparseVector]
    positives: np.ndarray
    query_index: Optional[int] = None


@dataclass
class TaskData:
    task: TaskId
    examples: List[TaskExample]
    n_labels: int
    songs: Optional[List[SparseVector]] = None


def _has_negative(n_labels: int, n_positives: int, excludes_self: bool) -> bool:
    return n_labels - n_positives - (1 if excludes_self else 0) >= 1


def build_task_data(
    task: TaskId,
    dataset: Dataset,
    artist_similarity: Optional[ArtistSimilarity] = None,
) -> TaskData:
    """Turn song records into (query, positives) examples for one task."""
    examples: List[TaskExample] = []
    songs = None

    if task in (TaskId.ARTIST_PRED, TaskId.TAG_PRED):
        n_labels = dataset.n_artists if task is TaskId.ARTIST_PRED else dataset.n_tags
        for rec in dataset.records:
            labels = rec.artists if task is TaskId.ARTIST_PRED else rec.tags
            if labels and _has_negative(n_labels, len(labels), False):
                examples.append(TaskExample(rec.features, np.array(labels, dtype=np.int64)))

    elif task is TaskId.SONG_PRED:
        n_labels = len(dataset)
        songs = dataset.features
        groups = dataset.songs_by_artist
        for rec in dataset.records:
            for a in rec.artists:
                if _has_negative(n_labels, len(groups[a]), False):
                    examples.append(TaskExample(a, groups[a]))

    elif task is TaskId.SIM_SONG:
        n_labels = len(dataset)
        songs = dataset.features
        for i, rec in enumerate(dataset.records):
            peers = dataset.same_artist_songs(i)
            if len(peers) and _has_negative(n_labels, len(peers), True):
                examples.append(TaskExample(rec.features, peers, query_index=i))

    else:
        n_labels = dataset.n_artists
        if not artist_similarity:
            raise UnusableTaskError("task sa requires artist similarity data")
        for artist, peers in sorted(artist_similarity.items()):
            peers = [p for p in peers if p != artist]
            if peers and _has_negative(n_labels, len(peers), True):
                examples.append(TaskExample(int(artist), np.array(sorted(peers), dtype=np.int64), query_index=int(artist)))

    if not examples:
        raise UnusableTaskError(f"task {task.value} has no usable training examples")
    return TaskData(task, examples, n_labels, songs)


# ---------------------------------------------------------------------------
# Single step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepOutcome:
    updated: bool
    positive: int
    negative: Optional[int] = None
    trials: int = 0
    weight: float = 0.0
    touched: Dict[str, np.ndarray] = field(default_factory=dict)


def _query_vector(model: EmbeddingModel, task_data: TaskData, example: TaskExample) -> np.ndarray:
    if task_data.task.query_kind == "artist":
        return model.A[:, example.query].copy()
    return model.embed_song(example.query)


def _label_vector(model: EmbeddingModel, task_data: TaskData, label: int) -> np.ndarray:
    kind = task_data.task.label_kind
    if kind == "artist":
        return model.A[:, label]
    if kind == "tag":
        return model.T[:, label]
    return model.embed_song(task_data.songs[label])


def pair_loss(model: EmbeddingModel, task_data: TaskData, example: TaskExample,
              j: int, k: int, weight: float = 1.0) -> float:
    """weight · max(0, 1 − f_j + f_k) for one query and one (positive, negative) pair."""
    u = _query_vector(model, task_data, example)
    f_j = float(_label_vector(model, task_data, j) @ u)
    f_k = float(_label_vector(model, task_data, k) @ u)
    return weight * hinge(f_j, f_k)


def pair_gradients(model: EmbeddingModel, task_data: TaskData, example: TaskExample,
                   j: int, k: int) -> List[Tuple[str, np.ndarray, np.ndarray]]:
    """Gradient of 1 − f_j + f_k as (matrix name, columns, d×len(columns) block) pieces.

    All pieces use the parameters before the step, so they can be applied in
    any order; pieces may share columns (song-song tasks) and then add up.
    """
    task = task_data.task
    u = _query_vector(model, task_data, example)
    w_j = _label_vector(model, task_data, j)
    w_k = _label_vector(model, task_data, k)
    pieces = []

    d_query = w_k - w_j
    if task.query_kind == "artist":
        pieces.append(("A", np.array([example.query]), d_query[:, None]))
    else:
        s = example.query
        pieces.append(("V", s.indices, np.outer(d_query, s.values)))

    kind = task.label_kind
    if kind in ("artist", "tag"):
        name = "A" if kind == "artist" else "T"
        pieces.append((name, np.array([j]), -u[:, None]))
        pieces.append((name, np.array([k]), u[:, None]))
    else:
        s_j, s_k = task_data.songs[j], task_data.songs[k]
        pieces.append(("V", s_j.indices, np.outer(-u, s_j.values)))
        pieces.append(("V", s_k.indices, np.outer(u, s_k.values)))
    return pieces


def sgd_step(
    model: EmbeddingModel,
    task_data: TaskData,
    example: TaskExample,
    loss: LossKind,
    alpha: AlphaScheme,
    gamma: float,
    rng: np.random.Generator,
    j: Optional[int] = None,
    candidate_pool: Optional[int] = None,
) -> StepOutcome:
    """One stochastic step on one example; touched columns are projected afterwards."""
    if j is None:
        j = int(example.positives[rng.integers(len(example.positives))])
    u = _query_vector(model, task_data, example)

    def score_fn(label: int) -> float:
        return float(_label_vector(model, task_data, label) @ u)

    f_j = score_fn(j)
    excluded = (example.query_index,) if task_data.task.excludes_query else ()

    if loss is LossKind.WARP:
        pool = candidate_pool if task_data.task.label_kind == "song" else None
        sample = sample_violator(score_fn, example.positives, j, task_data.n_labels, rng,
                                 excluded=excluded, f_j=f_j, rank_universe=pool)
        if sample is None:
            return StepOutcome(False, j, trials=task_data.n_labels - 1)
        k, trials = sample.negative, sample.trials
        weight = big_L(sample.rank_estimate, alpha)
    else:
        blocked = set(int(p) for p in example.positives) | set(excluded)
        k = NegativeSampler(task_data.n_labels, blocked).draw(rng)
        trials = 1
        if hinge(f_j, score_fn(k)) == 0.0:
            return StepOutcome(False, j, k, trials)
        weight = 1.0

    touched: Dict[str, List[np.ndarray]] = {}
    for name, cols, block in pair_gradients(model, task_data, example, j, k):
        M = getattr(model, name)
        np.add.at(M, (slice(None), cols), (-gamma * weight * block).astype(M.dtype))
        touched.setdefault(name, []).append(cols)
    touched_cols = {name: np.unique(np.concatenate(cols)) for name, cols in touched.items()}
    model.project_columns(touched_cols)
    return StepOutcome(True, j, k, trials, weight, touched_cols)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def init_model(d: int, n_artists: int, n_tags: int, feat_dim: int, C: float,
               rng: np.random.Generator) -> EmbeddingModel:
    """Gaussian entries with mean 0 and standard deviation 1/√d, then projected."""
    if d < 1 or feat_dim < 1 or n_artists < 0 or n_tags < 0:
        raise ConfigError("model dimensions must be positive")
    scale = 1.0 / math.sqrt(d)
    A = rng.normal(0.0, scale, size=(d, n_artists))
    T = rng.normal(0.0, scale, size=(d, n_tags))
    V = rng.normal(0.0, scale, size=(d, feat_dim))
    model = EmbeddingModel(A, T, V, C)
    model.project_columns()
    return model


@dataclass
class Checkpoint:
    step: int
    precision: Dict[TaskId, float]
    mean: float


@dataclass
class TrainReport:
    steps_taken: int
    checkpoints: List[Checkpoint]
    model: EmbeddingModel
    best_step: int
    updates: int
    wall_time: float = field(default=0.0, compare=False)

    @property
    def best_precision(self) -> float:
        return max((c.mean for c in self.checkpoints), default=float("nan"))


def usable_tasks(tasks: Sequence[TaskId], artist_similarity: Optional[ArtistSimilarity]) -> List[TaskId]:
    """Drop sa (with a warning) when no similarity data exists and other tasks remain."""
    tasks = list(tasks)
    if TaskId.SIM_ARTIST in tasks and not artist_similarity:
        if len(tasks) == 1:
            raise UnusableTaskError("task sa requires artist similarity data")
        logger.warning("No artist similarity data: disabling task sa")
        tasks.remove(TaskId.SIM_ARTIST)
    return tasks


def sample_task(tasks: Sequence[TaskId], rng: np.random.Generator) -> TaskId:
    """Uniform over the configured tasks."""
    return tasks[rng.integers(len(tasks))]


def train(
    dataset: Dataset,
    valid: Dataset,
    config: TrainConfig,
    artist_similarity: Optional[ArtistSimilarity] = None,
) -> TrainReport:
    """Train until validation precision@k stops improving or max_steps is reached.

    Returns the model of the best checkpoint.
    """
    started = time.perf_counter()
    if len(valid) == 0:
        raise UnusableTaskError("validation set is empty")
    tasks = usable_tasks(config.tasks, artist_similarity)
    task_data = {t: build_task_data(t, dataset, artist_similarity) for t in tasks}

    rng = np.random.default_rng(config.seed)
    model = init_model(config.d, dataset.n_artists, dataset.n_tags, dataset.feat_dim, config.C, rng)
    eval_every = config.resolved_eval_every(len(dataset))

    best_model = model.copy()
    best_score = -math.inf
    best_step = 0
    bad_checks = 0
    checkpoints: List[Checkpoint] = []
    updates = 0
    steps_taken = 0

    for step in range(1, config.max_steps + 1):
        task = sample_task(tasks, rng)
        td = task_data[task]
        example = td.examples[rng.integers(len(td.examples))]
        outcome = sgd_step(model, td, example, config.loss, config.alpha, config.gamma, rng,
                           candidate_pool=config.candidate_pool)
        updates += outcome.updated
        steps_taken = step

        if step % eval_every and step != config.max_steps:
            continue

        model.project_columns()
        result = evaluate(model, valid, tasks, [config.k_eval], artist_similarity=artist_similarity)
        precision = {t: result.precision[t][config.k_eval] for t in tasks}
        mean = float(np.mean([precision[t] for t in tasks]))
        checkpoints.append(Checkpoint(step, precision, mean))
        logger.info("step %d: mean p@%d = %.4f (%s)", step, config.k_eval, mean,
                    ", ".join(f"{t.value}={p:.4f}" for t, p in precision.items()))

        if mean > best_score:
            best_score, best_step, best_model = mean, step, model.copy()
            bad_checks = 0
        else:
            bad_checks += 1
            if bad_checks >= config.patience:
                logger.info("No improvement for %d checks, stopping at step %d", bad_checks, step)
                break

    return TrainReport(
        steps_taken=steps_taken,
        checkpoints=checkpoints,
        model=best_model,
        best_step=best_step,
        updates=updates,
        wall_time=time.perf_counter() - started,
    )


def train_ensemble(
    dataset: Dataset,
    valid: Dataset,
    config: TrainConfig,
    n_members: int,
    artist_similarity: Optional[ArtistSimilarity] = None,
    n_jobs: int = 1,
) -> List[EmbeddingModel]:
    """Train independent members with seeds seed, seed+1, …; members may run in parallel."""
    if n_members < 1:
        raise ConfigError("an ensemble needs at least one member")
    reports = Parallel(n_jobs=n_jobs)(
        delayed(train)(dataset, valid, replace(config, seed=config.seed + m), artist_similarity)
        for m in range(n_members)
    )
    return [r.model for r in reports]
