"""
Directional studies on synthetic data.

Each study trains on seeded latent-factor datasets and reports test
precision, so the comparative claims (WARP over AUC, joint over single-task
training, ensembles over members) can be checked at desk scale. The rank
estimator study measures how far the sampled rank ⌊(Y−1)/N⌋ is from the
true margin rank.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.embedding_model import EnsembleModel, TaskId
from core.evaluation import evaluate
from core.losses import AlphaScheme, LossKind, big_L, expected_estimated_loss, sample_violator
from core.synthgen import SynthSpec, gen_latent_with_truth
from core.trainer import TrainConfig, train, train_ensemble

logger = logging.getLogger(__name__)


@dataclass
class StudyResult:
    """Per-arm lists of test p@k, one entry per seed."""

    name: str
    k: int
    arms: Dict[str, List[float]] = field(default_factory=dict)

    def add(self, arm: str, value: float):
        self.arms.setdefault(arm, []).append(float(value))

    def median(self, arm: str) -> float:
        return float(np.median(self.arms[arm]))

    def summary(self) -> str:
        lines = [f"{self.name} (median p@{self.k} over {len(next(iter(self.arms.values()), []))} seeds)"]
        for arm in self.arms:
            values = ", ".join(f"{v:.3f}" for v in self.arms[arm])
            lines.append(f"  {arm:<24}{self.median(arm):.4f}   [{values}]")
        return "\n".join(lines)


def _test_precision(model, test, tasks, k, similarity=None) -> Dict[TaskId, float]:
    result = evaluate(model, test, tasks, [k], artist_similarity=similarity)
    return {t: result.precision[t][k] for t in tasks}


def compare_losses(spec: SynthSpec, config: TrainConfig, seeds: Sequence[int], k: int = 1) -> StudyResult:
    """WARP (with the configured α scheme) against AUC at equal step budgets, tag prediction."""
    study = StudyResult("warp-vs-auc", k)
    for seed in seeds:
        train_set, valid, test, _, _ = gen_latent_with_truth(replace(spec, seed=seed))
        for loss in (LossKind.WARP, LossKind.AUC):
            cfg = replace(config, loss=loss, seed=seed, tasks=(TaskId.TAG_PRED,))
            report = train(train_set, valid, cfg)
            p = _test_precision(report.model, test, cfg.tasks, k)[TaskId.TAG_PRED]
            study.add(loss.value, p)
            logger.info("seed %d %s: p@%d=%.4f", seed, loss.value, k, p)
    return study


def compare_multitask(
    spec: SynthSpec,
    config: TrainConfig,
    seeds: Sequence[int],
    tasks: Sequence[TaskId] = (TaskId.ARTIST_PRED, TaskId.TAG_PRED, TaskId.SIM_SONG),
    k: int = 1,
) -> StudyResult:
    """Joint training on all `tasks` against one model per task; arms are 'joint:<t>' and 'single:<t>'."""
    study = StudyResult("multitask", k)
    tasks = tuple(TaskId(t) for t in tasks)
    for seed in seeds:
        train_set, valid, test, _, similarity = gen_latent_with_truth(replace(spec, seed=seed))
        joint = train(train_set, valid, replace(config, seed=seed, tasks=tasks), similarity)
        joint_p = _test_precision(joint.model, test, tasks, k, similarity)
        for t in tasks:
            single = train(train_set, valid, replace(config, seed=seed, tasks=(t,)), similarity)
            study.add(f"joint:{t.value}", joint_p[t])
            study.add(f"single:{t.value}", _test_precision(single.model, test, (t,), k, similarity)[t])
    return study


def ensemble_vs_members(
    spec: SynthSpec,
    config: TrainConfig,
    seeds: Sequence[int],
    n_members: int = 3,
    k: int = 1,
) -> StudyResult:
    """Arms: 'ensemble', 'member-median' and 'member-worst' (member p@k within each seed)."""
    study = StudyResult("ensemble", k)
    task = config.tasks[0]
    for seed in seeds:
        train_set, valid, test, _, similarity = gen_latent_with_truth(replace(spec, seed=seed))
        members = train_ensemble(train_set, valid, replace(config, seed=seed * 1000), n_members, similarity)
        member_p = [_test_precision(m, test, (task,), k, similarity)[task] for m in members]
        study.add("ensemble", _test_precision(EnsembleModel(members), test, (task,), k, similarity)[task])
        study.add("member-median", float(np.median(member_p)))
        study.add("member-worst", min(member_p))
    return study


@dataclass
class BiasRow:
    Y: int
    n_negatives: int
    true_rank: int
    expected_estimate: float
    empirical_estimate: float
    loss_at_true_rank: float
    expected_loss: float
    found_fraction: float


def rank_estimator_bias(
    Y: int,
    true_ranks: Sequence[int],
    n_positives: int = 1,
    n_runs: int = 10000,
    scheme: Optional[AlphaScheme] = None,
    seed: int = 0,
) -> List[BiasRow]:
    """Compare E[⌊(Y−1)/N⌋] (exact and sampled) with the true margin rank.

    Label 0 is the positive with score 0; the first `r` negatives score 0
    (inside the margin) and the rest score −5, so the margin rank is r.
    """
    scheme = scheme or AlphaScheme.harmonic()
    rng = np.random.default_rng(seed)
    positives = list(range(n_positives))
    n_negatives = Y - n_positives
    rows = []
    for r in true_ranks:
        if not 1 <= r <= n_negatives:
            continue
        scores = np.full(Y, -5.0)
        scores[:n_positives + r] = 0.0
        estimates = []
        for _ in range(n_runs):
            sample = sample_violator(lambda i: scores[i], positives, 0, Y, rng, f_j=0.0)
            if sample is not None:
                estimates.append(sample.rank_estimate)
        rows.append(BiasRow(
            Y=Y,
            n_negatives=n_negatives,
            true_rank=r,
            expected_estimate=expected_estimated_loss(Y, n_negatives, r),
            empirical_estimate=float(np.mean(estimates)) if estimates else float("nan"),
            loss_at_true_rank=big_L(r, scheme),
            expected_loss=expected_estimated_loss(Y, n_negatives, r, scheme),
            found_fraction=len(estimates) / n_runs,
        ))
    return rows
