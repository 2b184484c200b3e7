"""
Report rendering for evaluation and training runs.

TSV reports start with '#' provenance lines (every resolved parameter, in a
fixed order) followed by `task<TAB>k<TAB>precision<TAB>n_queries` rows. No
timestamps or host details go into a report, so identical runs give
byte-identical files.
"""

import sys
from pathlib import Path
from typing import Dict, Optional, Union

from core.evaluation import EvalResult
from core.trainer import TrainReport

COLUMNS = ("task", "k", "precision", "n_queries")


def header_lines(command: str, params: Dict[str, object]) -> list:
    lines = [f"# command={command}"]
    for key in sorted(params):
        lines.append(f"# {key}={params[key]}")
    return lines


def eval_report_tsv(result: EvalResult, command: str, params: Dict[str, object]) -> str:
    lines = header_lines(command, params)
    for task in result.tasks:
        lines.append(f"# skipped_{task.value}={result.n_skipped[task]}")
    lines.append("\t".join(COLUMNS))
    for task in result.tasks:
        for k in result.ks:
            lines.append(f"{task.value}\t{k}\t{result.precision[task][k]:.6f}\t{result.n_queries[task]}")
    return "\n".join(lines) + "\n"


def eval_table(result: EvalResult) -> str:
    """Tasks as rows, p@k as columns."""
    head = "task   " + "".join(f"{'p@' + str(k):>10}" for k in result.ks) + f"{'queries':>10}"
    rows = [head, "-" * len(head)]
    for task in result.tasks:
        cells = "".join(f"{result.precision[task][k]:>10.4f}" for k in result.ks)
        rows.append(f"{task.value:<7}{cells}{result.n_queries[task]:>10}")
    return "\n".join(rows)


def train_report_tsv(report: TrainReport, params: Dict[str, object]) -> str:
    """Validation history: one row per (checkpoint, task)."""
    lines = header_lines("train", params)
    lines.append(f"# steps_taken={report.steps_taken}")
    lines.append(f"# best_step={report.best_step}")
    lines.append(f"# updates={report.updates}")
    lines.append("step\ttask\tprecision")
    for ck in report.checkpoints:
        for task, p in ck.precision.items():
            lines.append(f"{ck.step}\t{task.value}\t{p:.6f}")
    return "\n".join(lines) + "\n"


def write_report(text: str, path: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """Write to `path`, or to stdout when no path is given."""
    if path is None:
        sys.stdout.write(text)
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path
