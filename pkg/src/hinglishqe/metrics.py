"""Evaluation metrics over discrete class predictions: F1, Cohen's kappa,
MSE and accuracy, plus report formatting.

F1 is averaged either macro (unweighted mean over classes present in gold
or predictions) or weighted (gold-support weighted). Kappa uses
kappa = (p_o - p_e) / (1 - p_e) with marginals over observed classes and
is undefined exactly when the expected agreement p_e equals 1 (both sides
constant on the same class). MSE is computed on task-scale values
(ratings 1-10, disagreements 0-9), not on class indices.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import TASK_AVERAGE_RATING, TASKS

F1_AVERAGING_MODES = ("macro", "weighted")

# Published results of the original shared-task submission this package
# reproduces, printed next to new evaluations for comparison.
REFERENCE_RESULTS = {
    (TASK_AVERAGE_RATING, "validation"): {"n": 395, "f1": 0.09899, "kappa": -0.01521, "mse": 6.00},
    (TASK_AVERAGE_RATING, "test"): {"n": 791, "f1": 0.11582, "kappa": 0.00337, "mse": 6.00},
    ("disagreement", "validation"): {"n": 395, "f1": 0.21622, "kappa": None, "mse": 5.00},
    ("disagreement", "test"): {"n": 791, "f1": 0.18331, "kappa": None, "mse": 5.00},
}


@dataclass
class MetricsReport:
    n: int
    f1: float
    kappa: Optional[float]  # None when expected agreement is 1
    mse: float
    accuracy: float
    f1_averaging: str


def _check_pair(preds, gold):
    if len(preds) != len(gold):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(gold)} gold labels")
    if len(gold) == 0:
        raise ValueError("empty input")


def f1_score(preds, gold, averaging: str = "weighted") -> float:
    """Averaged per-class F1; zero substituted where a denominator is zero."""
    _check_pair(preds, gold)
    if averaging not in F1_AVERAGING_MODES:
        raise ValueError(f"unknown averaging {averaging!r}")
    classes = sorted(set(preds) | set(gold))
    scores, supports = [], []
    for c in classes:
        tp = sum(1 for p, g in zip(preds, gold) if p == c and g == c)
        fp = sum(1 for p, g in zip(preds, gold) if p == c and g != c)
        fn = sum(1 for p, g in zip(preds, gold) if p != c and g == c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        scores.append(f1)
        supports.append(tp + fn)
    if averaging == "macro":
        return sum(scores) / len(scores)
    return sum(f * s for f, s in zip(scores, supports)) / len(gold)


def cohens_kappa(preds, gold) -> Optional[float]:
    """Chance-corrected agreement; None when p_e = 1 (degenerate marginals)."""
    _check_pair(preds, gold)
    n = len(gold)
    agree = sum(1 for p, g in zip(preds, gold) if p == g)
    classes = set(preds) | set(gold)
    # integer arithmetic keeps the p_e = 1 test exact
    expected_num = sum(
        sum(1 for p in preds if p == c) * sum(1 for g in gold if g == c)
        for c in classes)
    if expected_num == n * n:
        return None
    p_o = agree / n
    p_e = expected_num / (n * n)
    return (p_o - p_e) / (1.0 - p_e)


def mse(preds, gold) -> float:
    """Mean squared error over task-scale values."""
    _check_pair(preds, gold)
    return float(np.mean((np.asarray(preds, dtype=float) - np.asarray(gold, dtype=float)) ** 2))


def accuracy(preds, gold) -> float:
    _check_pair(preds, gold)
    return sum(1 for p, g in zip(preds, gold) if p == g) / len(gold)


def label_to_value(index: int, task: str) -> int:
    """Map a class index back to the task scale (rating 1-10 / disagreement 0-9)."""
    return index + 1 if task == TASK_AVERAGE_RATING else index


def report_from_predictions(pred_labels, gold_labels, task: str,
                            f1_averaging: str = "weighted") -> MetricsReport:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    pred_values = [label_to_value(p, task) for p in pred_labels]
    gold_values = [label_to_value(g, task) for g in gold_labels]
    return MetricsReport(
        n=len(gold_labels),
        f1=f1_score(pred_labels, gold_labels, f1_averaging),
        kappa=cohens_kappa(pred_labels, gold_labels),
        mse=mse(pred_values, gold_values),
        accuracy=accuracy(pred_labels, gold_labels),
        f1_averaging=f1_averaging,
    )


def evaluate(params, examples, task: str, vocabs, embeddings,
             f1_averaging: str = "weighted") -> MetricsReport:
    """Encode, predict and score a labeled example list with a trained model."""
    from .textprep import encode_example
    from .training import predict

    if not examples:
        raise ValueError("empty input")
    encoded = [encode_example(e, task, vocabs, embeddings, params.config.max_len)
               for e in examples]
    preds = predict(params, encoded)
    gold = [enc.label for enc in encoded]
    return report_from_predictions(preds, gold, task, f1_averaging)


def format_report_lines(report: MetricsReport) -> str:
    """Machine-readable key=value block."""
    kappa = "undefined" if report.kappa is None else f"{report.kappa:.17g}"
    return "\n".join([
        f"n={report.n}",
        f"f1={report.f1:.17g}",
        f"kappa={kappa}",
        f"mse={report.mse:.17g}",
        f"accuracy={report.accuracy:.17g}",
        f"f1_averaging={report.f1_averaging}",
    ])


def format_report_table(report: MetricsReport, task: str, title: str = "evaluation") -> str:
    """Human-readable table with a rounded MSE column for comparisons."""
    kappa = "undefined" if report.kappa is None else f"{report.kappa:.5f}"
    rows = [
        f"{title}: task={task} n={report.n} (f1 averaging: {report.f1_averaging})",
        f"  {'metric':<14}{'value':>12}{'rounded':>10}",
        f"  {'f1':<14}{report.f1:>12.5f}{report.f1:>10.2f}",
        f"  {'kappa':<14}{kappa:>12}{'':>10}",
        f"  {'mse':<14}{report.mse:>12.5f}{report.mse:>10.2f}",
        f"  {'accuracy':<14}{report.accuracy:>12.5f}{report.accuracy:>10.2f}",
    ]
    reference = [(split, REFERENCE_RESULTS[(task, split)])
                 for split in ("validation", "test") if (task, split) in REFERENCE_RESULTS]
    if reference:
        rows.append("  reference results (original submission):")
        for split, ref in reference:
            kappa_ref = "n/a" if ref["kappa"] is None else f"{ref['kappa']:.5f}"
            rows.append(f"    {split:<12} n={ref['n']:<5} f1={ref['f1']:.5f} "
                        f"kappa={kappa_ref} mse={ref['mse']:.2f}")
    return "\n".join(rows)
