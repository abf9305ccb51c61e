"""Prediction metrics and comparison reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, UndefinedAUCError


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative (ties count half).

    Uses the rank-sum identity with average ranks for ties.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InputError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def mean_bce(predictions, labels, eps: float = 1e-7) -> float:
    """Mean over instances of the per-instance BCE summed across topics.

    A 1-D input is treated as N instances of a single topic.
    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise InputError(f"prediction shape {p.shape} differs from label shape {y.shape}")
    if p.ndim == 1:
        p, y = p[:, None], y[:, None]
    pc = np.clip(p, eps, 1.0 - eps)
    per_instance = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum(axis=1)
    return float(per_instance.mean())


@dataclass(frozen=True)
class EvalReport:
    model: str
    bce: float
    auc: float
    mean_uplift: float | None
    instances: int
    positives: int
    negatives: int
    uplift_scorer: str = ""


def predict_dataset(model, data) -> np.ndarray:
    if hasattr(model, "predict_batch"):
        return np.asarray(model.predict_batch(data))
    return np.stack([model.predict(data.R[i], data.E_T[i], data.E_inf[i]) for i in range(len(data))])


def slate_uplifts(model, data, n_slate: int, scoring_model=None) -> np.ndarray:
    """Greedy slate per instance from ``model``, scored by ``scoring_model``.

    ``scoring_model`` defaults to ``model``.  Objects with a ``bind(user)``
    method (per-user ground truth) are bound to each instance's user first.
    """
    from .optimizer import SlateProblem, evaluate_slates, greedy_slate

    scorer = model if scoring_model is None else scoring_model
    out = np.empty(len(data))
    for i in range(len(data)):
        res = greedy_slate(SlateProblem(model, data.E_T[i], data.E_inf[i], n_slate))
        s = scorer.bind(int(data.users[i])) if hasattr(scorer, "bind") else scorer
        probs = evaluate_slates(s, res.R_star[None], data.E_T[i], data.E_inf[i])[0]
        out[i] = float(probs @ res.R_star)
    return out


def evaluate_model(model, data, n_slate: int | None = None, scoring_model=None, name: str | None = None) -> EvalReport:
    if len(data) == 0:
        raise InputError("evaluation dataset is empty")
    p = predict_dataset(model, data)
    y = data.y
    positives = int(y.sum())
    mean_uplift = None
    scorer_name = ""
    if n_slate is not None:
        mean_uplift = float(slate_uplifts(model, data, n_slate, scoring_model).mean())
        scorer = model if scoring_model is None else scoring_model
        scorer_name = getattr(scorer, "name", type(scorer).__name__)
    return EvalReport(
        name or getattr(model, "name", type(model).__name__),
        mean_bce(p, y),
        auc(p, y),
        mean_uplift,
        len(data),
        positives,
        y.size - positives,
        scorer_name,
    )


def per_topic_breakdown(model, data) -> list[dict]:
    """Per-topic AUC (NaN when a topic has one class), mean BCE and positives."""
    p = predict_dataset(model, data)
    rows = []
    for j in range(data.num_topics):
        try:
            a = auc(p[:, j], data.y[:, j])
        except UndefinedAUCError:
            a = math.nan
        rows.append({"topic": j, "auc": a, "bce": mean_bce(p[:, j], data.y[:, j]), "positives": int(data.y[:, j].sum())})
    return rows


REPORT_HEADER = ("model", "bce", "auc", "mean_uplift", "instances")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def write_report(path: str | Path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow([r.model, _fmt(r.bce), _fmt(r.auc), _fmt(r.mean_uplift), r.instances])


def read_report(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_topic_breakdown(path: str | Path, model_rows: dict[str, list[dict]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("model", "topic", "auc", "bce", "positives"))
        for name, rows in model_rows.items():
            for row in rows:
                w.writerow([name, row["topic"], _fmt(row["auc"]), _fmt(row["bce"]), row["positives"]])
