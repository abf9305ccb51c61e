"""Slate selection: choose n topics maximising the summed engagement probability.

The objective for a slate S is ``sum_{j in S} p_j(R_S)`` where R_S is the
indicator vector of S.  Because a choice-aware model's probabilities depend
on the whole slate, the probabilities of already-chosen topics are
re-evaluated whenever a candidate is added.

Models only need ``predict(R, E_T, E_inf) -> (J,)``; a ``predict_many(Rs,
E_T, E_inf) -> (M, J)`` method is used when present to score candidates in
one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice
from typing import Protocol

import numpy as np

from .errors import InputError, SearchCapExceeded

DEFAULT_SEARCH_CAP = 1_000_000


class Predictor(Protocol):
    def predict(self, R, E_T, E_inf) -> np.ndarray: ...


@dataclass(frozen=True)
class SlateProblem:
    model: Predictor
    E_T: np.ndarray
    E_inf: np.ndarray
    n: int

    @property
    def J(self) -> int:
        return len(self.E_inf)

    def check(self) -> None:
        if not 1 <= self.n <= self.J:
            raise InputError(f"slate size n={self.n} must lie in [1, J={self.J}]")


@dataclass(frozen=True)
class SlateResult:
    chosen: tuple[int, ...]
    R_star: np.ndarray
    probs: np.ndarray
    uplift: float
    method: str


def uplift(probs, R) -> float:
    """Summed probability over the shown topics."""
    probs = np.asarray(probs, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if probs.shape != R.shape:
        raise InputError(f"probs shape {probs.shape} differs from R shape {R.shape}")
    return float(probs @ R)


def evaluate_slates(model: Predictor, Rs: np.ndarray, E_T, E_inf) -> np.ndarray:
    if hasattr(model, "predict_many"):
        return np.asarray(model.predict_many(Rs, E_T, E_inf))
    return np.stack([np.asarray(model.predict(R, E_T, E_inf)) for R in Rs])


def _indicators(sets, J: int) -> np.ndarray:
    Rs = np.zeros((len(sets), J))
    for row, s in enumerate(sets):
        Rs[row, list(s)] = 1.0
    return Rs


def _result(problem: SlateProblem, chosen, method: str) -> SlateResult:
    chosen = tuple(sorted(int(c) for c in chosen))
    R = _indicators([chosen], problem.J)[0]
    probs = evaluate_slates(problem.model, R[None], problem.E_T, problem.E_inf)[0]
    return SlateResult(chosen, R, probs, uplift(probs, R), method)


def greedy_slate(problem: SlateProblem, frozen_marginals: bool = False) -> SlateResult:
    """Add one topic at a time, each time picking the best extension.

    Ties go to the lowest topic id.  With ``frozen_marginals`` a candidate is
    scored by its own probability plus the probabilities the chosen topics
    had when they were added, instead of re-evaluating them.
    """
    problem.check()
    J = problem.J
    chosen: list[int] = []
    frozen_total = 0.0
    for _ in range(problem.n):
        candidates = [c for c in range(J) if c not in chosen]
        Rs = _indicators([chosen + [c] for c in candidates], J)
        P = evaluate_slates(problem.model, Rs, problem.E_T, problem.E_inf)
        if frozen_marginals:
            own = P[np.arange(len(candidates)), candidates]
            best = int(np.argmax(frozen_total + own))
            frozen_total += own[best]
        else:
            best = int(np.argmax((P * Rs).sum(axis=1)))
        chosen.append(candidates[best])
    return _result(problem, chosen, "greedy")


def exhaustive_slate(problem: SlateProblem, cap: int = DEFAULT_SEARCH_CAP, chunk: int = 2048) -> SlateResult:
    """Score every n-subset; ties go to the lexicographically smallest subset."""
    problem.check()
    J, n = problem.J, problem.n
    total = math.comb(J, n)
    if total > cap:
        raise SearchCapExceeded(f"C({J},{n}) = {total} subsets exceeds the cap of {cap}")
    best_score, best_set = -np.inf, None
    it = combinations(range(J), n)
    while True:
        sets = list(islice(it, chunk))
        if not sets:
            break
        Rs = _indicators(sets, J)
        scores = (evaluate_slates(problem.model, Rs, problem.E_T, problem.E_inf) * Rs).sum(axis=1)
        k = int(np.argmax(scores))
        if scores[k] > best_score:
            best_score, best_set = scores[k], sets[k]
    return _result(problem, best_set, "exhaustive")


def top_n_slate(problem: SlateProblem) -> SlateResult:
    """Shortcut for models whose probabilities ignore R: the n most likely topics."""
    problem.check()
    p = evaluate_slates(problem.model, np.ones((1, problem.J)), problem.E_T, problem.E_inf)[0]
    order = sorted(range(problem.J), key=lambda j: (-p[j], j))
    return _result(problem, order[: problem.n], "top_n")


SOLVERS = {"greedy": greedy_slate, "exhaustive": exhaustive_slate, "top_n": top_n_slate}


def optimize_slates(model: Predictor, data, n: int, method: str = "greedy") -> list[SlateResult]:
    """Solve one slate problem per instance of an InputBatch."""
    try:
        solve = SOLVERS[method]
    except KeyError:
        raise InputError(f"unknown slate method {method!r}; choose from {sorted(SOLVERS)}") from None
    return [solve(SlateProblem(model, data.E_T[i], data.E_inf[i], n)) for i in range(len(data))]
