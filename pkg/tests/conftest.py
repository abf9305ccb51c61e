from collections import Counter
from math import comb

import numpy as np
import pytest

from choiceslate.net import ModelConfig, init_params
from choiceslate.pipeline import build_all_inputs, split_periods, split_train_valid_test
from choiceslate.simulator import SimConfig, generate_log

ACCEPTANCE_LINES: list[str] = []


def adjusted_rand_index(a, b) -> float:
    """ARI from the contingency table (independent of any clustering code)."""
    n = len(a)
    pairs = Counter(zip(a, b))
    sum_cells = sum(comb(c, 2) for c in pairs.values())
    sum_a = sum(comb(c, 2) for c in Counter(a).values())
    sum_b = sum(comb(c, 2) for c in Counter(b).values())
    expected = sum_a * sum_b / comb(n, 2)
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def random_instance(seed, J=6, T=4, H=3, L=2, B=4, scale=3.0):
    """Parameters and inputs for a small randomized network check."""
    cfg = ModelConfig(J=J, T=T, H=H, L=L, seed=seed)
    params = init_params(cfg)
    for k in params.weights:
        params.weights[k] = params.weights[k] * scale
    rng = np.random.default_rng(1000 + seed)
    E_T = rng.integers(0, 2, (B, J, T)).astype(float)
    E_inf = rng.random((B, J))
    R = rng.integers(0, 2, (B, J)).astype(float)
    y = rng.integers(0, 2, (B, J)).astype(float)
    return params, (E_T, E_inf, R), y


@pytest.fixture(scope="session")
def small_sim():
    cfg = SimConfig(num_users=150, num_topics=12, group_size=4, seed=11)
    log, truth = generate_log(cfg)
    tensor = split_periods(log, cfg.grid, cfg.num_topics)
    splits = split_train_valid_test(build_all_inputs(tensor, 4))
    return cfg, log, truth, tensor, splits


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
