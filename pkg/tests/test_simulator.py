import numpy as np
import pytest

from choiceslate.errors import ConfigError, InputError
from choiceslate.pipeline import split_periods
from choiceslate.simulator import (
    GroundTruth,
    SimConfig,
    generate_log,
    ground_truth_auc_bound,
    read_truth,
    write_truth,
)


def test_empirical_rate_matches_truth():
    cfg = SimConfig(num_users=300, num_topics=10, substitution_strength=0.0, recency_weights=(0.0,), seed=3)
    log, truth = generate_log(cfg)
    tensor = split_periods(log, cfg.grid, cfg.num_topics)
    r, e = tensor.r.astype(float), tensor.e.astype(float)
    q = truth.aligned(tensor.user_ids).q
    expected = (q * r).sum()
    se = np.sqrt((q * (1 - q) * r).sum())
    assert abs(e.sum() - expected) < 3 * se
    # with no recency or substitution the probability is constant over time
    assert np.allclose(q, q[:, :1, :])


def test_exposure_rate_respected():
    cfg = SimConfig(num_users=200, num_topics=10, seed=4)
    log, _ = generate_log(cfg)
    n = 200 * 10 * cfg.num_periods
    rate = len(log) / n
    assert abs(rate - 0.4) < 3 * np.sqrt(0.4 * 0.6 / n)


def test_zero_exposure_gives_empty_log():
    log, truth = generate_log(SimConfig(num_users=5, num_topics=4, exposure_rate=0.0))
    assert len(log) == 0 and truth.q.shape == (5, 14, 4)


def test_deterministic_and_seed_sensitive():
    cfg = SimConfig(num_users=20, num_topics=6, seed=7)
    (a, ta), (b, tb) = generate_log(cfg), generate_log(cfg)
    assert np.array_equal(a.tweet_id, b.tweet_id)
    np.testing.assert_array_equal(a.engagement_ts["retweet"], b.engagement_ts["retweet"])
    assert np.array_equal(ta.q, tb.q)
    c, _ = generate_log(SimConfig(num_users=20, num_topics=6, seed=8))
    assert len(c) != len(a) or not np.array_equal(c.tweet_id, a.tweet_id)


def test_users_independent_of_population_size():
    # per-user streams: the first users do not change when more are added
    small, _ = generate_log(SimConfig(num_users=5, num_topics=6, seed=2))
    big, _ = generate_log(SimConfig(num_users=8, num_topics=6, seed=2))
    keep = np.isin(big.user_id, small.user_id)
    assert np.array_equal(big.tweet_id[keep], small.tweet_id)


def test_substitution_matrix_blocks():
    S = SimConfig(num_topics=6, group_size=3, substitution_strength=2.0).substitution_matrix
    assert S[0, 1] == -2.0 and S[0, 3] == 0.0 and S[0, 0] == 0.0
    assert np.array_equal(S, S.T)


def test_config_errors():
    with pytest.raises(ConfigError, match="diagonal"):
        SimConfig(num_topics=2, substitution=((1.0, 0.0), (0.0, 0.0)))
    with pytest.raises(ConfigError):
        SimConfig(exposure_rate=1.5)
    with pytest.raises(ConfigError, match="saturated"):
        generate_log(SimConfig(num_users=2, num_topics=3, base_offset=60.0))


def test_ceiling_near_half_for_constant_probabilities():
    # full exposure so unexposed cells (score 0, never engaged) do not enter the pool
    cfg = SimConfig(
        num_users=100, num_topics=5, archetype_scale=0.0, user_noise=0.0,
        substitution_strength=0.0, recency_weights=(0.0,), exposure_rate=1.0, seed=1,
    )
    log, truth = generate_log(cfg)
    tensor = split_periods(log, cfg.grid, cfg.num_topics)
    assert ground_truth_auc_bound(truth, tensor) == pytest.approx(0.5, abs=0.05)


def test_ceiling_near_one_for_extreme_preferences():
    cfg = SimConfig(num_users=100, num_topics=5, archetype_scale=8.0, user_noise=4.0, seed=1)
    log, truth = generate_log(cfg)
    tensor = split_periods(log, cfg.grid, cfg.num_topics)
    assert ground_truth_auc_bound(truth, tensor) > 0.95


def test_user_truth_prediction():
    cfg = SimConfig(num_users=3, num_topics=4, group_size=2, seed=0)
    _, truth = generate_log(cfg)
    user = truth.bind(1)
    R = np.array([1.0, 1.0, 0.0, 1.0])
    E_T = np.zeros((4, 4))
    p = user.predict(R, E_T)
    assert p[2] == 0.0
    expected = 1 / (1 + np.exp(-(truth.base[1] + R @ truth.substitution)))
    np.testing.assert_allclose(p, R * expected, atol=1e-15)
    with pytest.raises(InputError):
        user.predict(R, np.zeros((4, 2)))


def test_truth_roundtrip_and_align(tmp_path):
    _, truth = generate_log(SimConfig(num_users=6, num_topics=4, seed=5))
    path = tmp_path / "truth.bin"
    write_truth(path, truth)
    back = read_truth(path)
    assert isinstance(back, GroundTruth) and back.user_ids == truth.user_ids
    for f in ("q", "base", "substitution", "recency"):
        assert np.array_equal(getattr(back, f), getattr(truth, f))
    sub = back.aligned(["u00003", "u00001"])
    assert np.array_equal(sub.base[0], truth.base[3])
    with pytest.raises(InputError):
        back.aligned(["nobody"])
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(InputError):
        read_truth(path)
