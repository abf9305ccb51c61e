import math

import numpy as np
import pytest

from choiceslate.errors import BadMagicError, DimensionMismatchError, InputError, TruncatedFileError
from choiceslate.logit import (
    LogitConfig,
    LogitModel,
    LogitParams,
    load_logit,
    predict_logit,
    save_logit,
    topic_features,
    train_logit,
)
from choiceslate.pipeline import InputBatch


def make_batch(seed, N=200, J=4, T=3):
    rng = np.random.default_rng(seed)
    E_T = rng.integers(0, 2, (N, J, T)).astype(float)
    E_inf = rng.random((N, J))
    R = rng.integers(0, 2, (N, J)).astype(float)
    true_w = rng.normal(size=(J, T + 3))
    p = predict_logit(LogitParams(true_w), R, E_T, E_inf)
    y = (rng.random((N, J)) < p).astype(float)
    return InputBatch(E_T, E_inf, R, y, np.arange(N), np.full(N, T)), true_w


def test_features_layout():
    X = topic_features([1, 0], [[1, 0, 1], [0, 0, 1]], [0.5, 0.25])
    assert X.tolist() == [[1, 1, 0.5, 1, 0, 1], [1, 0, 0.25, 0, 0, 1]]


def test_scalar_oracle():
    w = np.array([[0.5, -1.0, 2.0, 0.1, 0.2]])
    p = predict_logit(LogitParams(w), [1.0], [[1.0, 0.0]], [0.25])
    s = 0.5 - 1.0 + 2.0 * 0.25 + 0.1
    assert p[0] == pytest.approx(1 / (1 + math.exp(-s)), abs=1e-15)


def test_zero_weights_give_half():
    p = predict_logit(LogitParams(np.zeros((3, 5))), np.ones(3), np.ones((3, 2)), np.ones(3))
    assert p.tolist() == [0.5, 0.5, 0.5]


def test_degenerate_topic():
    data, _ = make_batch(0)
    data.y[:, 2] = 0.0
    params = train_logit(data)
    assert params.degenerate == (False, False, True, False)
    assert np.all(np.isfinite(params.weights))
    assert predict_logit(params, data.R, data.E_T, data.E_inf)[:, 2].max() < 0.05


def test_separable_topic_stays_finite():
    data, _ = make_batch(1)
    data.y[:, 0] = data.R[:, 0]
    params = train_logit(data)
    p = predict_logit(params, data.R, data.E_T, data.E_inf)[:, 0]
    assert np.all(np.isfinite(params.weights))
    assert np.all((p > 0.5) == (data.R[:, 0] == 1))


def test_topics_independent():
    data, _ = make_batch(2)
    params = train_logit(data)
    other = InputBatch(data.E_T.copy(), data.E_inf.copy(), data.R.copy(), data.y.copy(), data.users, data.periods)
    other.R[:, 1:] = 1 - other.R[:, 1:]
    other.y[:, 1:] = 1 - other.y[:, 1:]
    changed = train_logit(other)
    np.testing.assert_allclose(changed.weights[0], params.weights[0], atol=1e-9)
    # prediction for topic 0 ignores other topics' inputs
    R2 = data.R[:5].copy()
    R2[:, 1:] = 1 - R2[:, 1:]
    np.testing.assert_array_equal(
        predict_logit(params, R2, data.E_T[:5], data.E_inf[:5])[:, 0],
        predict_logit(params, data.R[:5], data.E_T[:5], data.E_inf[:5])[:, 0],
    )


def test_converges_regardless_of_start():
    data, _ = make_batch(3)
    a = train_logit(data, LogitConfig(seed=0))
    b = train_logit(data, LogitConfig(seed=1))
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-6)


def test_recovers_generating_weights():
    data, true_w = make_batch(4, N=20000, J=2)
    params = train_logit(data, LogitConfig(ridge=0.0))
    np.testing.assert_allclose(params.weights, true_w, atol=0.15)


def test_model_wrapper_agrees():
    data, _ = make_batch(5)
    model = LogitModel(train_logit(data))
    batch = model.predict_batch(data)
    assert np.array_equal(model.predict(data.R[3], data.E_T[3], data.E_inf[3]), batch[3])
    many = model.predict_many(data.R[:4], data.E_T[0], data.E_inf[0])
    assert many.shape == (4, 4)
    np.testing.assert_array_equal(many[0], batch[0])


def test_errors():
    with pytest.raises(InputError):
        predict_logit(LogitParams(np.zeros((3, 5))), np.ones(4), np.ones((4, 2)), np.ones(4))
    empty = InputBatch(np.zeros((0, 2, 1)), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0))
    with pytest.raises(InputError):
        train_logit(empty)


def test_io_roundtrip_and_errors(tmp_path):
    data, _ = make_batch(6)
    params = train_logit(data)
    path = tmp_path / "l.blgt"
    save_logit(params, path)
    back = load_logit(path, expected_J=4, expected_T=3)
    assert np.array_equal(back.weights, params.weights)
    with pytest.raises(DimensionMismatchError):
        load_logit(path, expected_J=5)
    raw = path.read_bytes()
    (tmp_path / "bad").write_bytes(b"ZZZZZ" + raw[5:])
    with pytest.raises(BadMagicError):
        load_logit(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-3])
    with pytest.raises(TruncatedFileError):
        load_logit(tmp_path / "short")
