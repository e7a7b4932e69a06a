import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motif_kinetics.ar import (
    ArConfig,
    ArParameters,
    design_system,
    featurize,
    featurize_corpus,
    fit_ar,
    predict,
    read_features,
    write_features,
)
from motif_kinetics.errors import ConfigError, DataError, PreconditionError
from motif_kinetics.trajectory import Trajectory, TrajectoryCorpus

from oracles import ar_pinv_solution, random_full_rank_var, simulate_var


def rot(a):
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def noisy_segment(seed, n=150, offset=(250.0, 300.0)):
    """Rotation-with-noise segment; its design matrix has full column rank."""
    rng = np.random.default_rng(seed)
    xy = np.zeros((n, 2))
    xy[0] = (10.0, 0.0)
    for t in range(1, n):
        xy[t] = rot(0.4) @ xy[t - 1] + rng.normal(0, 1.0, 2)
    return xy + np.asarray(offset)


def test_parabola_exact_fit():
    t = np.arange(21.0)
    params = fit_ar(np.column_stack([t, t * t]), ArConfig(order=1))
    np.testing.assert_allclose(params.matrices[0], [[1, 0], [2, 1]], atol=1e-8)
    np.testing.assert_allclose(params.intercept, [1, 1], atol=1e-8)
    assert params.residual_rms < 1e-8


def test_quarter_turn_rotation():
    xy = [np.array([1.0, 0.0])]
    for _ in range(11):
        xy.append(np.array([[0, -1], [1, 0]]) @ xy[-1])
    params = fit_ar(np.array(xy), ArConfig(order=1))
    np.testing.assert_allclose(params.matrices[0], [[0, -1], [1, 0]], atol=1e-8)
    np.testing.assert_allclose(params.intercept, [0, 0], atol=1e-8)
    assert params.residual_rms < 1e-8


def test_constant_track_min_norm():
    xy = np.tile([3.0, 4.0], (150, 1))
    params = fit_ar(Trajectory("c", np.arange(150), xy), ArConfig(order=5))
    mats, c, _, _ = ar_pinv_solution(xy, 5)
    np.testing.assert_allclose(params.matrices, mats, atol=1e-10)
    np.testing.assert_allclose(params.intercept, c, atol=1e-10)
    # closed form: each coordinate's coefficients are target * row / |row|^2, |row|^2 = 126
    np.testing.assert_allclose(params.matrices[2], [[3 * 3 / 126, 3 * 4 / 126], [4 * 3 / 126, 4 * 4 / 126]], atol=1e-12)
    np.testing.assert_allclose(params.intercept, [3 / 126, 4 / 126], atol=1e-12)
    assert params.residual_rms == pytest.approx(0.0, abs=1e-12)


def test_collinear_track_matches_pinv_oracle():
    t = np.arange(60.0)
    xy = np.column_stack([2 * t + 1, -t + 5])  # straight line: rank-deficient design
    params = fit_ar(xy, ArConfig(order=3))
    mats, c, _, _ = ar_pinv_solution(xy, 3)
    np.testing.assert_allclose(params.matrices, mats, atol=1e-9)
    np.testing.assert_allclose(params.intercept, c, atol=1e-9)
    assert params.residual_rms < 1e-9


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("order", [1, 2, 5])
def test_full_rank_matches_pinv_oracle(seed, order):
    xy = noisy_segment(seed)
    params = fit_ar(xy, ArConfig(order=order))
    mats, c, _, _ = ar_pinv_solution(xy, order)
    np.testing.assert_allclose(params.matrices, mats, atol=1e-9)
    np.testing.assert_allclose(params.intercept, c, atol=1e-7)


def test_without_intercept():
    xy = noisy_segment(1, offset=(0, 0))
    params = fit_ar(xy, ArConfig(order=2, fit_intercept=False))
    mats, _, _, _ = ar_pinv_solution(xy, 2, intercept=False)
    np.testing.assert_allclose(params.matrices, mats, atol=1e-10)
    np.testing.assert_array_equal(params.intercept, [0, 0])


def test_design_rows_order_lags():
    xy = np.arange(20.0).reshape(10, 2)
    d, y = design_system(xy, 2)
    np.testing.assert_array_equal(d[0], [*xy[1], *xy[0], 1.0])
    np.testing.assert_array_equal(y[0], xy[2])
    assert d.shape == (8, 5)


@pytest.mark.parametrize("seed", range(8))
def test_noise_free_var5_recovery(seed):
    rng = np.random.default_rng(100 + seed)
    mats = random_full_rank_var(rng, 5)
    c = rng.normal(size=2)
    xy = simulate_var(mats, c, rng.normal(size=(5, 2)) * 10, 40)
    params = fit_ar(xy, ArConfig(order=5))
    np.testing.assert_allclose(params.matrices, mats, atol=1e-8)
    np.testing.assert_allclose(params.intercept, c, atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_translation_invariance(seed):
    xy = noisy_segment(seed, offset=(0, 0))
    shift = np.random.default_rng(seed).uniform(-500, 500, 2)
    base = fit_ar(xy, ArConfig(order=5))
    moved = fit_ar(xy + shift, ArConfig(order=5))
    np.testing.assert_allclose(moved.matrices, base.matrices, atol=1e-8, rtol=0)
    expected_c = base.intercept + (np.eye(2) - base.matrices.sum(axis=0)) @ shift
    np.testing.assert_allclose(moved.intercept, expected_c, atol=1e-7, rtol=0)


@pytest.mark.parametrize("seed", range(5))
def test_residual_rms_is_optimal(seed):
    xy = noisy_segment(seed)
    params = fit_ar(xy, ArConfig(order=3))
    d, y = design_system(xy, 3)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        mats = params.matrices + rng.normal(0, 1e-3, params.matrices.shape)
        c = params.intercept + rng.normal(0, 1e-2, 2)
        beta = np.vstack([m.T for m in mats] + [c[None, :]])
        rms = math.sqrt(np.mean(np.sum((y - d @ beta) ** 2, axis=1)))
        assert rms >= params.residual_rms


@pytest.mark.parametrize("seed", range(4))
def test_predict_reproduces_residual_rms(seed):
    xy = noisy_segment(seed)
    params = fit_ar(xy, ArConfig(order=4))
    errs = [np.sum((xy[t] - predict(params, xy[t - 4 : t])) ** 2) for t in range(4, len(xy))]
    assert np.mean(errs) == pytest.approx(params.residual_rms**2, rel=1e-9)


def test_predict_examples():
    zero = ArParameters(np.zeros((2, 2, 2)), [5, 6], 0.0)
    np.testing.assert_array_equal(predict(zero, [[1, 2], [3, 4]]), [5, 6])
    rotation = ArParameters([[[0, -1], [1, 0]]], [0, 0], 0.0)
    np.testing.assert_allclose(predict(rotation, [[0, 1]]), [-1, 0])
    with pytest.raises(PreconditionError):
        predict(zero, [[1, 2]])


def test_predict_most_recent_uses_first_matrix():
    params = ArParameters([np.eye(2), np.zeros((2, 2))], [0, 0], 0.0)
    np.testing.assert_array_equal(predict(params, [[9, 9], [1, 2]]), [1, 2])


def test_featurize_layout():
    p = ArParameters([[[1, 2], [3, 4]], np.zeros((2, 2))], [7, 8], 0.0)
    fv = featurize(p, "x")
    np.testing.assert_array_equal(fv.values, [1, 2, 3, 4, 0, 0, 0, 0])
    assert fv.object_id == "x"
    np.testing.assert_array_equal(featurize(ArParameters([np.eye(2)], [0, 0], 0.0)).values, [1, 0, 0, 1])
    assert featurize(ArParameters(np.zeros((5, 2, 2)), [0, 0], 0.0)).values.shape == (20,)


def _corpus(n, length=150, identical=False):
    trajs = []
    for i in range(n):
        xy = noisy_segment(0 if identical else i, n=length)
        trajs.append(Trajectory(f"t{i}", np.arange(length), xy))
    return TrajectoryCorpus(tuple(trajs), length)


def test_featurize_corpus_shapes():
    fm = featurize_corpus(_corpus(139), ArConfig(order=5))
    assert fm.shape == (139, 20)
    assert fm.object_ids[0] == "t0"


def test_featurize_corpus_singleton_and_identical():
    single = _corpus(1)
    fm = featurize_corpus(single)
    np.testing.assert_array_equal(fm.values[0], featurize(fit_ar(single.trajectories[0])).values)
    same = featurize_corpus(_corpus(10, identical=True))
    for row in same.values[1:]:
        np.testing.assert_array_equal(row, same.values[0])


def test_featurize_corpus_parallel_is_bitwise_equal():
    corpus = _corpus(40)
    a = featurize_corpus(corpus, workers=1)
    b = featurize_corpus(corpus, workers=6)
    assert a.values.tobytes() == b.values.tobytes()


def test_fit_is_deterministic():
    xy = noisy_segment(3)
    a, b = fit_ar(xy.copy()), fit_ar(xy.copy())
    assert featurize(a).values.tobytes() == featurize(b).values.tobytes()


def test_errors():
    with pytest.raises(PreconditionError):
        fit_ar(np.zeros((5, 2)), ArConfig(order=5))
    with pytest.raises(DataError):
        fit_ar(np.array([[0.0, 0.0], [np.nan, 1.0], [1.0, 1.0]]), ArConfig(order=1))
    with pytest.raises(ConfigError):
        ArConfig(order=0)
    short = TrajectoryCorpus((Trajectory("tiny", np.arange(3), np.zeros((3, 2))),), 3)
    with pytest.raises(PreconditionError, match="tiny"):
        featurize_corpus(short, ArConfig(order=5))


def test_feature_csv_roundtrip(tmp_path):
    fm = featurize_corpus(_corpus(7))
    path = tmp_path / "f.csv"
    write_features(fm, path)
    assert path.read_text().splitlines()[0] == "object_id," + ",".join(f"f{i}" for i in range(20))
    back = read_features(path)
    assert back.object_ids == fm.object_ids
    assert back.values.tobytes() == fm.values.tobytes()


@settings(max_examples=40, deadline=None)
@given(
    order=st.integers(1, 4),
    seed=st.integers(0, 2**31),
    shift=st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
)
def test_translation_changes_only_intercept(order, seed, shift):
    xy = noisy_segment(seed, n=80, offset=(0, 0))
    base = fit_ar(xy, ArConfig(order=order))
    moved = fit_ar(xy + np.array(shift), ArConfig(order=order))
    np.testing.assert_allclose(moved.matrices, base.matrices, atol=1e-8, rtol=0)
