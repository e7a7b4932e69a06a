import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motif_kinetics.ar import ArConfig, fit_ar
from motif_kinetics.errors import ConfigError, PreconditionError
from motif_kinetics.synth import (
    MOTIFS,
    MotifSpec,
    adjusted_rand_index,
    generate,
    load_synth_config,
    read_truth,
    rotation,
    write_labeled_corpus,
)
from motif_kinetics.trajectory import load_corpus

from oracles import pair_counting_ari


def test_noise_free_circle_recovers_rotation():
    w = 2 * math.pi / 100
    lc = generate([MotifSpec("circular", 1, 150, radius=15.0, angular_step=w)], seed=3)
    params = fit_ar(lc.corpus.trajectories[0], ArConfig(order=1))
    expected = np.array([[math.cos(w), -math.sin(w)], [math.sin(w), math.cos(w)]])
    np.testing.assert_allclose(params.matrices[0], expected, atol=1e-8)


def test_noise_free_circle_lies_on_circle():
    lc = generate([MotifSpec("circular", 3, 200, radius=12.0, angular_step=0.3)], seed=1)
    for t in lc.corpus:
        # centre is the fixed point of the fitted affine map
        a = fit_ar(t, ArConfig(order=1))
        centre = np.linalg.solve(np.eye(2) - a.matrices[0], a.intercept)
        r = np.linalg.norm(t.xy - centre, axis=1)
        assert np.all(np.abs(r - 12.0) <= 1e-9)


def test_noise_free_immotile_is_constant():
    lc = generate([MotifSpec("immotile", 2, 50)], seed=0)
    for t in lc.corpus:
        assert np.all(t.xy == t.xy[0])
        assert fit_ar(t, ArConfig(order=5)).residual_rms == pytest.approx(0.0, abs=1e-9)


def test_noise_free_linear_and_twirl_shapes():
    lin = generate([MotifSpec("linear", 1, 30, drift=(2.0, -1.0))], seed=0).corpus.trajectories[0]
    np.testing.assert_allclose(np.diff(lin.xy, axis=0), np.tile([2.0, -1.0], (29, 1)), atol=1e-12)
    tw = generate([MotifSpec("twirl", 1, 120, radius=5.0, angular_step=0.5, drift=(1.0, 0.0))], seed=0)
    xy = tw.corpus.trajectories[0].xy
    # remove the drift: what remains is a circle of radius 5
    still = xy - np.arange(len(xy))[:, None] * np.array([1.0, 0.0])
    a = fit_ar(still, ArConfig(order=1))
    centre = np.linalg.solve(np.eye(2) - a.matrices[0], a.intercept)
    np.testing.assert_allclose(np.linalg.norm(still - centre, axis=1), 5.0, atol=1e-9)
    np.testing.assert_allclose(a.matrices[0], rotation(0.5), atol=1e-9)


def test_counting_and_ids():
    specs = [MotifSpec("circular", 10, 40, noise_sigma=0.1), MotifSpec("random_walk", 10, 40)]
    lc = generate(specs, seed=2)
    assert len(lc.corpus) == 20 and len(lc.truth) == 20
    assert lc.corpus.object_ids[0] == "s00-circular-000"
    assert lc.corpus.object_ids[-1] == "s01-random_walk-009"
    assert lc.truth_labels()[:1] == ["circular"]


def test_onset_lead_in_is_immotile():
    spec = MotifSpec("linear", 2, 60, drift=(3.0, 0.0), onset=20, lead_in_sigma=0.0)
    for t in generate([spec], seed=4).corpus:
        assert np.all(t.xy[:20] == t.xy[0])
        assert np.all(t.xy[20] == t.xy[0])
        assert t.xy[-1, 0] > t.xy[0, 0] + 100


def test_deterministic_bytes(tmp_path):
    specs = load_synth_config().specs
    a = write_labeled_corpus(generate(specs, seed=7), tmp_path / "a")
    b = write_labeled_corpus(generate(specs, seed=7, workers=4), tmp_path / "b")
    assert a[0].read_bytes() == b[0].read_bytes()
    assert a[1].read_bytes() == b[1].read_bytes()
    c = write_labeled_corpus(generate(specs, seed=8), tmp_path / "c")
    assert c[0].read_bytes() != a[0].read_bytes()


def test_written_corpus_loads_back(tmp_path):
    lc = generate([MotifSpec("twirl", 3, 30, noise_sigma=0.2)], seed=0)
    traj, truth = write_labeled_corpus(lc, tmp_path)
    assert load_corpus(traj) == list(lc.corpus)
    assert read_truth(truth) == lc.truth
    assert truth.read_text().splitlines()[0] == "object_id,motif"
    assert traj.read_text().splitlines()[0] == "object_id,frame,x,y"


def test_acceptance_config_shape():
    cfg = load_synth_config()
    assert sum(s.count for s in cfg.specs) == 139
    assert {s.motif for s in cfg.specs} == set(MOTIFS)
    assert all(s.length == 300 for s in cfg.specs) and cfg.event_frame == 150


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(motif="spiral", count=1, length=10),
        dict(motif="circular", count=0, length=10),
        dict(motif="circular", count=1, length=10, radius=0.0),
        dict(motif="twirl", count=1, length=10, angular_step=-math.pi),
        dict(motif="linear", count=1, length=10, noise_sigma=-1.0),
        dict(motif="linear", count=1, length=10, onset=10),
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ConfigError):
        MotifSpec(**kwargs)


def test_generate_needs_specs():
    with pytest.raises(PreconditionError):
        generate([], seed=0)


# ---------------------------------------------------------------- ARI


def test_ari_examples():
    assert adjusted_rand_index([0, 1, 1, 2], [0, 1, 1, 2]) == 1.0
    assert adjusted_rand_index([0, 1, 2, 3], [0, 0, 0, 0]) == 0.0
    assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    with pytest.raises(PreconditionError):
        adjusted_rand_index([0, 1], [0])


def test_ari_accepts_string_labels():
    assert adjusted_rand_index(["a", "a", "b"], [5, 5, 9]) == 1.0


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=2, max_size=40)
)
def test_ari_matches_pair_counting_oracle_and_is_symmetric(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    ari = adjusted_rand_index(a, b)
    assert ari == pytest.approx(pair_counting_ari(a, b), abs=1e-12)
    assert ari == pytest.approx(adjusted_rand_index(b, a), abs=1e-12)
    assert -1.0 <= ari <= 1.0
