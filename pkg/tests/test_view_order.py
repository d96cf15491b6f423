import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from viewreg.errors import (
    DegenerateEmbedding,
    DimMismatch,
    InvalidCoefficient,
    InvalidInput,
    InvalidMargin,
)
from viewreg.gradcheck import central_difference, check_svo, max_relative_error, svo_instance
from viewreg.view_order import (
    NoiseScheduleCoeffs,
    ViewEmbeddingSequence,
    estimate_clean_latent,
    hinge_arguments,
    min_adjacent_gap,
    similarities,
    svo_grad,
    svo_loss,
    svo_loss_from_raw,
)

AZ3 = (90.0, 135.0, 180.0)


# --- clean latent ----------------------------------------------------------------

def test_clean_latent_identity(rng):
    z = rng.standard_normal((4, 8, 8))
    out = estimate_clean_latent(z, rng.standard_normal(z.shape), NoiseScheduleCoeffs(1.0, 0.0, 0))
    assert np.array_equal(out, z)


def test_clean_latent_arithmetic():
    out = estimate_clean_latent(np.array(0.5), np.array(1.0), NoiseScheduleCoeffs(0.8, 0.3, 10))
    assert float(out) == pytest.approx(0.25, rel=1e-15)


def test_clean_latent_inverts_forward(rng):
    z0, noise = rng.standard_normal((2, 4, 6, 6))
    alpha, sigma = 0.6, 0.8
    zt = alpha * z0 + sigma * noise
    back = estimate_clean_latent(zt, noise, NoiseScheduleCoeffs(alpha, sigma))
    assert np.max(np.abs(back - z0)) < 1e-12


def test_clean_latent_errors():
    with pytest.raises(DimMismatch):
        estimate_clean_latent(np.zeros(3), np.zeros(4), NoiseScheduleCoeffs(1.0, 0.0))
    with pytest.raises(InvalidCoefficient):
        NoiseScheduleCoeffs(0.0, 1.0)


# --- embeddings & similarities ------------------------------------------------------

def test_sequence_normalizes():
    vs = ViewEmbeddingSequence([[3.0, 4.0], [0.0, 2.0]], (90.0,))
    np.testing.assert_allclose(np.linalg.norm(vs.seq, axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(vs.ref, [0.6, 0.8])


def test_sequence_validation():
    with pytest.raises(DegenerateEmbedding):
        ViewEmbeddingSequence([[1.0, 0.0], [0.0, 0.0]], (90.0,))
    with pytest.raises(InvalidInput):
        ViewEmbeddingSequence([[1.0, 0.0], [0.0, 1.0]], (0.0,))
    with pytest.raises(InvalidInput):
        ViewEmbeddingSequence(np.eye(3), (180.0, 90.0))


def test_similarity_examples():
    s = math.sqrt(2) / 2
    vs = ViewEmbeddingSequence([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [s, s]], AZ3)
    sims = similarities(vs)
    assert sims[0] == pytest.approx(1.0, abs=1e-15)
    assert sims[1] == 0.0
    assert sims[2] == pytest.approx(0.70711, abs=1e-5)
    assert sims[2] == pytest.approx(s, rel=1e-15)


# --- loss ------------------------------------------------------------------------

@pytest.mark.parametrize("sims,delta,expected", [
    ((0.9, 0.7, 0.5), 0.1, 0.0),
    ((0.5, 0.7), 0.1, 0.3),
    ((0.8, 0.75), 0.1, 0.05),
    ((0.3,), 0.1, 0.0),
])
def test_loss_examples(sims, delta, expected):
    res = svo_loss(sims, delta)
    assert res.loss == pytest.approx(expected, abs=1e-15)
    assert res.loss == pytest.approx(res.per_term.sum())
    assert np.all(res.per_term >= 0)


def test_negative_margin():
    with pytest.raises(InvalidMargin):
        svo_loss([0.1, 0.2], -0.1)


def test_empty_sims():
    with pytest.raises(InvalidInput):
        svo_loss([], 0.1)


@given(sims=st.lists(st.floats(-1, 1), min_size=1, max_size=8), delta=st.floats(0, 0.5))
def test_zero_iff_margins_hold(sims, delta):
    s = np.array(sims)
    satisfied = bool(np.all(s[:-1] - s[1:] >= delta))
    # the hinge argument rounds differently than the gap; skip boundary cases
    assume(np.all(np.abs((s[:-1] - s[1:]) - delta) > 1e-12))
    assert (svo_loss(s, delta).loss == 0.0) == satisfied


@given(sims=st.lists(st.floats(-1, 1), min_size=2, max_size=6), delta=st.floats(0, 0.3),
       data=st.data())
def test_active_term_is_linear(sims, delta, data):
    s = np.array(sims)
    args = hinge_arguments(s, delta)
    i = data.draw(st.integers(0, len(s) - 2))
    assume(args[i] > 1e-6)
    eta = 1e-3
    # the bump lowers the next argument by eta; it must not cross its kink
    nxt = args[i + 1] if i + 1 < len(args) else -1.0
    assume(nxt > eta + 1e-6 or nxt <= 0)
    bumped = s.copy()
    bumped[i + 1] += eta
    change = svo_loss(bumped, delta).loss - svo_loss(s, delta).loss
    expected = eta if not (i + 1 < len(args) and nxt > 0) else 0.0
    assert change == pytest.approx(expected, abs=1e-12)


def test_order_sensitivity():
    sims = np.array([0.9, 0.5, 0.1])
    assert svo_loss(sims, 0.05).loss == 0.0
    assert svo_loss(sims[::-1], 0.05).loss > 0.0


@given(seed=st.integers(0, 2**32 - 1), scales=st.lists(st.floats(1e-3, 1e3), min_size=4, max_size=4))
def test_scale_invariance(seed, scales):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((4, 6))
    a = ViewEmbeddingSequence(raw, AZ3)
    b = ViewEmbeddingSequence(raw * np.array(scales)[:, None], AZ3)
    np.testing.assert_allclose(similarities(a), similarities(b), atol=1e-12)
    assert svo_loss(similarities(a)).loss == pytest.approx(svo_loss(similarities(b)).loss, abs=1e-12)


def test_min_gap():
    assert min_adjacent_gap([0.9, 0.5, 0.45]) == pytest.approx(0.05)
    assert min_adjacent_gap([0.9]) == math.inf


# --- gradient --------------------------------------------------------------------

def test_grad_zero_when_satisfied():
    raw, az = svo_instance(3, satisfied=True)
    assert np.array_equal(svo_grad(ViewEmbeddingSequence(raw, az), 0.05), np.zeros_like(raw))


def test_grad_zero_at_exact_kink():
    # equal similarities with zero margin: hinge argument exactly 0
    vs = ViewEmbeddingSequence([[1.0, 0.0], [0.5, math.sqrt(0.75)], [0.5, -math.sqrt(0.75)]], (90.0, 180.0))
    assert hinge_arguments(similarities(vs), 0.0)[0] == 0.0
    assert np.array_equal(svo_grad(vs, 0.0), np.zeros((3, 2)))


def test_grad_one_violation_matches_fd():
    raw = np.array([[1.0, 0.2, 0.0], [0.9, 0.5, 0.1], [0.2, 1.0, 0.3], [0.8, 0.1, 0.4]])
    az = AZ3
    args = hinge_arguments(similarities(ViewEmbeddingSequence(raw, az)), 0.05)
    assert (args > 0).sum() == 1 and np.all(np.abs(args) > 1e-3)
    analytic = svo_grad(ViewEmbeddingSequence(raw, az), 0.05)
    numeric = central_difference(lambda x: svo_loss_from_raw(x, az, 0.05), raw)
    assert max_relative_error(analytic, numeric) < 1e-6


def test_grad_all_active_ref_is_sum_of_terms():
    raw = np.array([[1.0, 0.0, 0.0], [0.1, 1.0, 0.0], [0.5, 0.2, 1.0], [0.9, 0.1, 0.1]])
    vs = ViewEmbeddingSequence(raw, AZ3)
    s = similarities(vs)
    assert np.all(hinge_arguments(s, 0.05) > 1e-3)
    g = svo_grad(vs, 0.05)
    # per-term reference contributions: d/du_ref (s_{i+1} - s_i)
    per_term = [(vs.seq[i + 1] - s[i + 1] * vs.ref) - (vs.seq[i] - s[i] * vs.ref) for i in range(2)]
    np.testing.assert_allclose(g[0], sum(per_term) / vs.norms[0], atol=1e-14)
    numeric = central_difference(lambda x: svo_loss_from_raw(x, AZ3, 0.05), raw)
    assert max_relative_error(g, numeric) < 1e-6


def test_grad_random_instances():
    for seed in range(20):
        assert check_svo(seed).max_rel_err < 1e-5


def test_grad_degenerate():
    vs = ViewEmbeddingSequence([[1.0, 0.0], [0.0, 1.0]], (90.0,))
    object.__setattr__(vs, "_norms", np.array([1.0, 0.0]))
    with pytest.raises(DegenerateEmbedding):
        svo_grad(vs)
