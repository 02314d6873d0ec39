import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ammrg.errors import DimensionError, EmptyMemoryError, NumericError
from ammrg.hopfield import (HopfieldConfig, HopfieldProjections, PatternMatrix, association_weights,
                            batch_enhance, dual_retrieve, energy, energy_gradient, hopfield_apply, retrieve,
                            retrieve_batch, update_step)


def mp_energy(x, q, m, beta):
    """Straight transcription of the energy at 40 digits."""
    mpmath.mp.dps = 40
    d = len(x)
    quad = mpmath.fsum((mpmath.mpf(float(a)) - mpmath.mpf(float(b))) ** 2 for a, b in zip(x, q))
    scores = [beta * mpmath.fsum(mpmath.mpf(float(a)) * mpmath.mpf(float(b)) for a, b in zip(x, row))
              / mpmath.sqrt(d) for row in m]
    return float(quad - mpmath.log(mpmath.fsum(mpmath.exp(s) for s in scores)))


def random_instance(rng, d=None, n=None):
    d = d or int(rng.integers(1, 17))
    n = n or int(rng.integers(1, 9))
    return rng.standard_normal(d), rng.standard_normal(d), rng.standard_normal((n, d))


# ------------------------------------------------------------------ energy


def test_energy_orthogonal_single_pattern_is_zero():
    assert energy([1.0, 0.0], [1.0, 0.0], [[0.0, 3.0]], beta=2.5) == 0.0


def test_energy_all_zero():
    assert energy([0.0, 0.0], [0.0, 0.0], [[0.0, 0.0]], beta=1.0) == 0.0


def test_energy_two_pattern_example():
    e = energy([1.0, 0.0], [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], beta=1.0)
    oracle = mp_energy([1, 0], [0, 0], [[1, 0], [0, 1]], 1.0)
    assert e == pytest.approx(oracle, abs=1e-14)
    assert e == pytest.approx(1 - math.log(math.exp(1 / math.sqrt(2)) + 1), abs=1e-15)


def test_energy_matches_mpmath(rng):
    for _ in range(50):
        x, q, m = random_instance(rng)
        beta = float(rng.choice([0.5, 1.0, 4.0]))
        assert energy(x, q, m, beta) == pytest.approx(mp_energy(x, q, m, beta), rel=1e-12, abs=1e-12)


def test_energy_dimension_mismatch():
    with pytest.raises(DimensionError):
        energy([1.0, 0.0, 0.0], [1.0, 0.0], [[1.0, 0.0]], 1.0)


# ------------------------------------------------------- association weights


def test_weights_single_pattern():
    assert association_weights([3.0, -1.0], [[0.2, 0.1]], 7.0).tolist() == [1.0]


def test_weights_beta_zero_uniform(rng):
    np.testing.assert_allclose(association_weights(rng.standard_normal(5), rng.standard_normal((4, 5)), 0.0),
                               np.full(4, 0.25), atol=1e-15)


def test_weights_two_pattern_example():
    e = math.exp(1 / math.sqrt(2))
    np.testing.assert_allclose(association_weights([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], 1.0),
                               [e / (e + 1), 1 / (e + 1)], atol=1e-15)


def test_weights_large_beta_concentrate(rng):
    for _ in range(50):
        pats = rng.standard_normal((8, 16))
        pats /= np.linalg.norm(pats, axis=1, keepdims=True)
        k = int(rng.integers(8))
        x = pats[k] * 4.0
        scores = pats @ x
        if np.sort(scores)[-1] - np.sort(scores)[-2] < 0.5:
            continue
        assert association_weights(x, pats, 64.0).max() >= 0.999


def test_weights_reject_negative_beta_config():
    with pytest.raises(ValueError):
        HopfieldConfig(beta=-1.0)


# ------------------------------------------------------------------ gradient


def test_gradient_zero_at_anchor():
    np.testing.assert_array_equal(energy_gradient([0.5, -1.0], [0.5, -1.0], [[0.0, 0.0]], 3.0), [0.0, 0.0])


def test_gradient_single_pattern_example():
    g = energy_gradient([0.0, 0.0], [0.0, 0.0], [[2.0, 0.0]], 1.0)
    np.testing.assert_allclose(g, [-2 / math.sqrt(2), 0.0], atol=1e-15)
    assert g[0] == pytest.approx(-1.41421, abs=1e-5)


def central_difference(x, q, m, beta, h=1e-5):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (energy(x + e, q, m, beta) - energy(x - e, q, m, beta)) / (2 * h)
    return g


def test_gradient_matches_finite_differences(rng):
    worst = 0.0
    for _ in range(200):
        x, q, m = random_instance(rng)
        beta = float(rng.choice([0.5, 1.0, 4.0]))
        g = energy_gradient(x, q, m, beta)
        fd = central_difference(x, q, m, beta)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-12))
    assert worst < 1e-6


# -------------------------------------------------------------- update step


def test_update_step_fixed_when_gradient_zero():
    cfg = HopfieldConfig(mode="gradient", step_size=0.1)
    np.testing.assert_array_equal(update_step([1.0, 2.0], [1.0, 2.0], [[0.0, 0.0]], cfg), [1.0, 2.0])


def test_update_step_beta_zero_moves_to_query(rng):
    cfg = HopfieldConfig(beta=0.0, mode="gradient", step_size=0.05)
    x, q, m = random_instance(rng, d=6, n=3)
    np.testing.assert_allclose(update_step(x, q, m, cfg), x - 2 * 0.05 * (x - q), atol=1e-15)


def test_update_step_from_query(rng):
    cfg = HopfieldConfig(beta=4.0, mode="gradient", step_size=0.01)
    _, q, m = random_instance(rng, d=9, n=5)
    alpha = association_weights(q, m, 4.0)
    expected = q + 0.01 * 4.0 / 3.0 * (alpha @ m)
    np.testing.assert_allclose(update_step(q, q, m, cfg), expected, atol=1e-15)


def test_update_step_needs_gradient_mode():
    with pytest.raises(ValueError):
        update_step([0.0], [0.0], [[1.0]], HopfieldConfig())


# ---------------------------------------------------------------- retrieve


@pytest.mark.usefixtures("kernel_impl")
class TestRetrieve:
    def test_single_pattern_cccp(self, rng):
        m = rng.standard_normal((1, 7))
        res = retrieve(rng.standard_normal(7), m, HopfieldConfig(beta=2.0))
        np.testing.assert_array_equal(res.updated, m[0])
        # one move onto the pattern, one zero-length confirmation step
        assert res.iterations == 2
        assert len(res.energy_trace) == res.iterations + 1

    def test_beta_zero_gradient_returns_query(self, rng):
        q = rng.standard_normal(5)
        res = retrieve(q, rng.standard_normal((3, 5)), HopfieldConfig(beta=0.0, mode="gradient", step_size=0.1))
        np.testing.assert_allclose(res.updated, q, atol=1e-6)

    def test_cccp_state_is_weighted_mixture(self, rng):
        _, q, m = random_instance(rng, d=12, n=6)
        res = retrieve(q, m, HopfieldConfig(beta=1.0, max_iters=3))
        np.testing.assert_array_equal(res.updated, res.weights @ m)
        assert abs(res.weights.sum() - 1.0) < 1e-9

    def test_energy_trace_starts_at_query(self, rng):
        _, q, m = random_instance(rng, d=8, n=4)
        res = retrieve(q, m, HopfieldConfig(beta=4.0, mode="gradient"))
        assert res.energy_trace[0] == pytest.approx(energy(q, q, m, 4.0), abs=1e-12)
        assert res.energy_trace[-1] == pytest.approx(energy(res.updated, q, m, 4.0), abs=1e-12)

    def test_gradient_energy_descends(self, rng):
        for _ in range(20):
            d, n = int(rng.integers(2, 17)), int(rng.integers(1, 9))
            m = rng.standard_normal((n, d))
            m /= np.linalg.norm(m, axis=1, keepdims=True)
            res = retrieve(rng.standard_normal(d), m, HopfieldConfig(beta=4.0, mode="gradient"))
            assert np.all(np.diff(res.energy_trace) <= 1e-12)

    def test_non_finite_names_iteration(self):
        m = np.array([[1e300, 1e300]])
        cfg = HopfieldConfig(beta=1.0, mode="gradient", step_size=1e10)
        with pytest.raises(NumericError) as info:
            retrieve(np.array([1e300, 1e300]), m, cfg)
        assert info.value.iteration >= 1
        assert f"iteration {info.value.iteration}" in str(info.value)

    def test_batch_matches_single(self, rng):
        m = rng.standard_normal((40, 24))
        qs = m[:10] + 0.5 * rng.standard_normal((10, 24))
        for mode in ("cccp", "gradient"):
            cfg = HopfieldConfig(beta=4.0, mode=mode)
            batch = retrieve_batch(qs, m, cfg)
            for q, b in zip(qs, batch):
                one = retrieve(q, m, cfg)
                assert b.iterations == one.iterations
                np.testing.assert_allclose(b.updated, one.updated, atol=1e-10)
                np.testing.assert_allclose(b.weights, one.weights, atol=1e-10)
                np.testing.assert_allclose(b.energy_trace, one.energy_trace, atol=1e-10)


def test_retrieve_errors():
    with pytest.raises(DimensionError):
        retrieve(np.ones(3), np.ones((2, 4)))
    with pytest.raises(EmptyMemoryError):
        retrieve(np.ones(3), np.zeros((0, 3)))
    with pytest.raises(EmptyMemoryError):
        PatternMatrix(np.zeros((0, 3)))


def test_pattern_matrix_read_only():
    pm = PatternMatrix(np.eye(3))
    with pytest.raises(ValueError):
        pm.patterns[0, 0] = 5.0
    assert (pm.n, pm.dim) == (3, 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 12), st.sampled_from([0.0, 0.5, 4.0, 16.0]), st.integers(0, 2**31))
def test_weights_on_simplex_property(n, d, beta, seed):
    r = np.random.default_rng(seed)
    res = retrieve(r.standard_normal(d), r.standard_normal((n, d)), HopfieldConfig(beta=beta))
    assert np.all(res.weights >= 0)
    assert abs(res.weights.sum() - 1.0) < 1e-9


# ------------------------------------------------------------ projections


def test_identity_projection_equals_retrieve(rng):
    _, q, m = random_instance(rng, d=10, n=5)
    cfg = HopfieldConfig(beta=2.0)
    np.testing.assert_array_equal(hopfield_apply(q, m, HopfieldProjections(), cfg), retrieve(q, m, cfg).updated)


def test_zero_value_projection(rng):
    _, q, m = random_instance(rng, d=4, n=3)
    out = hopfield_apply(q, m, HopfieldProjections(value_proj=np.zeros((6, 4))))
    np.testing.assert_array_equal(out, np.zeros(6))


def test_projection_composition_oracle(rng):
    proj = HopfieldProjections.random(4, 4, 8, seed=7)
    m = rng.standard_normal((3, 4))
    q = rng.standard_normal(4)
    cfg = HopfieldConfig(beta=4.0)
    # straight-line composition with explicit loops
    x0 = proj.query_proj @ q
    x = x0.copy()
    for _ in range(cfg.max_iters):
        s = cfg.beta * (m @ x) / 2.0
        a = np.exp(s - s.max())
        a /= a.sum()
        new = a @ m
        done = np.linalg.norm(new - x) < cfg.tolerance
        x = new
        if done:
            break
    np.testing.assert_allclose(hopfield_apply(q, m, proj, cfg), proj.value_proj @ x, atol=1e-12)


def test_projection_dimension_checks(rng):
    m = rng.standard_normal((3, 4))
    with pytest.raises(DimensionError):
        hopfield_apply(np.ones(4), m, HopfieldProjections(query_proj=np.ones((5, 4))))
    with pytest.raises(DimensionError):
        hopfield_apply(np.ones(4), m, HopfieldProjections(value_proj=np.ones((8, 3))))


# ------------------------------------------------------- dual and batched


def test_dual_identical_halves(rng):
    m = rng.standard_normal((5, 6))
    proj = HopfieldProjections.random(6, 6, 10, seed=1)
    out = dual_retrieve(rng.standard_normal(6), m, m, proj, proj)
    np.testing.assert_array_equal(out[:10], out[10:])


def test_dual_output_width_and_ablation(rng):
    m = rng.standard_normal((4, 8))
    proj = HopfieldProjections.random(8, 8, 4096, seed=2)
    q = rng.standard_normal(8)
    assert dual_retrieve(q, m, m, proj, proj).shape == (8192,)
    v = dual_retrieve(q, m, m, proj, proj, use_report=False)
    r = dual_retrieve(q, m, m, proj, proj, use_visual=False)
    assert v.shape == r.shape == (4096,)
    with pytest.raises(ValueError):
        dual_retrieve(q, m, m, proj, proj, use_visual=False, use_report=False)


def test_dual_empty_bank(rng):
    with pytest.raises(EmptyMemoryError):
        dual_retrieve(np.ones(3), [], np.ones((2, 3)))


def test_batch_enhance_shape_and_rows(rng):
    d = 16
    vis = rng.standard_normal((30, d))
    rep = rng.standard_normal((20, d))
    pv = HopfieldProjections.random(d, d, 4096, seed=3, identity_query=True)
    pr = HopfieldProjections.random(d, d, 4096, seed=4)
    qs = rng.standard_normal((14, d))
    out = batch_enhance(qs, vis, rep, pv, pr)
    assert out.shape == (28, 4096)
    for i, q in enumerate(qs):
        np.testing.assert_allclose(out[2 * i:2 * i + 2].ravel(), dual_retrieve(q, vis, rep, pv, pr), atol=1e-9)


def test_batch_enhance_single_query(rng):
    m = rng.standard_normal((3, 5))
    assert batch_enhance(rng.standard_normal((1, 5)), m, m, n_queries=1).shape == (2, 5)
    with pytest.raises(DimensionError):
        batch_enhance(rng.standard_normal((3, 5)), m, m, n_queries=14)
