import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rlc_lab.diffcore import ConfigurationError, MlpSpec, ParamStore, Tensor
from rlc_lab.invariant_samplers import (
    RGraphC,
    RSetC,
    RSphereC,
    coupling_invariance_check,
    random_orthogonal,
    rgraphc_sample,
    rsetc_sample,
    rspherec_sample,
)
from rlc_lab.rlc_core import estimate_limiting


def _set_net(store, prefix, widths, W, b):
    """Single affine layer with given weights (widths = (in, out))."""
    store[f"{prefix}.W0"] = Tensor(np.asarray(W, dtype=float).reshape(widths))
    store[f"{prefix}.b0"] = Tensor(np.asarray(b, dtype=float).reshape(widths[1]))


def test_rsetc_constant_nets():
    p = ParamStore()
    _set_net(p, "f", (2, 1), [0, 0], [1.7])
    _set_net(p, "g", (2, 1), [0, 0], [0.0])
    spec = RSetC(4, 1, MlpSpec((2, 1)), MlpSpec((2, 1)), p)
    lc = rsetc_sample(spec, np.random.default_rng(0))
    assert lc.a.tolist() == [1.7] * 4 and lc.b == 0.0


def test_rsetc_item_noise_moments():
    p = ParamStore()
    _set_net(p, "f", (2, 1), [0, 1], [0.0])  # f(u, u_i) = u_i
    _set_net(p, "g", (2, 1), [0, 0], [0.0])
    spec = RSetC(3, 1, MlpSpec((2, 1)), MlpSpec((2, 1)), p)
    A, _ = spec.sample_batch(np.random.default_rng(1), 100_000)
    assert np.all(np.abs(A.mean(axis=0)) < 0.02)
    assert np.all(np.abs(A.var(axis=0) - 1) < 0.03)
    assert abs(np.corrcoef(A.T)[0, 1]) < 0.02


def test_rsetc_swap_coupling_bit_identical():
    spec = RSetC.create(5, rng=np.random.default_rng(2))
    rng = np.random.default_rng(3)
    x = rng.standard_normal(5)
    perm = np.array([0, 2, 1, 3, 4])
    for seed in range(20):
        assert coupling_invariance_check("set", spec, x, perm, seed)


def test_identity_permutation_always_true():
    s = RSetC.create(3, rng=np.random.default_rng(0))
    g = RGraphC.create(3, rng=np.random.default_rng(0))
    for seed in range(5):
        assert coupling_invariance_check("set", s, np.ones(3), np.arange(3), seed)
        assert coupling_invariance_check("graph", g, np.ones(9), np.arange(3), seed)


def test_rsetc_random_permutations():
    rng = np.random.default_rng(4)
    for seed in range(100):
        spec = RSetC.create(9, rng=rng)
        x = rng.standard_normal(9)
        assert coupling_invariance_check("set", spec, x, rng.permutation(9), seed)


def test_rsetc_multi_feature_items():
    rng = np.random.default_rng(5)
    spec = RSetC.create(4, k=3, rng=rng)
    assert spec.dim == 12
    for seed in range(10):
        assert coupling_invariance_check("set", spec, rng.standard_normal(12), rng.permutation(4), seed)


def test_rgraphc_all_permutations_s4():
    rng = np.random.default_rng(6)
    spec = RGraphC.create(4, rng=rng)
    upper = np.triu(rng.random((4, 4)) < 0.5, 1)
    x = (upper | upper.T).astype(float).reshape(-1)
    for seed, perm in enumerate(itertools.permutations(range(4))):
        assert coupling_invariance_check("graph", spec, x, np.array(perm), seed)


def test_coupling_detects_a_broken_score(monkeypatch):
    # a score that reads item 0 by position is not invariant; the check must say so
    from rlc_lab import invariant_samplers as mod

    monkeypatch.setattr(mod, "_set_score", lambda spec, noise, x: float(x[0]))
    spec = RSetC.create(5, rng=np.random.default_rng(7))
    assert not coupling_invariance_check("set", spec, np.arange(5.0), np.array([1, 0, 2, 3, 4]), 0)


def test_bad_permutation_rejected():
    spec = RSetC.create(3, rng=np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        coupling_invariance_check("set", spec, np.ones(3), [0, 0, 1], 0)
    with pytest.raises(ConfigurationError):
        coupling_invariance_check("torus", spec, np.ones(3), [0, 1, 2], 0)


def _graph_spec(f_w, f_b=0.0):
    p = ParamStore()
    _set_net(p, "f", (4, 1), f_w, [f_b])
    _set_net(p, "g", (2, 1), [0, 0], [0.0])
    return p


def test_rgraphc_ones_counts_directed_entries():
    spec = RGraphC(5, MlpSpec((4, 1)), MlpSpec((2, 1)), _graph_spec([0, 0, 0, 0], 1.0))
    lc = rgraphc_sample(spec, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    upper = np.triu(rng.random((5, 5)) < 0.5, 1)
    A = (upper | upper.T).astype(float)
    assert lc.a @ A.reshape(-1) == 2 * upper.sum()


def test_rgraphc_edge_noise_symmetric():
    spec = RGraphC(6, MlpSpec((4, 1)), MlpSpec((2, 1)), _graph_spec([0, 0, 0, 1]))
    A, _ = spec.sample_batch(np.random.default_rng(2), 50)
    M = A.reshape(50, 6, 6)
    assert np.array_equal(M, np.swapaxes(M, 1, 2))
    # distinct pairs get distinct noise
    assert len(np.unique(M[0][np.triu_indices(6)])) == 21


def test_rspherec_zero_scale():
    p = ParamStore()
    _set_net(p, "f", (2, 1), [0, 0], [0.0])
    _set_net(p, "g", (2, 1), [0, 0], [0.3])
    spec = RSphereC(3, MlpSpec((2, 1)), MlpSpec((2, 1)), p)
    lc = rspherec_sample(spec, np.random.default_rng(0))
    assert np.all(lc.a == 0.0) and lc.b == pytest.approx(0.3)


def _unit_sphere(d, bias_noise=0.0):
    p = ParamStore()
    _set_net(p, "f", (2, 1), [0, 0], [1.0])
    _set_net(p, "g", (2, 1), [0, bias_noise], [0.0])
    return RSphereC(d, MlpSpec((2, 1)), MlpSpec((2, 1)), p)


def test_rspherec_rotation_ks():
    spec = _unit_sphere(4)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(4)
    x /= np.linalg.norm(x)
    for seed in range(5):
        assert coupling_invariance_check("sphere", spec, x, random_orthogonal(4, rng), seed)


def test_rspherec_norm_only():
    spec = _unit_sphere(2, bias_noise=0.5)
    m = 100_000
    _, p1 = estimate_limiting(spec, [1.0, 0.0], m, np.random.default_rng(4))
    _, p2 = estimate_limiting(spec, [0.0, 1.0], m, np.random.default_rng(5))
    se = math.sqrt(0.25 / m)
    assert abs(p1 - p2) < 3 * math.sqrt(2) * se


def test_random_orthogonal():
    Q = random_orthogonal(5, np.random.default_rng(0))
    np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-12)


def test_sphere_rejects_non_orthogonal():
    with pytest.raises(ConfigurationError):
        coupling_invariance_check("sphere", _unit_sphere(2), [1.0, 0.0], np.ones((2, 2)), 0)


@pytest.mark.parametrize("cls,kw", [(RSetC, {"hidden": 5}), (RGraphC, {"hidden": (2, 2, 2)}), (RSphereC, {"hidden": 5})])
def test_param_count_independent_of_size(cls, kw):
    counts = {cls.create(d, rng=np.random.default_rng(0), **kw).param_count() for d in (3, 5, 9, 15, 30)}
    assert len(counts) == 1


def test_known_param_counts():
    assert RSetC.create(5, hidden=5).param_count() == 42
    assert RGraphC.create(10, hidden=(2, 2, 2)).param_count() == 46


def test_resized_keeps_parameters():
    s = RSetC.create(5, rng=np.random.default_rng(0))
    t = s.resized(11)
    assert t.dim == 11 and t.params is s.params


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        RSetC(3, 1, MlpSpec((3, 1)), MlpSpec((2, 1)), ParamStore())
    with pytest.raises(ConfigurationError):
        RGraphC(3, MlpSpec((2, 1)), MlpSpec((2, 1)), ParamStore())


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_rsetc_score_distribution_invariant(d, seed):
    # statistical form of invariance, for any size and parameters
    rng = np.random.default_rng(seed)
    spec = RSetC.create(d, rng=rng)
    x = rng.standard_normal(d)
    perm = rng.permutation(d)
    A, b = spec.sample_batch(np.random.default_rng([seed, 1]), 2000)
    A2, b2 = spec.sample_batch(np.random.default_rng([seed, 2]), 2000)
    assert stats.ks_2samp(A @ x - b, A2 @ x[perm] - b2).pvalue > 1e-4
