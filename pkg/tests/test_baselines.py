import itertools

import numpy as np
import pytest

from rlc_lab.baselines import DeepSetsSpec, GinSpec, deepsets_forward, gin_forward, k33, prism
from rlc_lab.diffcore import ConfigurationError, ParamStore, Tensor
from rlc_lab.tasks import gen_gnp


def _eye_mlp(store, prefix, widths):
    for i in range(len(widths) - 1):
        store[f"{prefix}.W{i}"] = Tensor(np.eye(widths[i], widths[i + 1]))
        store[f"{prefix}.b{i}"] = Tensor(np.zeros(widths[i + 1]))


def test_deepsets_identity_phi_sum_rho():
    spec = DeepSetsSpec(k=1, hidden=1, depth=0, activation="identity")
    p = ParamStore()
    _eye_mlp(p, "phi", spec.phi.layer_widths)
    _eye_mlp(p, "rho", spec.rho.layer_widths)
    assert float(deepsets_forward(spec, p, [1.0, 2.0, 3.0]).data) == 6.0


def test_deepsets_permutation_bit_identical():
    rng = np.random.default_rng(0)
    for depth in (1, 2):
        spec = DeepSetsSpec(hidden=5, depth=depth)
        p = spec.init(rng)
        X = rng.standard_normal((20, 9))
        base = deepsets_forward(spec, p, X).data
        for _ in range(10):
            perm = rng.permutation(9)
            assert np.array_equal(deepsets_forward(spec, p, X[:, perm]).data, base)


def test_deepsets_batch_matches_single():
    rng = np.random.default_rng(1)
    spec = DeepSetsSpec()
    p = spec.init(rng)
    X = rng.standard_normal((4, 5))
    batch = deepsets_forward(spec, p, X).data
    single = [float(deepsets_forward(spec, p, x).data) for x in X]
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-15)


def test_deepsets_multi_feature():
    rng = np.random.default_rng(2)
    spec = DeepSetsSpec(k=3)
    p = spec.init(rng)
    X = rng.standard_normal((6, 4, 3))
    out = deepsets_forward(spec, p, X).data
    assert out.shape == (6,)
    assert np.array_equal(deepsets_forward(spec, p, X[:, [3, 1, 0, 2]]).data, out)
    with pytest.raises(ConfigurationError):
        deepsets_forward(spec, p, rng.standard_normal((6, 4, 2)))


def test_deepsets_param_count_independent_of_d():
    spec = DeepSetsSpec(hidden=5)
    assert spec.phi.param_count() + spec.rho.param_count() == 76


def test_gin_empty_graph_identity_nets():
    spec = GinSpec(num_layers=2, hidden=1, activation="identity")
    p = ParamStore()
    for layer in range(2):
        _eye_mlp(p, f"gin{layer}", spec.node_mlp(layer).layer_widths)
        p[f"eps{layer}"] = Tensor(0.0)
    _eye_mlp(p, "readout", spec.readout.layer_widths)
    n = 7
    assert float(gin_forward(spec, p, np.zeros((n, n))).data) == n * 1.0


def test_gin_isomorphic_relabeling():
    rng = np.random.default_rng(3)
    spec = GinSpec()
    for t in range(5):
        p = spec.init(rng)
        adj = gen_gnp(8, 0.4, rng).adjacency
        base = gin_forward(spec, p, adj).data
        for _ in range(5):
            perm = rng.permutation(8)
            assert np.array_equal(gin_forward(spec, p, adj[np.ix_(perm, perm)]).data, base)


def test_k33_and_prism_are_3_regular_and_not_isomorphic():
    a, b = k33(), prism()
    assert a.sum(1).tolist() == [3] * 6 and b.sum(1).tolist() == [3] * 6
    # the prism has triangles, K33 is bipartite
    assert np.trace(np.linalg.matrix_power(a, 3)) == 0
    assert np.trace(np.linalg.matrix_power(b, 3)) > 0
    assert not any(np.array_equal(a[np.ix_(p, p)], b) for p in map(list, itertools.permutations(range(6))))


def test_gin_regular_pair_identical():
    spec = GinSpec()
    for seed in range(20):
        p = spec.init(np.random.default_rng(seed))
        # random eps too, not only the zero initialisation
        for layer in range(spec.num_layers):
            p[f"eps{layer}"] = Tensor(np.random.default_rng([seed, layer]).normal())
        assert np.array_equal(gin_forward(spec, p, k33()).data, gin_forward(spec, p, prism()).data)


def test_gin_batch_shape():
    spec = GinSpec()
    p = spec.init(np.random.default_rng(0))
    adj = np.stack([k33(), prism(), np.zeros((6, 6), dtype=np.int8)])
    assert gin_forward(spec, p, adj).shape == (3,)
