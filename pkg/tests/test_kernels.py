import numpy as np
import pytest

from banditalloc import kernels
from banditalloc.kernels import KernelSpec


def brute_force_hsic(Kz, Ly):
    """O(n^4) oracle: average of K_ij (L_ij + L_qr - 2 L_iq) over all index
    4-tuples, written as literal nested loops."""
    n = Kz.shape[0]
    K = Kz.tolist()
    L = Ly.tolist()
    total = 0.0
    for i in range(n):
        Ki = K[i]
        Li = L[i]
        for j in range(n):
            kij = Ki[j]
            lij = Li[j]
            for q in range(n):
                liq = Li[q]
                Lq = L[q]
                for r in range(n):
                    total += kij * (lij + Lq[r] - 2.0 * liq)
    return total / n**4


def test_gram_linear_orthonormal_rows():
    rows = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(kernels.gram(KernelSpec("linear"), rows), np.eye(2))


def test_gram_rbf_unit_diagonal(gen):
    rows = gen.normal(size=(6, 3))
    G = kernels.gram(KernelSpec("rbf", 0.7), rows)
    assert np.allclose(np.diag(G), 1.0, atol=1e-15)


def test_gram_matches_pairwise_loop(gen):
    rows = gen.normal(size=(5, 3))
    for spec in (KernelSpec("linear"), KernelSpec("rbf", 0.31)):
        G = kernels.gram(spec, rows)
        for i in range(5):
            for j in range(5):
                if spec.kind == "linear":
                    expected = float(rows[i] @ rows[j])
                else:
                    expected = float(np.exp(-0.31 * ((rows[i] - rows[j]) ** 2).sum()))
                assert abs(G[i, j] - expected) < 1e-12


def test_gram_properties(gen):
    rows = gen.normal(size=(20, 4))
    for spec in (KernelSpec("linear"), KernelSpec("rbf", None)):
        G = kernels.gram(spec, rows)
        assert np.allclose(G, G.T, atol=1e-9)
        assert np.linalg.eigvalsh(G).min() > -1e-7


def test_one_hot_examples():
    assert np.array_equal(kernels.one_hot_encode([1, 2], 2), np.eye(2))
    same = kernels.one_hot_encode([3, 3, 3], 4)
    assert np.linalg.matrix_rank(same) == 1
    assert np.array_equal(same.sum(axis=1), np.ones(3))
    with pytest.raises(ValueError):
        kernels.one_hot_encode([0, 1], 2)


def test_hsic_constant_gram_is_zero(gen):
    Kz = np.full((8, 8), 3.7)
    Ly = kernels.gram(KernelSpec("linear"), gen.normal(size=(8, 2)))
    assert abs(kernels.hsic_vstat(Kz, Ly)) < 1e-12


def test_hsic_two_point_hand_value():
    z = np.array([[0.0], [1.0]])
    Kz = kernels.gram(KernelSpec("linear"), z)
    assert abs(kernels.hsic_vstat(Kz, Kz) - 0.0625) < 1e-15


def test_hsic_matches_brute_force(gen):
    for n in (7, 12):
        Z = gen.normal(size=(n, 3))
        V = gen.normal(size=(n, 2))
        for spec in (KernelSpec("linear"), KernelSpec("rbf", 0.5)):
            Kz = kernels.gram(spec, Z)
            Ly = kernels.gram(spec, V)
            got = kernels.hsic_vstat(Kz, Ly)
            want = brute_force_hsic(Kz, Ly)
            assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_hsic_three_sum_equals_centered_trace(gen):
    Z = gen.normal(size=(25, 4))
    V = gen.normal(size=(25, 3))
    Kz = kernels.gram(KernelSpec("rbf", None), Z)
    Ly = kernels.gram(KernelSpec("linear"), V)
    a = kernels.hsic_vstat(Kz, Ly)
    b = kernels.hsic_vstat_centered(Kz, Ly)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_hsic_permutation_invariance(gen):
    Z = gen.normal(size=(15, 3))
    V = gen.normal(size=(15, 2))
    Kz = kernels.gram(KernelSpec("linear"), Z)
    Ly = kernels.gram(KernelSpec("linear"), V)
    perm = gen.permutation(15)
    assert abs(kernels.hsic_vstat(Kz, Ly) - kernels.hsic_vstat(Kz[np.ix_(perm, perm)], Ly[np.ix_(perm, perm)])) < 1e-12


def test_hsic_nonnegative_for_psd_kernels(gen):
    for _ in range(20):
        Z = gen.normal(size=(10, 2))
        V = gen.normal(size=(10, 2))
        Kz = kernels.gram(KernelSpec("rbf", 1.0), Z)
        Ly = kernels.gram(KernelSpec("rbf", 2.0), V)
        assert kernels.hsic_vstat(Kz, Ly) >= -1e-12


def test_hsic_dimension_mismatch():
    with pytest.raises(ValueError):
        kernels.hsic_vstat(np.eye(3), np.eye(4))


def test_gradient_zero_for_constant_rows():
    Z = np.tile([1.5, -2.0, 0.5], (10, 1))
    Ly = kernels.gram(KernelSpec("linear"), np.random.default_rng(3).normal(size=(10, 2)))
    for spec in (KernelSpec("linear"), KernelSpec("rbf", 0.9)):
        g = kernels.hsic_gradient_z(Z, Ly, spec)
        assert np.abs(g).max() < 1e-12


def test_gradient_matches_finite_differences(gen):
    n, p = 10, 3
    Z = gen.normal(size=(n, p))
    Ly = kernels.gram(KernelSpec("linear"), kernels.one_hot_encode(gen.integers(1, 4, size=n), 3))
    for spec in (KernelSpec("linear"), KernelSpec("rbf", 0.8)):
        g = kernels.hsic_gradient_z(Z, Ly, spec)
        h = 1e-5
        for idx in np.ndindex(n, p):
            orig = Z[idx]
            Z[idx] = orig + h
            up = kernels.hsic_vstat(kernels.gram(spec, Z), Ly)
            Z[idx] = orig - h
            dn = kernels.hsic_vstat(kernels.gram(spec, Z), Ly)
            Z[idx] = orig
            fd = (up - dn) / (2 * h)
            assert abs(g[idx] - fd) < 1e-6


def test_gradient_linear_scaling():
    gen = np.random.default_rng(8)
    Z = gen.normal(size=(12, 4))
    Ly = kernels.gram(KernelSpec("linear"), gen.normal(size=(12, 2)))
    g1 = kernels.hsic_gradient_z(Z, Ly, KernelSpec("linear"))
    g2 = kernels.hsic_gradient_z(2.0 * Z, Ly, KernelSpec("linear"))
    assert np.allclose(g2, 2.0 * g1, atol=1e-12)


def test_gradient_linear_closed_form(gen):
    Z = gen.normal(size=(9, 3))
    Ly = kernels.gram(KernelSpec("linear"), gen.normal(size=(9, 2)))
    n = 9
    H = np.eye(n) - np.ones((n, n)) / n
    want = 2.0 / n**2 * (H @ Ly @ H @ Z)
    assert np.allclose(kernels.hsic_gradient_z(Z, Ly, KernelSpec("linear")), want, atol=1e-12)


def test_mmd_identical_groups_zero(gen):
    rows = gen.normal(size=(4, 3))
    stacked = np.vstack([rows, rows])
    Kz = kernels.gram(KernelSpec("rbf", 0.5), stacked)
    group = np.array([True] * 4 + [False] * 4)
    assert abs(kernels.mmd_squared_biased(Kz, group)) < 1e-12


def test_mmd_two_point_hand_value():
    Kz = kernels.gram(KernelSpec("linear"), np.array([[0.0], [1.0]]))
    assert abs(kernels.mmd_squared_biased(Kz, np.array([True, False])) - 1.0) < 1e-15


def test_mmd_nonnegative_and_errors(gen):
    rows = gen.normal(size=(12, 3))
    Kz = kernels.gram(KernelSpec("rbf", 1.2), rows)
    group = np.array([True] * 5 + [False] * 7)
    assert kernels.mmd_squared_biased(Kz, group) >= 0
    with pytest.raises(ValueError):
        kernels.mmd_squared_biased(Kz, np.ones(12, dtype=bool))


def test_binary_reduction_ratio_depends_only_on_label_counts(gen):
    # With a linear kernel on one-hot actions and K = 2, the dependence
    # statistic divided by the squared group discrepancy is a function of
    # the label counts alone.
    labels = np.array([1] * 6 + [2] * 10)
    ratios = []
    for _ in range(3):
        Z = gen.normal(size=(16, 5))
        Kz = kernels.gram(KernelSpec("linear"), Z)
        onehot = kernels.one_hot_encode(labels, 2)
        Ly = onehot @ onehot.T
        hs = kernels.hsic_vstat(Kz, Ly)
        mmd = kernels.mmd_squared_biased(Kz, labels == 1)
        ratios.append(hs / mmd)
    assert abs(ratios[0] - ratios[1]) <= 1e-9 * abs(ratios[0])
    assert abs(ratios[0] - ratios[2]) <= 1e-9 * abs(ratios[0])


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("poly")
    with pytest.raises(ValueError):
        KernelSpec("rbf", -1.0)
