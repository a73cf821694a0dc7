import numpy as np
import pytest
from hypothesis import given, strategies as st

from unbflow.errors import PositivityError
from unbflow.hermlin import (SpectralPD, decode_matrix, encode_matrix, geodesic_step,
                             graded_svd, herm_eig, herm_exp, pd_distance, pd_log, pd_sqrt,
                             weyl_spec)


def rand_herm(n, rng):
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (Z + Z.conj().T) / 2


def rand_pd(n, rng, spread=2.0):
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(Z)
    x = (Q * np.exp(rng.uniform(-spread, spread, n))) @ Q.conj().T
    return x / np.linalg.det(x).real ** (1 / n)


def test_eig_diagonal_gives_permutation():
    w, U = herm_eig(np.diag([3.0, 1.0]))
    assert np.allclose(w, [1, 3])
    assert np.allclose(np.abs(U), [[0, 1], [1, 0]])


def test_eig_swap_matrix():
    w, _ = herm_eig(np.array([[0, 1], [1, 0]], dtype=complex))
    assert np.allclose(w, [-1, 1])


def test_eig_descending_order():
    w, _ = herm_eig(np.diag([1.0, 5.0, 3.0]), order="descending")
    assert np.allclose(w, [5, 3, 1])


def test_eig_reconstruction_sweep():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        n = 1 + trial % 12
        H = rand_herm(n, rng)
        w, U = herm_eig(H)
        assert np.linalg.norm(U.conj().T @ U - np.eye(n)) <= 1e-10
        assert np.linalg.norm((U * w) @ U.conj().T - H) <= 1e-9 * max(1.0, np.linalg.norm(H))
        assert np.all(np.diff(w) >= 0)


def test_eig_agrees_with_lapack():
    rng = np.random.default_rng(1)
    H = rand_herm(9, rng)
    assert np.allclose(herm_eig(H)[0], np.linalg.eigvalsh(H), atol=1e-12)


def test_pd_sqrt_examples():
    assert np.allclose(pd_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(pd_sqrt(np.diag([4.0, 0.25])), np.diag([2.0, 0.5]))
    rng = np.random.default_rng(2)
    x = rand_pd(5, rng)
    r = pd_sqrt(x)
    assert np.linalg.norm(r @ r - x) <= 1e-9 * np.linalg.norm(x)


def test_pd_sqrt_rejects_indefinite():
    with pytest.raises(PositivityError):
        pd_sqrt(np.diag([1.0, -1.0]))


def test_geodesic_step_examples():
    rng = np.random.default_rng(3)
    H = rand_herm(3, rng)
    H -= np.trace(H) / 3 * np.eye(3)
    assert np.allclose(geodesic_step(np.eye(3), H), herm_exp(H))
    x = rand_pd(3, rng)
    assert np.allclose(geodesic_step(x, np.zeros((3, 3))), x)
    assert np.allclose(geodesic_step(np.eye(2), np.diag([1.0, -1.0])), np.diag([np.e, 1 / np.e]))


def test_geodesic_step_rejects_non_tangent():
    with pytest.raises(ValueError):
        geodesic_step(np.eye(2), np.eye(2))


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_geodesic_step_invariants(seed, n):
    rng = np.random.default_rng(seed)
    x = rand_pd(n, rng)
    xh = pd_sqrt(x)
    G = rand_herm(n, rng)
    G -= np.trace(G) / n * np.eye(n)
    H = xh @ G @ xh    # tangent at x
    out = geodesic_step(x, H)
    assert abs(np.linalg.det(out) - 1) <= 1e-8
    assert np.max(np.abs(out - out.conj().T)) <= 1e-12 * max(1.0, np.abs(out).max())
    # unit-speed parametrization in the local norm
    assert abs(pd_distance(out, x) - np.linalg.norm(G)) <= 1e-8 * max(1.0, np.linalg.norm(G))


def test_distance_examples():
    rng = np.random.default_rng(4)
    x = rand_pd(4, rng)
    assert pd_distance(x, x) <= 1e-12
    assert np.isclose(pd_distance(np.eye(2), np.diag([np.e ** 2, np.e ** -2])), np.sqrt(8))


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_distance_triangle_and_symmetry(seed, n):
    rng = np.random.default_rng(seed)
    x, y, z = (rand_pd(n, rng) for _ in range(3))
    assert abs(pd_distance(x, y) - pd_distance(y, x)) <= 1e-9
    assert pd_distance(x, z) <= pd_distance(x, y) + pd_distance(y, z) + 1e-9


def test_weyl_spec_examples():
    p, q = weyl_spec(np.zeros((3, 3)), np.zeros((2, 2)))
    assert np.all(p == 0) and np.all(q == 0)
    p, q = weyl_spec(np.array([[0, 1], [1, 0]], dtype=complex), np.zeros((2, 2)))
    assert np.allclose(p, [1, -1]) and np.allclose(q, [0, 0])


@given(st.integers(0, 10_000))
def test_weyl_spec_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    H, G = rand_herm(4, rng), rand_herm(3, rng)
    U, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    V, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    p0, q0 = weyl_spec(H, G)
    p1, q1 = weyl_spec(U @ H @ U.conj().T, V @ G @ V.conj().T)
    assert np.allclose(p0, p1, atol=1e-10) and np.allclose(q0, q1, atol=1e-10)
    assert np.all(np.diff(p0) <= 0) and np.all(np.diff(q0) >= 0)


def test_pd_log_inverts_exp():
    rng = np.random.default_rng(5)
    H = rand_herm(4, rng)
    assert np.allclose(pd_log(herm_exp(H)), H, atol=1e-10)


def test_graded_svd_extreme_scales():
    rng = np.random.default_rng(6)
    C = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    ell = np.array([0.0, -50.0, 40.0, -400.0])
    W, logsv, Z = graded_svd(C, ell)
    assert np.allclose(W.conj().T @ W, np.eye(4), atol=1e-12)
    assert np.allclose(Z.conj().T @ Z, np.eye(4), atol=1e-12)
    # moderate-scale check against the dense product
    ell2 = np.array([0.0, -3.0, 2.0, 1.0])
    W, logsv, Z = graded_svd(C, ell2)
    G = C * np.exp(ell2)
    assert np.allclose(G @ Z, W * np.exp(logsv), atol=1e-10)
    assert np.allclose(np.sort(np.exp(logsv)), np.sort(np.linalg.svd(G, compute_uv=False)))


def test_spectral_pd_roundtrip_and_overflow_guard():
    rng = np.random.default_rng(7)
    x = rand_pd(3, rng)
    s = SpectralPD.from_dense(x)
    assert np.allclose(s.dense(), x)
    assert np.isclose(s.logdet(), 0, atol=1e-10)
    assert np.isclose(s.distance_from_identity(), pd_distance(np.eye(3), x))
    with pytest.raises(OverflowError):
        SpectralPD(np.array([400.0, -400.0]), np.eye(2, dtype=complex)).dense()


def test_matrix_json_roundtrip():
    M = np.array([[1 + 2j, -3.5], [0, 1e-300j]])
    assert np.array_equal(decode_matrix(encode_matrix(M)), M)
