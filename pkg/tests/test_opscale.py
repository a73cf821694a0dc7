import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unbflow import dm, opscale as op, pencil as pc
from unbflow.errors import InstanceError, UnresolvedStructure
from unbflow.hermlin import pd_distance
from unbflow.tuples import MatrixTuple, monomial_tuple, random_unimodular


def rand_tuple(rng, N, n, m):
    return MatrixTuple(rng.standard_normal((N, n, m)) + 1j * rng.standard_normal((N, n, m)))


@pytest.fixture(scope="module")
def l1pair():
    return pc.synthesize(pc.PencilStructure((1,), (1,)), seed=7)[0]


def test_kempf_ness_at_identity():
    rng = np.random.default_rng(0)
    A = rand_tuple(rng, 3, 2, 4)
    s = op.ScalingState.identity(2, 4)
    assert np.isclose(op.kempf_ness_value(A, s), np.log(A.norm() ** 2))


def test_kempf_ness_invariant_under_unimodular_shift():
    rng = np.random.default_rng(1)
    A = rand_tuple(rng, 2, 3, 3)
    g, h = random_unimodular(3, rng), random_unimodular(3, rng)
    s = op.ScalingState.from_dense(g.conj().T @ g, h.conj().T @ h)
    assert np.isclose(op.kempf_ness_value(A, s), np.log(A.act(g, h).norm() ** 2))


def test_kempf_ness_dimension_mismatch():
    A = MatrixTuple(np.ones((1, 2, 2)))
    with pytest.raises(InstanceError):
        op.kempf_ness_value(A, op.ScalingState.identity(3, 2))


def test_moment_map_examples():
    mu = op.moment_map(MatrixTuple(np.eye(3)))
    assert mu.norm() <= 1e-15
    mu = op.moment_map(monomial_tuple([[1, 1], [0, 1]]))
    assert np.allclose(mu.first, np.diag([1 / 6, -1 / 6]))
    assert np.allclose(mu.second, np.diag([-1 / 6, 1 / 6]))


@given(st.integers(0, 10_000))
def test_moment_map_traceless_hermitian_and_scale_free(seed):
    rng = np.random.default_rng(seed)
    A = rand_tuple(rng, 2, 3, 4)
    mu = op.moment_map(A)
    for M in (mu.first, mu.second):
        assert abs(np.trace(M)) <= 1e-14
        assert np.allclose(M, M.conj().T)
    mu2 = op.moment_map(A.scaled(7.5))
    assert np.allclose(mu.first, mu2.first) and np.allclose(mu.second, mu2.second)


def test_descent_step_example():
    s = op.descent_step(monomial_tuple([[1, 1], [0, 1]]), op.ScalingState.identity(2, 2))
    x, y = s.dense()
    assert np.allclose(x, np.diag(np.exp([-1 / 12, 1 / 12])))
    assert np.allclose(y, np.diag(np.exp([1 / 12, -1 / 12])))


def test_descent_step_keeps_determinant():
    rng = np.random.default_rng(2)
    A = rand_tuple(rng, 3, 3, 2)
    s = op.ScalingState.identity(3, 2)
    for _ in range(5):
        s = op.descent_step(A, s)
    x, y = s.dense()
    assert np.isclose(np.linalg.det(x).real, 1) and np.isclose(np.linalg.det(y).real, 1)


def test_engine_matches_reference_step(l1pair):
    s = op.ScalingState.identity(l1pair.n, l1pair.m)
    tr = op.run_descent(l1pair, 12, 1)
    for k in range(1, 13):
        s = op.descent_step(l1pair, s)
        e = tr.entries[k]
        assert np.isclose(op.kempf_ness_value(l1pair, s), e.F, atol=1e-11)
        assert np.isclose(op.transported_gradient(l1pair, s).norm(), e.mu_norm, atol=1e-11)
        assert pd_distance(e.state.x.dense(), s.x.dense()) <= 1e-10


def test_trace_layout(l1pair):
    tr = op.run_descent(l1pair, 10000, 100)
    assert [e.k for e in tr.entries] == list(range(0, 10001, 100))
    assert tr.mu_history.shape == tr.F_history.shape == (10001,)
    tr = op.run_descent(l1pair, 250, 100)
    assert [e.k for e in tr.entries] == [0, 100, 200, 250]


def test_chunking_does_not_change_the_run(l1pair):
    a = op.run_descent(l1pair, 3000, 5)
    b = op.run_descent(l1pair, 3000, 1000)
    assert np.allclose(a.mu_history, b.mu_history, rtol=1e-9, atol=1e-13)
    # entries sitting at the deflation threshold may go at different grid points
    assert a.deflations[0].k == b.deflations[0].k
    assert abs(a.final.F - b.final.F) <= 1e-9
    assert np.allclose(a.final.mu_spectra[0], b.final.mu_spectra[0], atol=1e-12)


def test_deflation_bounded_backward_error(l1pair):
    tr = op.run_descent(l1pair, 20000, 2000)
    assert tr.deflations
    assert max(d.backward_error for d in tr.deflations) <= 1e-11 * l1pair.norm()
    assert max(d.mu_jump for d in tr.deflations) <= 1e-10
    assert abs(tr.final.mu_norm - np.sqrt(1 / 12)) <= 1e-6


def test_no_deflation_escapes(l1pair):
    # rounding noise in the vanishing block is amplified until the tuple scales
    tr = op.run_descent(l1pair, 20000, 2000, deflate_tol=0)
    assert not tr.deflations
    assert tr.final.mu_norm <= 1e-10


def test_scalable_tuple_converges():
    rng = np.random.default_rng(3)
    A = rand_tuple(rng, 3, 3, 3)
    tr = op.run_descent(A, 2000, tol=1e-12)
    assert tr.final.mu_norm <= 1e-12
    assert op.classify(op.run_descent(A, 2000, 200)) == "scalable-or-undecided"


def test_run_descent_rejects_bad_arguments(l1pair):
    with pytest.raises(ValueError):
        op.run_descent(l1pair, 0)
    with pytest.raises(ValueError):
        op.run_descent(l1pair, 10, L=0)
    with pytest.raises(InstanceError):
        op.run_descent(MatrixTuple(np.array([[[1.0, 0.0], [0.0, 0.0]]])), 10)


def test_spectral_monitor_orders_estimate(l1pair):
    tr = op.run_descent(l1pair, 5000)
    rep = op.spectral_monitor(tr.final.state, tr.final.k)
    p, q = rep.pstar_estimate
    assert np.all(np.diff(p) <= 0) and np.all(np.diff(q) >= 0)
    truth = dm.dm_report([(1, 2), (2, 1)])
    assert np.abs(p - truth.p_star).max() <= 1e-2
    with pytest.raises(ValueError):
        op.spectral_monitor(tr.final.state, 0)


def test_extract_coarse_blocks_exact_points():
    for blocks in ([(1, 2), (2, 1)], [(1, 3), (1, 1), (3, 1)], [(2, 3), (4, 3)]):
        rep = dm.dm_report(blocks)
        assert op.extract_coarse_blocks((rep.p_star, rep.q_star)) == blocks


def test_extract_coarse_blocks_rejects_inconsistent():
    with pytest.raises(UnresolvedStructure):
        op.extract_coarse_blocks((np.array([0.2, 0.0, -0.2]), np.array([0.0, 0.0])))
    with pytest.raises(ValueError):
        op.extract_coarse_blocks((np.array([-0.1, 0.1]), np.array([0.0, 0.0])))


def test_offdiag_residual_matches_trace(l1pair):
    blocks = [(1, 2), (2, 1)]
    tr = op.run_descent(l1pair, 200)
    e = tr.final
    direct = op.offdiag_residual(l1pair, e.sigma, e.tau, blocks)
    assert np.isclose(op.trace_residual(e, blocks), direct, rtol=1e-6, atol=1e-14)
    assert op.offdiag_residual(l1pair, e.sigma, e.tau, [(3, 3)]) == 0.0


def test_recession_examples():
    A = monomial_tuple([[1, 1], [0, 1]])
    assert op.recession_value(A, np.zeros((2, 2)), np.zeros((2, 2))) == 0.0
    H = np.diag([1.0, -1.0])
    assert op.recession_value(A, H, -H) == 2.0
    assert op.recession_value(A, -H, H) == 0.0


def test_canonical_l1_pair_recession_sign():
    A = pc.canonical_pencil(pc.PencilStructure((1,), (1,)))
    rep = dm.dm_report([(1, 2), (2, 1)])
    nrm = rep.min_norm
    H, G = np.diag(rep.p_star) / nrm, np.diag(rep.q_star) / nrm
    assert np.isclose(op.recession_value(A, H, G), np.sqrt(1 / 12))
    assert np.isclose(op.recession_value(A, -H, -G), -np.sqrt(1 / 12))


def test_certificate_sandwich_along_run(l1pair):
    tr = op.run_descent(l1pair, 3000, 100)
    for e in tr.entries:
        upper, lower = op.certificate(l1pair, e)
        assert lower <= upper + 1e-12
    upper, lower = op.duality_certificate(l1pair, tr)
    assert 0 <= upper - lower <= 1e-3


def test_snapped_direction():
    assert op.snapped_direction([(2, 2)]) is None
    p, q = op.snapped_direction([(1, 2), (2, 1)])
    assert np.isclose(np.hypot(np.linalg.norm(p), np.linalg.norm(q)), 1)
    assert p[0] < 0 < p[-1]


def test_check_pq_scaling_and_scale_blocks():
    blocks = [(1, 3), (1, 1), (3, 1)]
    A = dm.block_tuple(blocks, seed=4, upper=False)
    out, rep = op.scale_blocks(A, blocks, tol=1e-13)
    err = op.check_pq_scaling(out, rep.p_star + 1 / rep.n, rep.q_star + 1 / rep.m)
    assert err <= 1e-11
    with pytest.raises(ValueError):
        op.check_pq_scaling(out, np.ones(5), np.zeros(5))


def test_normalized_tuple_is_unit(l1pair):
    tr = op.run_descent(l1pair, 100)
    B = op.normalized_tuple(l1pair, tr.final.state)
    assert np.isclose(B.norm(), 1)
    assert np.allclose(np.abs(B.matrices), np.abs(tr.final.tuple_frame), atol=1e-10)


@settings(max_examples=10)
@given(st.integers(0, 1000))
def test_descent_inequalities_random(seed):
    rng = np.random.default_rng(seed)
    n, m, N = (int(v) for v in rng.integers(1, 5, 3))
    A = rand_tuple(rng, N, n, m)
    try:
        A.validate()
    except InstanceError:
        return
    tr = op.run_descent(A, 300, 300)
    mu, F = tr.mu_history, tr.F_history
    assert np.all(F[1:] <= F[:-1] - mu[1:] ** 2 / tr.L + op.F_SLACK)
