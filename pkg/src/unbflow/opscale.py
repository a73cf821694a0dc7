"""Operator scaling by fixed-step geodesic descent on the Kempf-Ness function.

The iterate ``(x, y)`` is never formed densely inside the main loop.  With
``x = g^H g`` and ``y = h^H h`` the engine carries the unit-norm tuple
``B = g A h^H / |g A h^H|`` and updates it multiplicatively,

    B <- E1 B E2 / norm,     E1 = exp(-mu_1 / 2L),  E2 = exp(-mu_2 / 2L),

which is the same step as ``x <- x^1/2 exp(-mu_1/L) x^1/2`` up to a unitary
change of the square root.  ``g`` itself is kept as ``diag(e^lg) V^H``.  The
left factors applied over a few steps are accumulated in a matrix ``Pg`` and
folded back by a graded one-sided Jacobi SVD, ``Pg diag(e^lg) = W diag(e^lg')
Z^H``, after which ``V <- V Z`` and ``B <- W^H B W_h``.  In this form
``p = 2 lg`` and ``sigma = V^H`` stay accurate even when ``|p|`` is in the
thousands, and ``B`` is the normalized tuple in the spectral frame.

Deflation.  For a tuple that is not scalable, the descent drives the lower
blocks of ``sigma A tau^H`` to zero while the normalization amplifies the
same blocks of ``B``.  Rounding errors there grow geometrically and would
eventually steer the iteration towards a nearby scalable tuple.  At each
fold, entries of ``B`` whose counterpart in ``sigma A tau^H`` is below
``DEFLATE_TOL * |A|`` are set to zero.  Each such event perturbs A by at
most that amount and is recorded in the trace.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dm import block_slices, dm_report, flag_from_unitaries
from .errors import (EigenConvergenceError, InstanceError, InvariantViolation,
                     UnresolvedStructure)
from .hermlin import (MAX_SWEEPS, SpectralPD, geodesic_step, graded_svd, herm_eig,
                      hermitize, weyl_spec)
from .tuples import MatrixTuple

log = logging.getLogger(__name__)

L_DEFAULT = 2.0
F_SLACK = 1e-9
MU_REL_SLACK = 1e-10
# rounding floor for the gradient-norm monotonicity check near a critical point
MU_ABS_SLACK = 1e-13
REFRESH_EVERY = 8
# entries of sigma A tau^H below this (relative to |A|) are treated as exact zeros
DEFLATE_TOL = 1e-13
ZERO_TOL = 1e-8


@dataclass(frozen=True)
class ScalingState:
    x: SpectralPD
    y: SpectralPD

    @classmethod
    def identity(cls, n, m):
        return cls(SpectralPD.identity(n), SpectralPD.identity(m))

    @classmethod
    def from_dense(cls, x, y):
        return cls(SpectralPD.from_dense(x), SpectralPD.from_dense(y))

    def dense(self):
        return self.x.dense(), self.y.dense()

    def distance_from_identity(self):
        return float(np.hypot(self.x.distance_from_identity(),
                              self.y.distance_from_identity()))


@dataclass(frozen=True)
class MomentValue:
    first: np.ndarray
    second: np.ndarray

    def norm(self):
        return float(np.hypot(np.linalg.norm(self.first), np.linalg.norm(self.second)))

    def spectra(self):
        return weyl_spec(self.first, self.second)


def _check_dims(A, s):
    if (s.x.dim, s.y.dim) != (A.n, A.m):
        raise InstanceError(f"state is {s.x.dim}x{s.y.dim}, tuple is {A.n}x{A.m}")


def scaled_tuple(A, s):
    """``(x^1/2 A_l y^1/2)_l`` together with its squared norm in log form.

    Computed in the spectral frames as ``sigma^H e^{p/2} (sigma A tau^H)
    e^{q/2} tau`` with a common exponential shift, so it is safe for large
    ``|p|, |q|``.  Returns ``(B_unit, log_norm2)``.
    """
    M = s.x.sigma @ A.matrices @ s.y.sigma.conj().T
    E = s.x.logeig[:, None] / 2 + s.y.logeig[None, :] / 2
    shift = E.max()
    M = M * np.exp(E - shift)
    B = s.x.sigma.conj().T @ M @ s.y.sigma
    nrm2 = np.sum(np.abs(B) ** 2)
    if not nrm2 > 0:
        raise InvariantViolation("scaled tuple vanished numerically")
    return B / np.sqrt(nrm2), float(np.log(nrm2) + 2 * shift)


def kempf_ness_value(A, s, check=True):
    """``log tr sum_l x A_l y A_l^H``; cross-checked against ``log |x^1/2 A y^1/2|^2``."""
    _check_dims(A, s)
    _, val = scaled_tuple(A, s)
    if check and max(np.abs(s.x.logeig).max(), np.abs(s.y.logeig).max()) < 200:
        x, y = s.dense()
        tr = np.trace(np.einsum("ij,ljk,kr,lsr->is", x, A.matrices, y,
                                A.matrices.conj())).real
        if not tr > 0:
            raise InvariantViolation(f"trace {tr!r} is not positive")
        if abs(np.log(tr) - val) > 1e-9 * max(1.0, abs(val)):
            raise InvariantViolation(
                f"Kempf-Ness routes disagree: {np.log(tr)!r} vs {val!r}")
    return val


def moment_map(B):
    """``(sum B B^H / |B|^2 - I/n, sum B^H B / |B|^2 - I/m)``."""
    arr = B.matrices if isinstance(B, MatrixTuple) else np.asarray(B, dtype=complex)
    nrm2 = np.sum(np.abs(arr) ** 2)
    if not nrm2 > 0:
        raise InstanceError("moment map of the zero tuple")
    n, m = arr.shape[1:]
    P = np.einsum("lij,lkj->ik", arr, arr.conj()) / nrm2
    Q = np.einsum("lji,ljk->ik", arr.conj(), arr) / nrm2
    mu1 = hermitize(P - np.eye(n) * (np.trace(P).real / n))
    mu2 = hermitize(Q - np.eye(m) * (np.trace(Q).real / m))
    return MomentValue(mu1, mu2)


def transported_gradient(A, s):
    _check_dims(A, s)
    B, _ = scaled_tuple(A, s)
    return moment_map(B)


def descent_step(A, s, L=L_DEFAULT):
    """One step ``x' = x^1/2 exp(-mu_1/L) x^1/2``, ``y' = y^1/2 exp(-mu_2/L) y^1/2``.

    Reference implementation on dense matrices; :func:`run_descent` is the
    production path.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    mu = transported_gradient(A, s)
    x, y = s.dense()
    xh, yh = s.x.sqrt(), s.y.sqrt()
    x1 = geodesic_step(x, -xh @ mu.first @ xh / L)
    y1 = geodesic_step(y, -yh @ mu.second @ yh / L)
    return ScalingState.from_dense(x1, y1)


def check_pq_scaling(B, p, q, tol=1e-9):
    """Distance of ``(sum B B^H, sum B^H B)`` from ``(diag p, diag q)``."""
    arr = B.matrices if isinstance(B, MatrixTuple) else np.asarray(B, dtype=complex)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if abs(p.sum() - q.sum()) > tol:
        raise ValueError(f"marginals disagree: sum p = {p.sum()!r}, sum q = {q.sum()!r}")
    P = np.einsum("lij,lkj->ik", arr, arr.conj())
    Q = np.einsum("lji,ljk->ik", arr.conj(), arr)
    return float(np.sqrt(np.linalg.norm(P - np.diag(p)) ** 2
                         + np.linalg.norm(Q - np.diag(q)) ** 2))


def normalized_tuple(A, s):
    """``e^{p/2} sigma A tau^H e^{q/2}`` scaled to unit norm."""
    _check_dims(A, s)
    M = s.x.sigma @ A.matrices @ s.y.sigma.conj().T
    E = s.x.logeig[:, None] / 2 + s.y.logeig[None, :] / 2
    M = M * np.exp(E - E.max())
    return MatrixTuple(M / np.linalg.norm(M))


@dataclass(frozen=True)
class SpectralReport:
    p: np.ndarray
    q: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    pstar_estimate: tuple


def spectral_monitor(s, k, L=L_DEFAULT):
    """Sorted log-spectra of ``(x, y)`` and the estimate ``-(L/k)(p, q)`` of (p*, q*).

    ``p`` comes out nondecreasing and ``q`` nonincreasing, so the estimate is
    already in Weyl-chamber order (nonincreasing, nondecreasing).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    x = s.x.sorted("ascending")
    y = s.y.sorted("descending")
    return SpectralReport(x.logeig, y.logeig, x.sigma, y.sigma,
                          (-L * x.logeig / k, -L * y.logeig / k))


@dataclass
class TraceEntry:
    k: int
    F: float
    mu_norm: float
    state: ScalingState        # x sorted ascending, y sorted descending
    tuple_frame: np.ndarray    # unit-norm tuple in the spectral frame
    mu_spectra: tuple

    @property
    def p(self):
        return self.state.x.logeig

    @property
    def q(self):
        return self.state.y.logeig

    @property
    def sigma(self):
        return self.state.x.sigma

    @property
    def tau(self):
        return self.state.y.sigma

    def residual_matrix(self):
        """``|sigma A_l tau^H|`` reassembled from the log scales.

        Equal to the direct product in exact arithmetic but keeps entries far
        below the rounding level of ``|A|``, which is where the decaying
        lower blocks live late in a run.
        """
        E = self.F / 2 - self.p[:, None] / 2 - self.q[None, :] / 2
        absB = np.abs(self.tuple_frame)
        out = np.zeros_like(absB)
        nz = absB > 0
        with np.errstate(over="ignore"):
            out[nz] = np.exp(np.log(absB[nz]) + np.broadcast_to(E, absB.shape)[nz])
        return out


@dataclass(frozen=True)
class DeflationEvent:
    k: int
    count: int
    backward_error: float   # Frobenius size of the removed part of sigma A tau^H
    mu_jump: float


@dataclass
class OpDescentTrace:
    A: MatrixTuple
    L: float
    entries: list = field(default_factory=list)
    deflations: list = field(default_factory=list)
    mu_history: np.ndarray = None
    F_history: np.ndarray = None

    @property
    def final(self):
        return self.entries[-1]

    def __len__(self):
        return len(self.entries)


class _Engine:
    """Multiplicative state for the descent; see the module docstring.

    ``B`` is kept in the spectral frame, so the left factor is
    ``g = diag(e^lg) Vg^H`` and row i of ``B`` pairs with ``lg[i]``.
    """

    def __init__(self, A, L, deflate_tol):
        self.A = A
        self.L = float(L)
        n, m = A.n, A.m
        nrm = A.norm()
        self.log_thr = np.log(deflate_tol * nrm) if deflate_tol else -np.inf
        self.B = np.ascontiguousarray(A.matrices / nrm)
        self.F = 2.0 * np.log(nrm)
        self.Vg, self.lg = np.eye(n, dtype=np.complex128), np.zeros(n)
        self.Vh, self.lh = np.eye(m, dtype=np.complex128), np.zeros(m)
        self.mu_prev = -1.0
        self.dF_prev = 0.0
        self.events = []

    def advance(self, steps, k0, refresh, check):
        big = 1e300
        (mus, Fs, F, mu_prev, dF_prev, status, bad,
         ev_k, ev_count, ev_back, ev_jump) = _kernels.descent_run(
            self.B, self.F, self.Vg, self.lg, self.Vh, self.lh, k0, steps, self.L,
            refresh, self.log_thr, self.mu_prev, self.dF_prev, MAX_SWEEPS,
            F_SLACK if check else big, MU_REL_SLACK if check else big,
            MU_ABS_SLACK if check else big)
        k = k0 + bad
        if status == 3:
            raise EigenConvergenceError(f"Jacobi iteration failed at iteration {k}")
        if status == 1:
            raise InvariantViolation(
                f"value decrease inequality failed at iteration {k}: "
                f"F {Fs[bad - 1] if bad else float('nan'):.17g} -> {Fs[bad]:.17g}, "
                f"|mu|^2/L = {mus[bad] ** 2 / self.L:.17g}", k)
        if status == 2:
            prev = mus[bad - 1] if bad else self.mu_prev
            raise InvariantViolation(
                f"gradient norm increased at iteration {k}: {prev:.17g} -> {mus[bad]:.17g}", k)
        self.F, self.mu_prev, self.dF_prev = F, mu_prev, dF_prev
        self.events += [DeflationEvent(int(k0 + a), int(b), float(c), float(d))
                        for a, b, c, d in zip(ev_k, ev_count, ev_back, ev_jump)]
        self.mu_now = float(mus[-1])
        return mus[:-1], Fs[:-1]

    def state(self):
        """Current ``(x, y)`` in spectral form, x ascending and y descending."""
        gi = np.argsort(self.lg, kind="stable")
        hi = np.argsort(-self.lh, kind="stable")
        x = SpectralPD(2 * self.lg[gi], self.Vg.conj().T[gi])
        y = SpectralPD(2 * self.lh[hi], self.Vh.conj().T[hi])
        return ScalingState(x, y), self.B[:, gi][:, :, hi]

    def entry(self, k):
        st, frame = self.state()
        mu = moment_map(self.B)
        return TraceEntry(k, float(self.F), mu.norm(), st, frame, mu.spectra())


def run_descent(A, iters, log_every=None, L=L_DEFAULT, tol=None, check=True,
                refresh_every=REFRESH_EVERY, deflate_tol=DEFLATE_TOL):
    """Fixed-step descent from ``(I, I)`` for ``iters`` steps.

    Trace entries are recorded at k = 0, every ``log_every`` steps and at the
    last iterate.  Both descent inequalities are asserted at every step.  If
    ``tol`` is given the run stops early once ``|mu| <= tol``.

    ``deflate_tol`` (0 disables) controls the zeroing of entries of the
    normalized tuple that are negligible in the frame of ``(sigma, tau)``.
    Without it, rounding noise in the blocks that the descent drives to zero
    is amplified geometrically, and an unscalable tuple is eventually
    treated as a nearby scalable one.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if not L > 0:
        raise ValueError("L must be positive")
    A.validate()
    log_every = log_every or iters
    eng = _Engine(A, L, deflate_tol)
    trace = OpDescentTrace(A, float(L))
    mus_all, Fs_all = [], []
    trace.entries.append(eng.entry(0))
    k = 0
    while k < iters:
        steps = min(iters, (k // log_every + 1) * log_every) - k
        if tol is not None:
            steps = min(steps, refresh_every)
        mus, Fs = eng.advance(steps, k, refresh_every, check)
        mus_all.append(mus)
        Fs_all.append(Fs)
        k += steps
        if k % log_every == 0 or k == iters:
            trace.entries.append(eng.entry(k))
        if tol is not None and eng.mu_now <= tol:
            if trace.entries[-1].k != k:
                trace.entries.append(eng.entry(k))
            break
    fin = trace.entries[-1]
    trace.deflations = eng.events
    trace.mu_history = np.concatenate(mus_all + [[fin.mu_norm]])
    trace.F_history = np.concatenate(Fs_all + [[fin.F]])
    log.debug("descent finished at k=%d, |mu|=%.6g", fin.k, fin.mu_norm)
    return trace


def extract_coarse_blocks(pstar_estimate, gap_threshold=None, k=None, L=L_DEFAULT,
                          tol=None):
    """Cluster the estimate of (p*, q*) into coarse blocks ``[(n_1, m_1), ...]``.

    Entries closer than ``gap_threshold`` are merged.  The row clusters are
    paired with the column clusters in order, and the result is accepted only
    if the block ratios strictly increase and the exact (p*, q*) of those
    blocks lies within ``tol`` (default ``2 * gap_threshold``) of the estimate.
    """
    p = np.asarray(pstar_estimate[0], dtype=float)
    q = np.asarray(pstar_estimate[1], dtype=float)
    if gap_threshold is None:
        gap_threshold = max(1e-2, 5 * L / k) if k else 1e-2
    if tol is None:
        tol = 2 * gap_threshold
    if np.any(np.diff(p) > 1e-12) or np.any(np.diff(q) < -1e-12):
        raise ValueError("estimate must be nonincreasing in p and nondecreasing in q")

    def sizes(v):
        cuts = np.flatnonzero(np.abs(np.diff(v)) > gap_threshold)
        edges = np.concatenate([[0], cuts + 1, [len(v)]])
        return [int(b - a) for a, b in zip(edges, edges[1:])]

    rs, cs = sizes(p), sizes(q)
    hint = "run more iterations or raise the gap threshold"
    if len(rs) != len(cs):
        raise UnresolvedStructure(
            f"{len(rs)} row clusters vs {len(cs)} column clusters; {hint}")
    blocks = list(zip(rs, cs))
    for (a0, b0), (a1, b1) in zip(blocks, blocks[1:]):
        if a0 * b1 >= a1 * b0:
            raise UnresolvedStructure(f"block ratios {blocks} are not increasing; {hint}")
    rep = dm_report(blocks)
    err = max(np.abs(rep.p_star - p).max(), np.abs(rep.q_star - q).max())
    if err > tol:
        raise UnresolvedStructure(
            f"blocks {blocks} predict (p*, q*) off by {err:.3g} > {tol:.3g}; {hint}")
    rows, cols = block_slices(blocks)
    pair = [p[I.start] + q[J.start] for I, J in zip(rows, cols)]
    if np.ptp(pair) > tol:
        raise UnresolvedStructure(f"pairing sums {pair} are not constant; {hint}")
    return blocks


def _lower_mask(blocks):
    rows, cols = block_slices(blocks)
    n = rows[-1].stop
    m = cols[-1].stop
    mask = np.zeros((n, m), dtype=bool)
    for a, I in enumerate(rows):
        for b, J in enumerate(cols):
            if a > b:
                mask[I.start:I.stop, J.start:J.stop] = True
    return mask


def offdiag_residual(A, sigma, tau, blocks):
    """Largest ``|(sigma A_l tau^H)_ij|`` over strictly lower block positions."""
    mask = _lower_mask(blocks)
    if not mask.any():
        return 0.0
    M = np.abs(sigma @ A.matrices @ np.conj(tau).T)
    return float(M[:, mask].max())


def trace_residual(entry, blocks):
    """Same quantity as :func:`offdiag_residual`, from the engine's log-scaled frame."""
    mask = _lower_mask(blocks)
    if not mask.any():
        return 0.0
    return float(entry.residual_matrix()[:, mask].max())


def recession_value(A, H, G, zero_tol=ZERO_TOL):
    """``max { p_i + q_j : (sigma A_l tau^H)_ij != 0 }`` for ``H = sigma^H diag(p) sigma``."""
    p, U = herm_eig(H)
    q, V = herm_eig(G)
    return _recession(A, p, U.conj().T, q, V.conj().T, zero_tol)


def _recession(A, p, sigma, q, tau, zero_tol):
    M = np.abs(sigma @ A.matrices @ np.conj(tau).T).max(axis=0)
    support = M > zero_tol * A.norm()
    if not support.any():
        raise InvariantViolation("no entry of the rotated tuple is above tolerance")
    S = p[:, None] + q[None, :]
    return float(S[support].max())


def certificate(A, entry, zero_tol=ZERO_TOL):
    """``(upper, lower)`` at one trace entry: the gradient norm and minus the
    recession value along the unit direction ``(log x, log y)``."""
    p, q = entry.p, entry.q
    nrm = np.hypot(np.linalg.norm(p), np.linalg.norm(q))
    if nrm == 0.0:
        return entry.mu_norm, 0.0
    lower = -_recession(A, p / nrm, entry.sigma, q / nrm, entry.tau, zero_tol)
    return entry.mu_norm, lower


def snapped_direction(blocks):
    """Unit direction ``-(p*, q*)`` of ``blocks``, ordered like the rows of
    ``sigma`` and ``tau``; ``None`` when the blocks give the zero point."""
    rep = dm_report(blocks)
    if len(rep.blocks) == 1:
        return None
    p, q = -rep.p_star, -rep.q_star
    nrm = np.hypot(np.linalg.norm(p), np.linalg.norm(q))
    return p / nrm, q / nrm


def duality_certificate(A, trace, blocks=None, zero_tol=ZERO_TOL):
    """``(upper, lower)`` at the final iterate; ``lower <= upper`` by weak duality.

    The direction is the final estimate of (p*, q*) rounded to the exact
    point of the coarse blocks it resolves to (``blocks`` if given).  When
    no block structure can be read off, the raw direction is used.
    """
    if not trace.entries:
        raise ValueError("empty trace")
    fin = trace.final
    if blocks is None and fin.k > 0:
        est = spectral_monitor(fin.state, fin.k, trace.L).pstar_estimate
        try:
            blocks = extract_coarse_blocks(est, k=fin.k, L=trace.L)
        except UnresolvedStructure:
            blocks = None
    if blocks is None:
        return certificate(A, fin, zero_tol)
    d = snapped_direction(blocks)
    if d is None:
        return fin.mu_norm, 0.0
    return fin.mu_norm, -_recession(A, d[0], fin.sigma, d[1], fin.tau, zero_tol)


def classify(trace):
    """``"unscalable"`` or ``"scalable-or-undecided"`` by the final-gap heuristic."""
    mus = [e.mu_norm for e in trace.entries]
    last = mus[-1]
    gap = abs(mus[-2] - mus[-1]) if len(mus) > 1 else np.inf
    return "unscalable" if (last > 10 * gap and last > 1e-2) else "scalable-or-undecided"


@dataclass
class Analysis:
    trace: OpDescentTrace
    blocks: list
    report: object
    flag: object
    residual: float
    pstar_estimate: tuple
    verdict: str


def analyze(A, iters, log_every=None, gap_threshold=None, L=L_DEFAULT):
    """Descent followed by block extraction; raises UnresolvedStructure on failure.

    The scalability heuristic compares the last two logged gradient norms,
    so ``log_every`` defaults to a tenth of the run.
    """
    trace = run_descent(A, iters, log_every or max(1, iters // 10), L=L)
    fin = trace.final
    est = spectral_monitor(fin.state, fin.k, L).pstar_estimate
    verdict = classify(trace)
    if verdict != "unscalable":
        blocks = [(A.n, A.m)]
    else:
        blocks = extract_coarse_blocks(est, gap_threshold, k=fin.k, L=L)
    rep = dm_report(blocks)
    flag = flag_from_unitaries(fin.sigma, fin.tau, blocks)
    return Analysis(trace, blocks, rep, flag, trace_residual(fin, blocks), est, verdict)


def scale_blocks(Bhat, blocks, iters=20000, tol=1e-12, L=L_DEFAULT):
    """Exact (p* + 1/n, q* + 1/m)-scaling of a block-diagonal tuple, block by block.

    Each diagonal block is balanced by descent and rescaled so that its share
    of the norm is ``n_a m_a / ((n_a + m_a) C_A)``.
    """
    rep = dm_report(blocks)
    rows, cols = block_slices(rep.blocks)
    out = np.zeros_like(Bhat.matrices)
    for (a, b), I, J in zip(rep.blocks, rows, cols):
        blk = MatrixTuple(Bhat.matrices[:, I.start:I.stop, J.start:J.stop])
        tr = run_descent(blk, iters, L=L, tol=tol)
        fin = tr.final
        share = a * b / ((a + b) * rep.C_A)
        out[:, I.start:I.stop, J.start:J.stop] = fin.tuple_frame * np.sqrt(share)
    return MatrixTuple(out), rep
