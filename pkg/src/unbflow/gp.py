"""Log-sum-exp objectives ``f(x) = log sum_l a_l exp(omega_l . x)``.

The gradient of f ranges over the interior of ``Conv{omega_l}``, so fixed-step
descent drives it to the minimum-norm point of that hull, which
:func:`min_norm_oracle` computes independently.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InstanceError, InvariantViolation

F_SLACK = 1e-9
G_SLACK = 1e-10
STALL_WINDOW = 100
STALL_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class GpInstance:
    omegas: np.ndarray   # (N, n)
    a: np.ndarray        # (N,)

    def __post_init__(self):
        om = np.array(self.omegas, dtype=float)
        a = np.array(self.a, dtype=float).reshape(-1)
        if om.ndim == 1:
            om = om[:, None]
        if om.ndim != 2 or om.shape[0] == 0:
            raise InstanceError("need at least one term")
        if a.shape != (om.shape[0],):
            raise InstanceError(f"{om.shape[0]} exponents but {a.size} coefficients")
        if not (np.all(np.isfinite(om)) and np.all(np.isfinite(a))):
            raise InstanceError("non-finite data")
        if np.any(a <= 0):
            raise InstanceError("coefficients must be positive")
        om.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "a", a)

    @property
    def n(self):
        return self.omegas.shape[1]

    @property
    def N(self):
        return self.omegas.shape[0]

    def to_json(self):
        return {"n": self.n,
                "terms": [{"omega": w.tolist(), "a": float(c)}
                          for w, c in zip(self.omegas, self.a)]}

    @classmethod
    def from_json(cls, data):
        try:
            n = int(data["n"])
            om = [list(map(float, t["omega"])) for t in data["terms"]]
            a = [float(t["a"]) for t in data["terms"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"malformed GP instance JSON: {exc!r}") from exc
        for idx, w in enumerate(om):
            if len(w) != n:
                raise InstanceError(f"terms[{idx}].omega has length {len(w)}, expected {n}")
        return cls(np.array(om).reshape(len(om), n), np.array(a))


def gp_value_grad(inst, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n,) or not np.all(np.isfinite(x)):
        raise ValueError(f"x must be a finite vector of length {inst.n}")
    val, grad = _kernels.gp_eval(inst.omegas, np.log(inst.a), x)
    return float(val), grad


def gp_smoothness(inst):
    return float(np.max(np.sum(inst.omegas ** 2, axis=1)))


def gp_recession(inst, u):
    return float(np.max(inst.omegas @ np.asarray(u, dtype=float)))


@dataclass
class GpTrace:
    xs: np.ndarray      # (K+1, n)
    fs: np.ndarray      # (K+1,)
    grads: np.ndarray   # (K+1, n)
    L: float
    stalled_at: int = None

    def __len__(self):
        return self.fs.shape[0]

    @property
    def grad_norms(self):
        return np.linalg.norm(self.grads, axis=1)


def _stall_index(gn):
    if gn.size <= STALL_WINDOW:
        return None
    old = gn[:-STALL_WINDOW]
    new = gn[STALL_WINDOW:]
    hit = np.flatnonzero(np.abs(old - new) <= STALL_RTOL * np.maximum(old, 1e-300))
    return int(hit[0] + STALL_WINDOW) if hit.size else None


def gp_descent(inst, x0=None, iters=1000, L=None, stall=False):
    """``x_{i+1} = x_i - grad f(x_i) / L`` with both descent inequalities asserted.

    ``L`` defaults to :func:`gp_smoothness`.  With ``stall`` set the trace is
    cut at the first iterate whose gradient norm changed by less than a
    relative 1e-12 over the previous 100 iterations.
    """
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    L = gp_smoothness(inst) if L is None else float(L)
    if not L > 0:
        raise InstanceError("smoothness constant is zero; f is constant in x")
    x0 = np.zeros(inst.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    xs, fs, gs, status, bad = _kernels.gp_descent_kernel(
        inst.omegas, np.log(inst.a), x0, iters, L, F_SLACK, G_SLACK)
    if status == 1:
        raise InvariantViolation(
            f"value decrease inequality failed at iteration {bad}: "
            f"f {fs[bad - 1]:.17g} -> {fs[bad]:.17g}, |grad|^2/L = "
            f"{np.dot(gs[bad], gs[bad]) / L:.17g}", bad)
    if status == 2:
        raise InvariantViolation(
            f"gradient norm increased at iteration {bad}: "
            f"{np.linalg.norm(gs[bad - 1]):.17g} -> {np.linalg.norm(gs[bad]):.17g}", bad)
    tr = GpTrace(xs, fs, gs, L)
    if stall:
        cut = _stall_index(tr.grad_norms)
        if cut is not None:
            tr = GpTrace(xs[:cut + 1], fs[:cut + 1], gs[:cut + 1], L, stalled_at=cut)
    return tr


def _chol(M, floor):
    """Cholesky factor or ``None`` when a pivot falls below ``floor``."""
    k = M.shape[0]
    R = np.zeros_like(M)
    for j in range(k):
        d = M[j, j] - R[j, :j] @ R[j, :j]
        if d <= floor:
            return None
        R[j, j] = np.sqrt(d)
        for i in range(j + 1, k):
            R[i, j] = (M[i, j] - R[i, :j] @ R[j, :j]) / R[j, j]
    return R


def _affine_minimizer(P, S, floor):
    """Weights of the minimum-norm point of the affine hull of ``P[S]``."""
    Q = P[S]
    G = Q @ Q.T + 1.0
    R = _chol(G, floor)
    if R is None:
        return None
    z = np.linalg.solve(R, np.ones(len(S)))
    w = np.linalg.solve(R.T, z)
    return w / w.sum()


def min_norm_oracle(points, tol=1e-12, kkt_tol=1e-9, max_iter=None):
    """Minimum-norm point of ``Conv(points)`` by Wolfe's algorithm.

    Ties in the entering point go to the lowest index.  Corral solves use a
    Cholesky factor of ``Q Q^T + 1 1^T`` with pivot floor 1e-12 (relative).
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise ValueError("empty point set")
    N = P.shape[0]
    scale = max(1.0, float(np.max(np.sum(P ** 2, axis=1))))
    floor = 1e-12 * scale
    max_iter = max_iter or 50 * N + 100

    norms = np.sum(P ** 2, axis=1)
    S = [int(np.argmin(norms))]
    lam = np.array([1.0])
    x = P[S[0]].copy()
    for _ in range(max_iter):
        vals = P @ x
        j = int(np.argmin(vals))
        if vals[j] >= x @ x - tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = _affine_minimizer(P, S, floor)
            if mu is None:
                # numerically dependent corral: the entering point adds nothing
                S.pop()
                lam = lam[:-1]
                break
            if np.all(mu > tol):
                lam = mu
                break
            neg = mu <= tol
            ratios = np.where(neg, lam / np.where(neg, lam - mu, 1.0), np.inf)
            theta = float(np.min(ratios))
            lam = lam + theta * (mu - lam)
            keep = lam > tol
            if not keep.any():
                keep[int(np.argmax(lam))] = True
            S = [s for s, k in zip(S, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
        x_new = lam @ P[S]
        if mu is None and np.allclose(x_new, x):
            break
        x = x_new
    else:
        raise RuntimeError(f"Wolfe iteration did not terminate in {max_iter} rounds")
    viol = float(np.min(P @ x) - x @ x)
    if viol < -kkt_tol:
        raise RuntimeError(f"KKT certificate failed: min omega.p* - |p*|^2 = {viol:.3e}")
    return x


def matscale_instance(Mabs2, centered=True):
    """Matrix-scaling objective ``log sum a_ij exp(x_i + y_j)`` on ``R^(n+m)``.

    With ``centered`` (default) the exponents are ``(e_i - 1/n) + (e_j - 1/m)``,
    so the gradient is the vector of marginal residuals and the descent with
    L = 2 coincides with operator scaling of the monomial tuple.  The plain
    exponents ``e_i + e_j`` are available with ``centered=False``.
    """
    M = np.asarray(Mabs2, dtype=float)
    if M.ndim != 2:
        raise InstanceError("expected a matrix")
    if np.any(M < 0) or not np.all(np.isfinite(M)):
        raise InstanceError("entries must be finite and nonnegative")
    n, m = M.shape
    if not (M > 0).any(axis=1).all():
        raise InstanceError("matrix has a zero row")
    if not (M > 0).any(axis=0).all():
        raise InstanceError("matrix has a zero column")
    idx = np.argwhere(M > 0)
    om = np.zeros((len(idx), n + m))
    om[np.arange(len(idx)), idx[:, 0]] = 1.0
    om[np.arange(len(idx)), n + idx[:, 1]] = 1.0
    if centered:
        om[:, :n] -= 1.0 / n
        om[:, n:] -= 1.0 / m
    return GpInstance(om, M[idx[:, 0], idx[:, 1]])
