"""Dense complex linear algebra on Hermitian and positive-definite matrices.

Conventions
-----------
A positive-definite ``x`` is written ``x = sigma^H diag(exp(p)) sigma`` with
``sigma`` unitary; the rows of ``sigma`` are (conjugated) eigenvectors.  The
:class:`SpectralPD` container stores ``(p, sigma)`` directly so that points far
out on the manifold, whose eigenvalues overflow a double, stay representable.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EigenConvergenceError, PositivityError

MAX_SWEEPS = 60
# exp() overflows a double just above 709
_DENSE_LOG_LIMIT = 300.0


def hermitize(H):
    H = np.asarray(H, dtype=complex)
    return 0.5 * (H + H.conj().T)


def traceless(H):
    H = hermitize(H)
    n = H.shape[0]
    return H - (np.trace(H).real / n) * np.eye(n)


def herm_eig(H, order="ascending", graded=False):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi.

    Parameters
    ----------
    H : array_like, shape (n, n)
        Hermitian input; only its Hermitian part is used.
    order : {"ascending", "descending"}
    graded : bool
        Use the purely relative stopping rule, which keeps small eigenvalues
        of badly scaled positive-definite matrices to high relative accuracy.

    Returns
    -------
    w : ndarray, shape (n,)
    U : ndarray, shape (n, n)
        Unitary with ``U^H H U = diag(w)``.
    """
    H = np.ascontiguousarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("matrix has non-finite entries")
    if H.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0), dtype=complex)
    abs_tol = 0.0 if graded else _kernels.EPS
    w, U, sweeps = _kernels.jacobi_eigh(H, MAX_SWEEPS, abs_tol)
    if sweeps < 0:
        off = np.linalg.norm(U.conj().T @ H @ U - np.diag(w))
        raise EigenConvergenceError(
            f"Jacobi did not converge in {MAX_SWEEPS} sweeps "
            f"(dim {H.shape[0]}, ||H||_F={np.linalg.norm(H):.3e}, "
            f"residual off-diagonal mass {off:.3e}, "
            f"eigenvalue range [{w.min():.3e}, {w.max():.3e}])")
    if order == "ascending":
        idx = np.argsort(w, kind="stable")
    elif order == "descending":
        idx = np.argsort(-w, kind="stable")
    else:
        raise ValueError(f"unknown order {order!r}")
    return w[idx], U[:, idx]


def herm_fun(H, f):
    """Apply a scalar function to a Hermitian matrix through its spectrum."""
    w, U = herm_eig(H)
    return hermitize((U * f(w)) @ U.conj().T)


def _pd_spectrum(x):
    w, U = herm_eig(x, graded=True)
    if w[0] <= 0:
        raise PositivityError(
            f"matrix is not positive definite (smallest eigenvalue {w[0]:.3e})")
    return w, U


def pd_sqrt(x):
    w, U = _pd_spectrum(x)
    return hermitize((U * np.sqrt(w)) @ U.conj().T)


def pd_inv_sqrt(x):
    w, U = _pd_spectrum(x)
    return hermitize((U / np.sqrt(w)) @ U.conj().T)


def pd_log(x):
    w, U = _pd_spectrum(x)
    return hermitize((U * np.log(w)) @ U.conj().T)


def herm_exp(H):
    return herm_fun(H, np.exp)


def normalize_det(x):
    """Hermitian projection followed by division by ``det(x)^(1/n)``."""
    x = hermitize(x)
    w, _ = _pd_spectrum(x)
    logdet = np.sum(np.log(w))
    return x * np.exp(-logdet / x.shape[0])


def geodesic_step(x, H, tol=1e-9):
    """Exponential map ``exp_x(H) = x^1/2 e^{x^-1/2 H x^-1/2} x^1/2``.

    ``H`` must be tangent to the unit-determinant slice at ``x``, i.e.
    ``tr(x^-1 H) = 0`` (plain tracelessness when ``x = I``).
    """
    x = hermitize(x)
    H = hermitize(H)
    if x.shape != H.shape:
        raise ValueError(f"dimension mismatch {x.shape} vs {H.shape}")
    xh = pd_sqrt(x)
    xih = pd_inv_sqrt(x)
    G = hermitize(xih @ H @ xih)
    if abs(np.trace(G).real) > tol * max(1.0, np.linalg.norm(G)) * x.shape[0]:
        raise ValueError(
            f"direction is not tangent to the unit-determinant slice "
            f"(tr x^-1 H = {np.trace(G).real:.3e})")
    out = normalize_det(xh @ herm_exp(G) @ xh)
    assert np.max(np.abs(out - out.conj().T)) <= 1e-12 * max(1.0, np.abs(out).max())
    return out


def pd_distance(x, y):
    """Riemannian distance ``||log(x^-1/2 y x^-1/2)||_F``."""
    x = hermitize(x)
    y = hermitize(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch {x.shape} vs {y.shape}")
    xih = pd_inv_sqrt(x)
    w, _ = _pd_spectrum(hermitize(xih @ y @ xih))
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def weyl_spec(H, G):
    """Spectra in the positive Weyl chamber: ``p`` nonincreasing, ``q`` nondecreasing."""
    p, _ = herm_eig(H, order="descending")
    q, _ = herm_eig(G, order="ascending")
    return p, q


def graded_svd(C, logscale):
    """SVD of ``C @ diag(exp(logscale))`` with the scales kept in log form.

    Returns ``(W, logsv, Z)`` such that ``C diag(e^logscale) Z = W diag(e^logsv)``.
    Small singular values come out with high relative accuracy as long as
    ``C`` itself is well conditioned, whatever the spread of ``logscale``.
    """
    C = np.ascontiguousarray(C, dtype=np.complex128)
    ell = np.ascontiguousarray(logscale, dtype=np.float64)
    W, logsv, Z, sweeps = _kernels.graded_svd(C, ell, MAX_SWEEPS)
    if sweeps < 0:
        raise EigenConvergenceError(
            f"one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps "
            f"(shape {C.shape}, log-scale spread {np.ptp(ell):.3e})")
    return W, logsv, Z


@dataclass(frozen=True)
class SpectralPD:
    """Positive-definite matrix ``sigma^H diag(exp(logeig)) sigma``."""

    logeig: np.ndarray
    sigma: np.ndarray

    @property
    def dim(self):
        return self.logeig.shape[0]

    @classmethod
    def identity(cls, n):
        return cls(np.zeros(n), np.eye(n, dtype=complex))

    @classmethod
    def from_dense(cls, x):
        w, U = _pd_spectrum(hermitize(x))
        return cls(np.log(w), U.conj().T)

    def sorted(self, order="ascending"):
        idx = np.argsort(self.logeig if order == "ascending" else -self.logeig,
                         kind="stable")
        return SpectralPD(self.logeig[idx], self.sigma[idx])

    def fun(self, f):
        """``sigma^H diag(f(logeig)) sigma`` for a function of the log-spectrum."""
        return hermitize((self.sigma.conj().T * f(self.logeig)) @ self.sigma)

    def dense(self):
        if self.logeig.size and np.max(np.abs(self.logeig)) > _DENSE_LOG_LIMIT:
            raise OverflowError(
                f"log-eigenvalues up to {np.max(np.abs(self.logeig)):.1f}; "
                "dense form is not representable")
        return self.fun(np.exp)

    def sqrt(self):
        return self.fun(lambda p: np.exp(p / 2))

    def log(self):
        return self.fun(lambda p: p)

    def logdet(self):
        return float(np.sum(self.logeig))

    def distance_from_identity(self):
        return float(np.linalg.norm(self.logeig))


def encode_matrix(M):
    """JSON form of a complex matrix: rows of ``[re, im]`` pairs."""
    M = np.asarray(M, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in M]


def decode_matrix(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(
            f"complex matrix must be rows of [re, im] pairs, got array of shape {arr.shape}")
    M = arr[..., 0] + 1j * arr[..., 1]
    if not np.all(np.isfinite(M)):
        raise ValueError("complex matrix has non-finite entries")
    return M
