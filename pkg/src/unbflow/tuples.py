"""Matrix tuples ``A = (A_1, ..., A_N)`` acted on by ``(g, h) : A_l -> g A_l h^H``."""
from dataclasses import dataclass

import numpy as np

from .errors import InstanceError
from .hermlin import decode_matrix, encode_matrix

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MatrixTuple:
    """N complex n-by-m matrices stored as an array of shape ``(N, n, m)``."""

    matrices: np.ndarray

    def __post_init__(self):
        arr = np.array(self.matrices, dtype=np.complex128)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or 0 in arr.shape:
            raise InstanceError(f"expected N x n x m matrices, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InstanceError("tuple has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "matrices", arr)

    @property
    def N(self):
        return self.matrices.shape[0]

    @property
    def n(self):
        return self.matrices.shape[1]

    @property
    def m(self):
        return self.matrices.shape[2]

    def norm(self):
        return float(np.linalg.norm(self.matrices))

    def __len__(self):
        return self.N

    def __getitem__(self, i):
        return self.matrices[i]

    def act(self, g, h):
        """``(g A_l h^H)_l``."""
        return MatrixTuple(g @ self.matrices @ np.conj(h).T)

    def scaled(self, c):
        return MatrixTuple(self.matrices * c)

    def kernel_ranks(self):
        """Ranks of the row-stacked and column-stacked matrices."""
        rows = np.concatenate(list(self.matrices), axis=1)      # n x Nm
        cols = np.concatenate(list(self.matrices), axis=0)      # Nn x m
        sv_r = np.linalg.svd(rows, compute_uv=False)
        sv_c = np.linalg.svd(cols, compute_uv=False)
        scale = max(self.norm(), 1e-300)
        return (int(np.sum(sv_r > RANK_TOL * scale)),
                int(np.sum(sv_c > RANK_TOL * scale)))

    def validate(self):
        """Reject zero tuples and tuples with a common kernel on either side."""
        if self.norm() == 0.0:
            raise InstanceError("tuple is identically zero")
        rr, rc = self.kernel_ranks()
        if rr < self.n:
            raise InstanceError(
                f"common kernel of A_l^H is nontrivial (row rank {rr} < n={self.n})")
        if rc < self.m:
            raise InstanceError(
                f"common kernel of A_l is nontrivial (column rank {rc} < m={self.m})")
        return self

    def to_json(self):
        return {"n": self.n, "m": self.m, "N": self.N,
                "matrices": [encode_matrix(M) for M in self.matrices]}

    @classmethod
    def from_json(cls, data):
        try:
            n, m, N = int(data["n"]), int(data["m"]), int(data["N"])
            mats = [decode_matrix(M) for M in data["matrices"]]
        except (KeyError, TypeError) as exc:
            raise InstanceError(f"malformed tuple JSON: {exc!r}") from exc
        except ValueError as exc:
            raise InstanceError(f"malformed tuple JSON: {exc}") from exc
        if len(mats) != N:
            raise InstanceError(f"N={N} but {len(mats)} matrices given")
        for idx, M in enumerate(mats):
            if M.shape != (n, m):
                raise InstanceError(
                    f"matrices[{idx}] has shape {M.shape}, expected ({n}, {m})")
        return cls(np.stack(mats))


def monomial_tuple(Mabs2):
    """One rank-one matrix ``sqrt(a_ij) E_ij`` per positive entry of ``Mabs2``."""
    M = np.asarray(Mabs2, dtype=float)
    if M.ndim != 2:
        raise InstanceError("expected a matrix")
    if np.any(M < 0):
        raise InstanceError("entries must be nonnegative")
    idx = np.argwhere(M > 0)
    if idx.size == 0:
        raise InstanceError("matrix has no positive entry")
    mats = np.zeros((len(idx),) + M.shape, dtype=complex)
    for l, (i, j) in enumerate(idx):
        mats[l, i, j] = np.sqrt(M[i, j])
    return MatrixTuple(mats)


def random_unitary(n, rng):
    """Haar-distributed unitary via QR with phase correction."""
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def random_unimodular(n, rng, max_cond=20.0):
    """``U diag(e^s) V`` with ``det = 1`` and condition number at most ``max_cond``."""
    s = rng.uniform(0.0, np.log(max_cond), size=n)
    if n > 1:
        s[0], s[-1] = 0.0, np.log(max_cond) * rng.uniform(0.5, 1.0)
    s -= s.mean()
    U = random_unitary(n, rng)
    V = random_unitary(n, rng)
    g = (U * np.exp(s)) @ V
    return g / np.linalg.det(g) ** (1.0 / n)
