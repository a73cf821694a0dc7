"""Coarse Dulmage-Mendelsohn structure of a matrix tuple.

A pair of subspaces ``(X, Y)`` belongs to the family S_A when
``u^T A_l conj(v) = 0`` for every ``u`` in X, ``v`` in Y and every l.  Bases are
stored as orthonormal *rows*, so the test is ``X @ A_l @ conj(Y).T == 0``.

Orientation: the block I_1 carries the largest entries of p*.  In a frame
whose rows are ordered I_1, I_2, ... (and columns J_1, J_2, ...), the tuple is
block upper triangular and ``X_alpha`` is spanned by the trailing rows.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import InstanceError
from .hermlin import decode_matrix, encode_matrix
from .tuples import MatrixTuple

BRUTE_MAX = 8


def _check_blocks(blocks):
    blocks = [(int(a), int(b)) for a, b in blocks]
    if not blocks:
        raise InstanceError("empty block list")
    for a, b in blocks:
        if a <= 0 or b <= 0:
            raise InstanceError(f"block sizes must be positive, got ({a}, {b})")
    for (a0, b0), (a1, b1) in zip(blocks, blocks[1:]):
        if a0 * b1 >= a1 * b0:
            raise InstanceError(
                f"block ratios must strictly increase: {a0}/{b0} then {a1}/{b1}")
    return blocks


def block_slices(blocks):
    """Row and column index ranges ``(I_alpha, J_alpha)`` for consecutive blocks."""
    rows, cols = [], []
    r = c = 0
    for a, b in blocks:
        rows.append(range(r, r + a))
        cols.append(range(c, c + b))
        r += a
        c += b
    return rows, cols


@dataclass(frozen=True)
class SubspacePair:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        for name in ("X", "Y"):
            B = np.asarray(getattr(self, name), dtype=complex)
            if B.ndim != 2:
                raise ValueError(f"{name} must be a 2-d basis array")
            if B.shape[0] and np.max(np.abs(B @ B.conj().T - np.eye(B.shape[0]))) > 1e-10:
                raise ValueError(f"{name} rows are not orthonormal")
            object.__setattr__(self, name, B)

    @property
    def dims(self):
        return self.X.shape[0], self.Y.shape[0]


def verify_pair(A, pair, tol=1e-8):
    """Return ``(member, violation)`` for the bilinear test ``u^T A_l conj(v)``."""
    if pair.X.shape[1] != A.n or pair.Y.shape[1] != A.m:
        raise InstanceError(
            f"pair lives in C^{pair.X.shape[1]} x C^{pair.Y.shape[1]}, tuple is {A.n} x {A.m}")
    if pair.X.shape[0] == 0 or pair.Y.shape[0] == 0:
        return True, 0.0
    V = pair.X @ A.matrices @ np.conj(pair.Y).T
    viol = float(np.max(np.abs(V)))
    return viol <= tol, viol


@dataclass(frozen=True)
class CoarseDmFlag:
    """Coarse flag given by a row frame and a column frame plus block sizes.

    ``row_frame`` is unitary n-by-n with rows ordered I_1, I_2, ...;
    ``col_frame`` likewise for J_1, J_2, ....
    """

    row_frame: np.ndarray
    col_frame: np.ndarray
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(_check_blocks(self.blocks))
        object.__setattr__(self, "blocks", blocks)
        n = sum(a for a, _ in blocks)
        m = sum(b for _, b in blocks)
        if self.row_frame.shape != (n, n) or self.col_frame.shape != (m, m):
            raise InstanceError(
                f"frames {self.row_frame.shape}, {self.col_frame.shape} do not match blocks {blocks}")

    @property
    def n(self):
        return self.row_frame.shape[0]

    @property
    def m(self):
        return self.col_frame.shape[0]

    def chain(self):
        """Pairs ``(X_alpha, Y_alpha)`` for alpha = 0..theta."""
        out = []
        r_tail = self.n
        s_head = 0
        out.append(SubspacePair(self.row_frame, self.col_frame[:0]))
        for a, b in self.blocks:
            r_tail -= a
            s_head += b
            out.append(SubspacePair(self.row_frame[self.n - r_tail:],
                                    self.col_frame[:s_head]))
        return out

    def dimension_points(self):
        return [p.dims for p in self.chain()]

    def to_json(self):
        return {"blocks": [list(b) for b in self.blocks],
                "row_frame": encode_matrix(self.row_frame),
                "col_frame": encode_matrix(self.col_frame)}

    @classmethod
    def from_json(cls, data):
        return cls(decode_matrix(data["row_frame"]), decode_matrix(data["col_frame"]),
                   tuple(tuple(b) for b in data["blocks"]))


def verify_flag(A, flag, tol=1e-8):
    """Largest membership violation over the nontrivial flag pairs."""
    worst = 0.0
    for pair in flag.chain()[1:-1]:
        worst = max(worst, verify_pair(A, pair, tol)[1])
    return worst <= tol, worst


@dataclass(frozen=True)
class DmReport:
    blocks: tuple
    p_star: np.ndarray
    q_star: np.ndarray
    C_A: float
    min_norm: float
    exact: dict = field(repr=False, compare=False, default=None)

    @property
    def n(self):
        return self.p_star.shape[0]

    @property
    def m(self):
        return self.q_star.shape[0]

    def pairing_constant(self):
        """``1/C_A - 1/n - 1/m``, the common value of p*_i + q*_j on diagonal blocks."""
        return float(self.exact["pair_const"])

    def to_json(self):
        return {"blocks": [list(b) for b in self.blocks],
                "p_star": self.p_star.tolist(), "q_star": self.q_star.tolist(),
                "C_A": self.C_A, "min_norm": self.min_norm}


def dm_report(blocks):
    """Minimum-norm point of the moment polytope determined by the block sizes."""
    blocks = _check_blocks(blocks)
    n = sum(a for a, _ in blocks)
    m = sum(b for _, b in blocks)
    C = sum(Fraction(a * b, a + b) for a, b in blocks)
    p, q = [], []
    for a, b in blocks:
        p += [Fraction(-1, n) + Fraction(b, a + b) / C] * a
        q += [Fraction(-1, m) + Fraction(a, a + b) / C] * b
    norm2 = sum(v * v for v in p) + sum(v * v for v in q)
    const = 1 / C - Fraction(1, n) - Fraction(1, m)
    assert norm2 == const, (norm2, const)
    assert sum(p) == 0 and sum(q) == 0
    report = DmReport(
        blocks=tuple(blocks),
        p_star=np.array([float(v) for v in p]),
        q_star=np.array([float(v) for v in q]),
        C_A=float(C),
        min_norm=float(np.sqrt(float(norm2))),
        exact={"p": p, "q": q, "C_A": C, "norm2": norm2, "pair_const": const},
    )
    assert np.all(np.diff(report.p_star) <= 0) and np.all(np.diff(report.q_star) >= 0)
    return report


def pairing_signs(report):
    """Sign matrix of ``p*_i + q*_j - (1/C_A - 1/n - 1/m)``, exact."""
    const = report.exact["pair_const"]
    S = np.empty((report.n, report.m), dtype=int)
    for i, pi in enumerate(report.exact["p"]):
        for j, qj in enumerate(report.exact["q"]):
            d = pi + qj - const
            S[i, j] = (d > 0) - (d < 0)
    return S


def flag_from_unitaries(sigma, tau, blocks):
    """Coarse flag read off the rows of ``sigma`` and ``tau``.

    ``sigma`` rows must already be ordered with block I_1 (largest p*) first,
    and ``tau`` rows with J_1 (smallest q*) first.  This is the order produced
    by :func:`unbflow.opscale.spectral_monitor`, where ``p`` is nondecreasing.
    Example: for L_1 + L_1^H late in the descent ``p ~ (-k/12, k/24, k/24)``,
    so the first row of sigma spans I_1 and the last two rows span X_1.
    """
    return CoarseDmFlag(np.asarray(sigma, dtype=complex), np.asarray(tau, dtype=complex),
                        tuple(blocks))


def _upper_hull(points):
    """Vertices of the upper hull, left to right, in exact integer arithmetic."""
    pts = sorted(set(points))
    hull = []
    for P in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop hull[-1] unless it makes a strict right turn
            if (x2 - x1) * (P[1] - y1) - (y2 - y1) * (P[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(P)
    return hull


def coordinate_dm_bruteforce(Mabs2):
    """Coarse DM flag of the monomial tuple of a nonnegative matrix, by enumeration.

    Only coordinate subspaces are enumerated, which suffices for monomial
    tuples.  Exponential in n by design; refused above 8 rows or columns.
    """
    M = np.asarray(Mabs2, dtype=float)
    n, m = M.shape
    if n > BRUTE_MAX or m > BRUTE_MAX:
        raise InstanceError(f"brute force is capped at {BRUTE_MAX}x{BRUTE_MAX}, got {n}x{m}")
    support = M > 0
    if not support.any(axis=1).all() or not support.any(axis=0).all():
        raise InstanceError("matrix has a zero row or column")

    best = {}
    for r in range(n + 1):
        for R in combinations(range(n), r):
            zero_cols = tuple(j for j in range(m) if not support[list(R), j].any())
            if r not in best or len(zero_cols) > len(best[r][1]):
                best[r] = (R, zero_cols)
    points = [(r, len(best[r][1])) for r in best]
    hull = _upper_hull(points)
    # hull runs from (0, m) to (n, 0); the flag visits it in reverse
    chain = hull[::-1]
    assert chain[0] == (n, 0) and chain[-1] == (0, m), chain

    row_order, col_order, blocks = [], [], []
    prev_R, prev_C = set(range(n)), set()
    for r, s in chain[1:]:
        R, Cz = best[r]
        R, Cz = set(R), set(Cz)
        assert R <= prev_R and Cz >= prev_C
        new_rows = sorted(prev_R - R)
        new_cols = sorted(Cz - prev_C)
        row_order += new_rows
        col_order += new_cols
        blocks.append((len(new_rows), len(new_cols)))
        prev_R, prev_C = R, Cz
    return CoarseDmFlag(np.eye(n)[row_order].astype(complex),
                        np.eye(m)[col_order].astype(complex), tuple(blocks))


def diagonalize_dm(A, flag, tol=1e-6):
    """Tuple in the flag frame with every off-diagonal block set to zero."""
    if (A.n, A.m) != (flag.n, flag.m):
        raise InstanceError(f"flag is {flag.n}x{flag.m}, tuple is {A.n}x{A.m}")
    ok, viol = verify_flag(A, flag, tol * max(1.0, A.norm()))
    if not ok:
        raise InstanceError(f"flag does not annihilate the tuple (violation {viol:.3e})")
    B = flag.row_frame @ A.matrices @ flag.col_frame.conj().T
    rows, cols = block_slices(flag.blocks)
    out = np.zeros_like(B)
    for I, J in zip(rows, cols):
        sl = (slice(None), slice(I.start, I.stop), slice(J.start, J.stop))
        out[sl] = B[sl]
        try:
            MatrixTuple(B[sl]).validate()
        except InstanceError as exc:
            raise InstanceError(f"diagonal block {len(I)}x{len(J)} degenerates: {exc}") from exc
    return MatrixTuple(out)


def block_tuple(blocks, N=3, seed=0, upper=True):
    """Random tuple in exact coarse DM form with the given block sizes.

    Diagonal blocks are Gaussian (hence scalable for N >= 2) and the strictly
    upper blocks are Gaussian when ``upper`` is set; lower blocks are zero.
    """
    blocks = _check_blocks(blocks)
    rng = np.random.default_rng(seed)
    n = sum(a for a, _ in blocks)
    m = sum(b for _, b in blocks)
    rows, cols = block_slices(blocks)
    mats = np.zeros((N, n, m), dtype=complex)
    for a, I in enumerate(rows):
        for b, J in enumerate(cols):
            if b < a or (b > a and not upper):
                continue
            shape = (N, len(I), len(J))
            mats[:, I.start:I.stop, J.start:J.stop] = (
                rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return MatrixTuple(mats)
