"""Matrix pencils ``s A_1 + A_2`` with prescribed Kronecker structure."""
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .dm import _check_blocks
from .errors import InstanceError, UnresolvedStructure
from .tuples import MatrixTuple, random_unimodular


@dataclass(frozen=True)
class PencilStructure:
    epsilons: tuple = ()
    etas: tuple = ()
    regular_size: int = 0
    regular_eigs: tuple = None   # None when not known (recovered structures)

    def __post_init__(self):
        eps = tuple(sorted(int(e) for e in self.epsilons))
        eta = tuple(sorted(int(e) for e in self.etas))
        if any(e <= 0 for e in eps + eta):
            raise InstanceError("minimal indices must be positive")
        if self.regular_size < 0:
            raise InstanceError("regular_size must be nonnegative")
        eigs = self.regular_eigs
        if eigs is not None:
            eigs = tuple(complex(z) for z in eigs)
        if eigs is not None and len(eigs) != self.regular_size:
            raise InstanceError(
                f"{len(eigs)} regular eigenvalues for a regular part of size {self.regular_size}")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "etas", eta)
        object.__setattr__(self, "regular_eigs", eigs)

    @property
    def n(self):
        return sum(self.epsilons) + self.regular_size + sum(e + 1 for e in self.etas)

    @property
    def m(self):
        return sum(e + 1 for e in self.epsilons) + self.regular_size + sum(self.etas)

    def is_empty(self):
        return self.n == 0

    def same_indices(self, other):
        return (self.epsilons, self.etas, self.regular_size) == \
            (other.epsilons, other.etas, other.regular_size)

    def to_json(self):
        return {"epsilons": list(self.epsilons), "etas": list(self.etas),
                "regular_size": self.regular_size,
                "regular_eigs": None if self.regular_eigs is None
                else [[z.real, z.imag] for z in self.regular_eigs]}

    @classmethod
    def from_json(cls, data):
        try:
            return cls(tuple(data.get("epsilons", ())), tuple(data.get("etas", ())),
                       int(data.get("regular_size", 0)),
                       None if data.get("regular_eigs") is None
                       else tuple(complex(re, im) for re, im in data["regular_eigs"]))
        except (TypeError, ValueError) as exc:
            raise InstanceError(f"malformed pencil structure JSON: {exc}") from exc


def build_block(kind, size, eigs=None):
    """Return ``(A1, A2)`` for one Kronecker block.

    ``kind`` is ``"Leps"`` (size eps, shape eps x (eps+1)), ``"LepsDagger"``
    (transpose shape) or ``"Regular"`` (``sI + diag(eigs)``).
    """
    if size <= 0:
        raise InstanceError("block size must be positive")
    if kind == "Leps":
        A1 = np.eye(size, size + 1, k=1)
        A2 = np.eye(size, size + 1)
    elif kind == "LepsDagger":
        A1, A2 = (M.T for M in build_block("Leps", size))
    elif kind == "Regular":
        eigs = np.zeros(size) if eigs is None else np.asarray(eigs, dtype=complex)
        if eigs.shape != (size,):
            raise InstanceError(f"need {size} eigenvalues, got {eigs.shape}")
        A1 = np.eye(size)
        A2 = np.diag(eigs)
    else:
        raise ValueError(f"unknown block kind {kind!r}")
    return A1.astype(complex), A2.astype(complex)


def _direct_sum(parts):
    n = sum(P[0].shape[0] for P in parts)
    m = sum(P[0].shape[1] for P in parts)
    out = np.zeros((2, n, m), dtype=complex)
    r = c = 0
    for A1, A2 in parts:
        a, b = A1.shape
        out[0, r:r + a, c:c + b] = A1
        out[1, r:r + a, c:c + b] = A2
        r += a
        c += b
    return out


def canonical_pencil(structure):
    """Kronecker form with epsilons ascending, regular part, then etas descending."""
    parts = [build_block("Leps", e) for e in structure.epsilons]
    if structure.regular_size:
        eigs = structure.regular_eigs
        if eigs is None:
            eigs = np.arange(structure.regular_size)
        parts.append(build_block("Regular", structure.regular_size, eigs))
    parts += [build_block("LepsDagger", e) for e in sorted(structure.etas, reverse=True)]
    if not parts:
        raise InstanceError("empty pencil structure")
    return MatrixTuple(_direct_sum(parts))


def expected_coarse_structure(structure):
    shapes = [(e, e + 1) for e in structure.epsilons]
    if structure.regular_size:
        shapes.append((structure.regular_size, structure.regular_size))
    shapes += [(e + 1, e) for e in sorted(structure.etas, reverse=True)]
    merged = []
    for sh in shapes:
        # shapes with equal ratio are equal shapes here, and they arrive adjacent
        if merged and merged[-1][0] * sh[1] == merged[-1][1] * sh[0]:
            merged[-1] = (merged[-1][0] + sh[0], merged[-1][1] + sh[1])
        else:
            merged.append(sh)
    return _check_blocks(merged)


def synthesize(structure, seed, max_cond=20.0):
    """Canonical pencil hidden by random unimodular ``g, h`` with bounded condition."""
    A0 = canonical_pencil(structure)
    rng = np.random.default_rng(seed)
    g = random_unimodular(A0.n, rng, max_cond)
    h = random_unimodular(A0.m, rng, max_cond)
    A = A0.act(g, h).validate()
    return A, expected_coarse_structure(structure)


def recover_structure(blocks):
    """Minimal indices and regular size implied by coarse block sizes."""
    blocks = _check_blocks(blocks)
    eps, eta, reg = [], [], 0
    for a, b in blocks:
        if a == b:
            reg += a
            continue
        k = abs(b - a)
        nu, rem = divmod(min(a, b), k)
        if rem or nu == 0:
            raise UnresolvedStructure(
                f"block ({a}, {b}) is not a stack of equal Kronecker blocks")
        (eps if a < b else eta).extend([nu] * k)
    return PencilStructure(tuple(eps), tuple(eta), reg)


def enumerate_structures(max_dim=8, max_blocks=3, max_index=4, max_regular=3):
    """All structures with ``n, m <= max_dim`` and at most ``max_blocks``
    Kronecker blocks (the regular part counts as one)."""
    out = []
    for ne in range(max_blocks + 1):
        for eps in combinations_with_replacement(range(1, max_index + 1), ne):
            for nh in range(max_blocks + 1 - ne):
                for eta in combinations_with_replacement(range(1, max_index + 1), nh):
                    for reg in range(max_regular + 1):
                        count = ne + nh + (reg > 0)
                        if count == 0 or count > max_blocks:
                            continue
                        s = PencilStructure(eps, eta, reg)
                        if s.n <= max_dim and s.m <= max_dim:
                            out.append(s)
    return out


def protocol_pencils(count=40, seed=0, max_dim=8):
    """``count`` distinct structures drawn with ``seed``; pencil ``i`` is synthesized with seed ``i``."""
    pool = enumerate_structures(max_dim)
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(pool), count, replace=False)
    return [(i, pool[j]) + synthesize(pool[j], i) for i, j in enumerate(pick)]
