"""Truncated bosonic occupation basis with total-number cap.

States are occupation vectors (o_1, ..., o_m) over the retained modes with
sum(o) <= n_max, ordered graded-lexicographically: first by total occupation,
then lexicographically within each total block.  The vacuum has index 0.

Indexing uses a closed-form combinatorial rank (a perfect hash on the basis),
so hot paths work on precomputed index arrays instead of dictionary lookups.
With suffix sums S_j = sum_{l >= j} o_l and mj = m - j - 1 the rank is

    rank(o) = C(t + m - 1, m) + sum_j [ C(S_j + mj, mj) - C(S_{j+1} + mj, mj) ]

where t = sum(o); the first term is the start offset of the total-t block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError
from .model import BASIS_CAPACITY, ModeGrid

__all__ = [
    "FockBasis",
    "enumerate_basis",
    "apply_creation",
    "apply_annihilation",
]


def _pascal_table(n: int, r: int) -> np.ndarray:
    """Table P[a, b] = C(a, b) for 0 <= a <= n, 0 <= b <= r, as float64.

    Entries stay below 2^53 for every basis admitted by BASIS_CAPACITY, so
    float64 arithmetic on them is exact.
    """
    tab = np.zeros((n + 1, r + 1))
    tab[:, 0] = 1.0
    for a in range(1, n + 1):
        upto = min(a, r)
        tab[a, 1:upto + 1] = tab[a - 1, 1:upto + 1] + tab[a - 1, 0:upto]
    return tab


def _compositions(m: int, total: int):
    """Yield occupation tuples of m modes summing to total, lex ascending."""
    if m == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(m - 1, total - head):
            yield (head,) + rest


@dataclass(frozen=True)
class FockBasis:
    """Enumerated truncated occupation basis with precomputed index maps."""

    m_modes: int
    n_max: int
    occupations: np.ndarray   # (dim, m) uint16
    totals: np.ndarray        # (dim,)   int32
    creation_index: np.ndarray  # (dim, m) int32, -1 when sum would exceed n_max
    creation_amp: np.ndarray    # (dim, m) float64, sqrt(o_i + 1)

    @property
    def dim(self) -> int:
        return self.occupations.shape[0]

    def index_of(self, occ) -> int:
        """Rank of one occupation vector; DomainError when out of truncation."""
        occ = np.asarray(occ, dtype=np.int64)
        if occ.shape != (self.m_modes,) or np.any(occ < 0):
            raise DomainError("occupation vector has wrong shape or negative entries")
        if int(occ.sum()) > self.n_max:
            raise DomainError("occupation total exceeds n_max")
        return int(_rank_batch(occ[None, :], self.m_modes)[0])

    def state(self, index: int) -> tuple:
        return tuple(int(o) for o in self.occupations[index])

    def field_momenta(self, grid: ModeGrid) -> np.ndarray:
        """Total field momentum of every state, shape (dim, d)."""
        if grid.size != self.m_modes:
            raise DomainError("mode grid does not match the basis mode count")
        return self.occupations.astype(float) @ grid.momenta

    def frequency_sums(self, omega: np.ndarray) -> np.ndarray:
        """sum_i o_i omega_i for every state."""
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.m_modes,):
            raise DomainError("omega vector does not match the basis mode count")
        return self.occupations.astype(float) @ omega

    def permute_modes(self, perm: np.ndarray) -> np.ndarray:
        """Index map sigma with state sigma[s] = state s with modes permuted.

        perm sends mode i of the source to mode perm[i] of the target; used to
        realize k -> -k parity on symmetric grids.
        """
        permuted = np.zeros_like(self.occupations)
        permuted[:, np.asarray(perm, dtype=np.int64)] = self.occupations
        return _rank_batch(permuted.astype(np.int64), self.m_modes)


def _rank_batch(occ: np.ndarray, m: int) -> np.ndarray:
    """Vectorized graded-lex rank of a batch of occupation rows."""
    occ = occ.astype(np.int64)
    t = occ.sum(axis=1)
    n_hi = int(t.max(initial=0)) + m
    tab = _pascal_table(n_hi, m)
    # suffix sums S_j, with S_m = 0 appended
    suff = np.concatenate(
        [np.cumsum(occ[:, ::-1], axis=1)[:, ::-1], np.zeros((occ.shape[0], 1), np.int64)],
        axis=1,
    )
    rank = tab[t + m - 1, m].astype(np.int64)
    for j in range(m - 1):
        mj = m - j - 1
        rank += tab[suff[:, j] + mj, mj].astype(np.int64)
        rank -= tab[suff[:, j + 1] + mj, mj].astype(np.int64)
    return rank


def enumerate_basis(m_modes: int, n_max: int,
                    capacity: int = BASIS_CAPACITY) -> FockBasis:
    """Build the full truncated basis with creation index maps.

    Raises CapacityError before allocating anything when C(m + n_max, n_max)
    exceeds the capacity budget.
    """
    if m_modes < 1:
        raise DomainError(f"need at least one mode, got {m_modes}")
    if n_max < 0:
        raise DomainError(f"n_max must be >= 0, got {n_max}")
    dim = math.comb(m_modes + n_max, n_max)
    if dim > capacity:
        raise CapacityError(
            f"basis dimension {dim} exceeds capacity {capacity} "
            f"(m={m_modes}, n_max={n_max})"
        )
    occ = np.empty((dim, m_modes), dtype=np.uint16)
    row = 0
    for total in range(n_max + 1):
        for state in _compositions(m_modes, total):
            occ[row] = state
            row += 1
    totals = occ.sum(axis=1).astype(np.int32)

    # creation maps: index of o + e_i, or -1 when the cap would be exceeded
    cidx = np.full((dim, m_modes), -1, dtype=np.int32)
    camp = np.zeros((dim, m_modes), dtype=float)
    open_rows = totals < n_max
    base = occ[open_rows].astype(np.int64)
    for i in range(m_modes):
        bumped = base.copy()
        bumped[:, i] += 1
        cidx[open_rows, i] = _rank_batch(bumped, m_modes).astype(np.int32)
        camp[open_rows, i] = np.sqrt(base[:, i] + 1.0)
    return FockBasis(
        m_modes=m_modes,
        n_max=n_max,
        occupations=occ,
        totals=totals,
        creation_index=cidx,
        creation_amp=camp,
    )


def apply_creation(occ, mode: int, n_max: int):
    """a_mode^dagger on an occupation tuple.

    Returns (new_occ, sqrt(o_mode + 1)) or None when the result leaves the
    truncation.
    """
    occ = tuple(occ)
    if not 0 <= mode < len(occ):
        raise DomainError(f"mode index {mode} out of range")
    if sum(occ) + 1 > n_max:
        return None
    amp = math.sqrt(occ[mode] + 1.0)
    new = occ[:mode] + (occ[mode] + 1,) + occ[mode + 1:]
    return new, amp


def apply_annihilation(occ, mode: int):
    """a_mode on an occupation tuple.

    Returns (new_occ, sqrt(o_mode)) or None when the mode is empty (the
    result is the zero vector, not a basis state).
    """
    occ = tuple(occ)
    if not 0 <= mode < len(occ):
        raise DomainError(f"mode index {mode} out of range")
    if occ[mode] == 0:
        return None
    amp = math.sqrt(occ[mode])
    new = occ[:mode] + (occ[mode] - 1,) + occ[mode + 1:]
    return new, amp
