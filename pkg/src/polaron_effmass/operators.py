"""Sparse assembly of the model Hamiltonians.

Operators built here, all real-symmetric:

* fixed-total-momentum fibers  (P - P_f)^2 / (2m) + H_f + sum_i v_i (a_i^+ + a_i)
  on a truncated Fock space (:class:`FiberTemplate`, :func:`assemble_fiber`);
* the coupled scaling-limit operator on an electron momentum grid tensored
  with the Fock space (:func:`assemble_coupled_llp`),

      A(lam) = blockdiag_j [fiber(lam q_j) - e0] / lam^2 + W (x) I_F,

  where W is the momentum-space kernel of the external potential;
* the one-particle comparison operator q^2/(2m) + W on the same grid
  (:func:`assemble_schrodinger`);
* a matched pair of finite-ring operators used only for cross-checks:
  the position-space tensor Hamiltonian with a 3-point Laplacian and
  realified field modes (:func:`assemble_direct_tensor`) and its
  field-momentum-frame twin with cosine kinetic blocks and a DFT-sampled
  potential kernel (:func:`assemble_llp_ring`).  For mode momenta
  commensurate with the ring the two have identical spectra in exact
  arithmetic, which pins down the frame transform, the realification and
  the grid (x) Fock layout at once.

The production assembly uses the exact quadratic kinetic energy and the
closed-form potential transform; the ring pair uses the cosine kinetic and
the sampled kernel so that the two ring operators match each other exactly.
Spectra are compared only between matched discretizations.

Index layout everywhere: grid-major, state = j * fock_dim + s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import AccuracyWarning, CapacityError, ConfigError, DomainError
from .fock import FockBasis, enumerate_basis
from .model import ModelSpec, ModeGrid, effective_couplings, fourier_tail_fraction

__all__ = [
    "SymmetricOperator",
    "ElectronGrid",
    "FiberTemplate",
    "assemble_fiber",
    "assemble_coupled_llp",
    "assemble_schrodinger",
    "potential_kernel",
    "ring_sites",
    "ring_potential_kernel",
    "assemble_llp_ring",
    "assemble_direct_tensor",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 2000
_VALIDATE_NNZ_LIMIT = 2_000_000


class SymmetricOperator:
    """A real-symmetric operator stored as CSR plus an optional extra diagonal.

    The split keeps assemblies free of explicit stored zeros: purely diagonal
    contributions (kinetic terms, field energies, shifts) live in `diag`,
    everything else in `matrix`.  Hermiticity is verified at construction
    unless the operator is too large, in which case the caller must vouch for
    symmetry of the factors it was built from (`checked_factors=True`).
    """

    def __init__(self, matrix, diag=None, *, validate=True, checked_factors=False,
                 name=""):
        m = sp.csr_matrix(matrix)
        if m.shape[0] != m.shape[1]:
            raise DomainError("operator matrix must be square")
        m.sum_duplicates()
        m.eliminate_zeros()
        self.matrix = m
        self.diag = None if diag is None else np.asarray(diag, dtype=float)
        if self.diag is not None and self.diag.shape != (m.shape[0],):
            raise DomainError("diagonal length does not match operator dimension")
        self.name = name
        if validate:
            if m.nnz <= _VALIDATE_NNZ_LIMIT:
                diff = (m - m.T).tocoo()
                err = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
                scale = max(1.0, float(np.max(np.abs(m.data))) if m.nnz else 0.0)
                if err > 1e-12 * scale:
                    raise DomainError(
                        f"operator {name or '<unnamed>'} is not symmetric "
                        f"(max asymmetry {err:.3e})"
                    )
            elif not checked_factors:
                raise DomainError(
                    "operator too large for a full symmetry check; assemble it "
                    "from verified symmetric factors and pass checked_factors=True"
                )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz + (0 if self.diag is None else self.dim)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.matrix @ x
        if self.diag is not None:
            y += self.diag * x
        return y

    def diagonal(self) -> np.ndarray:
        d = np.asarray(self.matrix.diagonal(), dtype=float)
        if self.diag is not None:
            d = d + self.diag
        return d

    def to_dense(self, max_dim: int = 4000) -> np.ndarray:
        if self.dim > max_dim:
            raise CapacityError(f"refusing to densify dimension {self.dim} > {max_dim}")
        out = self.matrix.toarray()
        if self.diag is not None:
            out[np.diag_indices_from(out)] += self.diag
        return out

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<SymmetricOperator{label} dim={self.dim} nnz={self.nnz}>"


def _as_momentum(P, dimension: int) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 0:
        if dimension != 1:
            raise DomainError(f"scalar momentum given for dimension {dimension}")
        return P.reshape(1)
    if P.shape != (dimension,):
        raise DomainError(f"momentum must have shape ({dimension},), got {P.shape}")
    return P


@dataclass(frozen=True)
class ElectronGrid:
    """Symmetric momentum lattice for the particle, q in dq * {-n, ..., n}^d.

    The lattice spacing determines an implied periodic box of circumference
    2 pi / dq; kernels built on the grid are convolution operators on that
    box.  The point count per axis is always odd so that q = 0 is a grid
    point and the grid is symmetric under q -> -q.
    """

    dq: float
    q_max: float
    dimension: int = 1

    def __post_init__(self):
        if self.dq <= 0:
            raise ConfigError(f"grid spacing must be positive, got {self.dq}")
        if self.q_max < 0:
            raise ConfigError(f"grid extent must be nonnegative, got {self.q_max}")
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")

    @property
    def n_per_axis(self) -> int:
        return 2 * int(math.floor(self.q_max / self.dq + 1e-12)) + 1

    @cached_property
    def points(self) -> np.ndarray:
        n_half = (self.n_per_axis - 1) // 2
        axis = np.arange(-n_half, n_half + 1)
        grids = np.meshgrid(*([axis] * self.dimension), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1).astype(float)
        order = np.lexsort(pts.T[::-1])
        return pts[order] * self.dq

    @property
    def size(self) -> int:
        return self.n_per_axis ** self.dimension

    def index_of_zero(self) -> int:
        idx = np.flatnonzero(np.all(self.points == 0.0, axis=1))
        return int(idx[0])

    def kinetic_diagonal(self, mass: float) -> np.ndarray:
        return np.sum(self.points**2, axis=1) / (2.0 * mass)

    def parity_permutation(self) -> np.ndarray:
        pts = self.points
        key = {tuple(np.round(p / self.dq).astype(int)): i for i, p in enumerate(pts)}
        perm = np.array(
            [key[tuple(np.round(-p / self.dq).astype(int))] for p in pts], dtype=np.int64
        )
        return perm

    def scaled(self, factor: float) -> "ElectronGrid":
        if factor <= 0:
            raise DomainError("scale factor must be positive")
        return ElectronGrid(self.dq * factor, self.q_max * factor, self.dimension)


class FiberTemplate:
    """Shared pieces of the fixed-momentum fibers of one model.

    Only the kinetic diagonal depends on the total momentum, so the Fock
    basis, the interaction matrix and the field-energy diagonal are built
    once and reused across momenta.
    """

    def __init__(self, spec: ModelSpec, *, grid: ModeGrid | None = None,
                 basis: FockBasis | None = None):
        self.spec = spec
        self.grid = spec.mode_grid() if grid is None else grid
        self.basis = (
            enumerate_basis(self.grid.size, spec.n_max) if basis is None else basis
        )
        self.omegas = np.asarray(spec.dispersion(self.grid.magnitudes()), dtype=float)
        self.couplings = effective_couplings(spec.coupling, self.grid)
        self.field_momenta = self.basis.field_momenta(self.grid)
        self.frequency_sums = self.basis.frequency_sums(self.omegas)
        self.interaction = self._interaction_csr()

    def _interaction_csr(self) -> sp.csr_matrix:
        basis = self.basis
        dim = basis.dim
        valid = basis.creation_index >= 0
        state_idx, mode_idx = np.nonzero(valid)
        rows = basis.creation_index[valid]
        vals = basis.creation_amp[valid] * self.couplings[mode_idx]
        keep = vals != 0.0
        rows, cols, vals = rows[keep], state_idx[keep], vals[keep]
        upper = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim))
        mat = (upper + upper.T).tocsr()
        mat.sum_duplicates()
        return mat

    @property
    def dim(self) -> int:
        return self.basis.dim

    def kinetic_diagonal(self, P) -> np.ndarray:
        P = _as_momentum(P, self.spec.dimension)
        diff = P[None, :] - self.field_momenta
        return np.sum(diff * diff, axis=1) / (2.0 * self.spec.mass)

    def operator(self, P, *, shift: float = 0.0) -> SymmetricOperator:
        """The fiber at total momentum P, optionally shifted by -shift."""
        diag = self.kinetic_diagonal(P) + self.frequency_sums - shift
        return SymmetricOperator(self.interaction, diag=diag, validate=False,
                                 checked_factors=True, name=f"fiber(P={P})")


def assemble_fiber(spec: ModelSpec, P) -> SymmetricOperator:
    """One fixed-total-momentum fiber (convenience wrapper)."""
    return FiberTemplate(spec).operator(P)


def potential_kernel(potential, egrid: ElectronGrid) -> np.ndarray:
    """Momentum-space kernel W[j,j'] = (2 pi)^(-d/2) Vhat(q_j - q_j') dq^d.

    Dense, symmetric, and includes the diagonal (the q = 0 transform).  This
    is the quadrature of the convolution with Vhat on the implied box.
    """
    if potential.dimension != egrid.dimension:
        raise DomainError(
            f"potential dimension {potential.dimension} != grid dimension "
            f"{egrid.dimension}"
        )
    pts = egrid.points
    n, d = pts.shape
    diffs = pts[:, None, :] - pts[None, :, :]
    if d == 1:
        fhat = potential.fourier(diffs[..., 0].ravel()).reshape(n, n)
    else:
        fhat = potential.fourier(diffs.reshape(-1, d)).reshape(n, n)
    w = (2.0 * math.pi) ** (-0.5 * d) * egrid.dq**d * fhat
    return 0.5 * (w + w.T)


def assemble_schrodinger(potential, egrid: ElectronGrid, mass: float,
                         *, v_scale: float = 1.0) -> np.ndarray:
    """Dense one-particle operator q^2/(2 mass) + v_scale * W on the grid.

    The comparison energy curve is only meaningful for mass >= 1/2 (the
    particle cannot get lighter by coupling to the field), so smaller masses
    are rejected.
    """
    if mass < 0.5 - 1e-12:
        raise DomainError(f"mass must be >= 1/2, got {mass}")
    h = v_scale * potential_kernel(potential, egrid)
    h[np.diag_indices_from(h)] += egrid.kinetic_diagonal(mass)
    return h


def _grid_times_fock(n_grid: int, interaction: sp.csr_matrix, int_scale: float,
                     kernel: np.ndarray, diag_flat: np.ndarray,
                     name: str) -> SymmetricOperator:
    """blockdiag(int_scale * interaction) + kernel (x) I_F + diag."""
    fdim = interaction.shape[0]
    blocks = sp.kron(sp.identity(n_grid, format="csr"),
                     interaction * int_scale, format="csr")
    kern = sp.kron(sp.csr_matrix(kernel), sp.identity(fdim, format="csr"),
                   format="csr")
    mat = blocks + kern
    big = mat.nnz > _VALIDATE_NNZ_LIMIT
    return SymmetricOperator(mat, diag=diag_flat, validate=not big,
                             checked_factors=True, name=name)


def assemble_coupled_llp(template: FiberTemplate, potential, egrid: ElectronGrid,
                         lam: float, e0: float, *,
                         tail_tol: float | None = 1e-6) -> SymmetricOperator:
    """The coupled operator A(lam) on the electron grid (x) Fock space.

    Block j carries the grounded fiber (fiber(lam q_j) - e0) / lam^2; the
    external potential acts through its momentum kernel on the grid index
    only.  `e0` is the fiber ground energy at P = 0 and must be supplied by
    the caller (it is a solver output, not a model parameter).

    When the potential transform has more than `tail_tol` of its integral
    beyond the largest momentum transfer resolved by the grid, an
    AccuracyWarning is emitted (set tail_tol=None to skip the check).
    """
    if lam <= 0:
        raise DomainError(f"scaling parameter must be positive, got {lam}")
    spec = template.spec
    if egrid.dimension != spec.dimension:
        raise DomainError("electron grid and model dimensions differ")
    fdim = template.dim
    n_q = egrid.size
    if n_q * fdim > 40_000_000:
        raise CapacityError(
            f"coupled operator dimension {n_q * fdim} exceeds the supported size"
        )
    if tail_tol is not None and egrid.dimension == 1:
        tail = fourier_tail_fraction(potential, 2.0 * egrid.q_max)
        if tail > tail_tol:
            warnings.warn(
                f"potential transform carries {tail:.2e} of its weight beyond "
                f"the grid's maximum momentum transfer {2.0 * egrid.q_max:g}; "
                "the kernel quadrature may be under-resolved",
                AccuracyWarning,
                stacklevel=2,
            )
    kernel = potential_kernel(potential, egrid)
    inv_l2 = 1.0 / (lam * lam)
    # kinetic diagonal of all fibers at once: |lam q_j - P_f|^2 / (2m)
    diff = lam * egrid.points[:, None, :] - template.field_momenta[None, :, :]
    kin = np.sum(diff * diff, axis=2) / (2.0 * spec.mass)
    diag_flat = ((kin + (template.frequency_sums - e0)[None, :]) * inv_l2).ravel()
    return _grid_times_fock(n_q, template.interaction, inv_l2, kernel, diag_flat,
                            name=f"coupled(lam={lam:g})")


# ---------------------------------------------------------------------------
# finite-ring cross-check pair
# ---------------------------------------------------------------------------
#
# An ElectronGrid with spacing dq and n_q points pairs with a position ring
# of circumference L = 2 pi / dq and n_q sites; the DFT maps one onto the
# other exactly.  On that ring the frame transform exp(i x P_f) is a genuine
# diagonal unitary provided every mode momentum is a multiple of 2 pi / L =
# dq (otherwise the phase is discontinuous across the periodic wrap), so the
# matched pair below requires commensurate mode momenta and checks for them.

def ring_sites(egrid: ElectronGrid) -> np.ndarray:
    """Sites of the position ring paired with a one-dimensional grid."""
    if egrid.dimension != 1:
        raise DomainError("ring pairing is one-dimensional")
    n_x = egrid.size
    box = 2.0 * math.pi / egrid.dq
    dx = box / n_x
    return (np.arange(n_x) - n_x // 2) * dx


def ring_potential_kernel(potential, egrid: ElectronGrid) -> np.ndarray:
    """DFT kernel of the site-sampled potential, <q|V|q'> on the paired ring.

    Toeplitz in the momentum index: entry (a, b) is the discrete transform
    (1/n_x) sum_n V(x_n) exp(-i (q_a - q_b) x_n), which is real because the
    site set is symmetric and the potential is even.  This is the sampled
    counterpart of :func:`potential_kernel`; the two agree up to aliasing.
    """
    sites = ring_sites(egrid)
    n_x = egrid.size
    vals = np.asarray(potential.values(sites), dtype=float)
    if not np.allclose(vals, vals[::-1], rtol=0,
                       atol=1e-12 * max(1.0, float(np.max(np.abs(vals))))):
        raise DomainError("ring kernel requires an even potential")
    shifts = np.arange(n_x)
    phases = np.exp(-1j * egrid.dq * shifts[:, None] * sites[None, :])
    col = phases @ vals / n_x
    if float(np.max(np.abs(col.imag))) > 1e-12 * max(1.0, float(np.max(np.abs(col.real)))):
        raise DomainError("ring kernel unexpectedly complex")
    return sla.toeplitz(col.real)


def _ring_guard(template: FiberTemplate, egrid: ElectronGrid):
    if template.spec.dimension != 1 or egrid.dimension != 1:
        raise DomainError("ring cross-check operators are one-dimensional")
    if egrid.size < 3:
        raise DomainError("ring needs at least 3 sites")
    if egrid.size * template.dim > DENSE_LIMIT:
        raise CapacityError(
            f"ring operator dimension {egrid.size * template.dim} exceeds "
            f"{DENSE_LIMIT}; the pair exists for dense cross-checks only"
        )
    ratios = template.grid.momenta[:, 0] / egrid.dq
    if np.max(np.abs(ratios - np.round(ratios))) > 1e-9:
        raise ConfigError(
            "matched ring pair needs mode momenta that are integer multiples "
            f"of the grid spacing {egrid.dq:g}"
        )


def assemble_llp_ring(template: FiberTemplate, potential,
                      egrid: ElectronGrid) -> SymmetricOperator:
    """Field-momentum-frame ring operator: cosine kinetic + sampled kernel.

    Exactly isospectral to :func:`assemble_direct_tensor` with the same
    arguments.  A `None` potential means zero.
    """
    _ring_guard(template, egrid)
    spec = template.spec
    n_x = egrid.size
    dx = 2.0 * math.pi / egrid.dq / n_x
    p = egrid.points[:, 0]
    arg = (p[:, None] - template.field_momenta[None, :, 0]) * dx
    kin = (2.0 - 2.0 * np.cos(arg)) / (2.0 * spec.mass * dx * dx)
    diag_flat = (kin + template.frequency_sums[None, :]).ravel()
    if potential is None:
        kernel = np.zeros((n_x, n_x))
    else:
        kernel = ring_potential_kernel(potential, egrid)
    return _grid_times_fock(n_x, template.interaction, 1.0, kernel, diag_flat,
                            name="llp-ring")


def assemble_direct_tensor(template: FiberTemplate, potential,
                           egrid: ElectronGrid) -> SymmetricOperator:
    """Position-space ring tensor Hamiltonian with realified field modes.

    Kinetic energy is the periodic 3-point Laplacian on the ring paired with
    `egrid`; the external potential is sampled on the sites.  Each +/-k mode
    pair (k > 0 representative) is rotated to the real pair
    u = (a_k + a_{-k})/sqrt(2), w = i(a_k - a_{-k})/sqrt(2), turning the
    coupling into sqrt(2) v [cos(k x)(u^+ + u) + sin(k x)(w^+ + w)]; a k = 0
    mode stays itself with coupling v (u^+ + u).  The rotation preserves the
    total occupation, so the truncated spectra match the momentum-frame
    twin's exactly.
    """
    _ring_guard(template, egrid)
    spec = template.spec
    grid = template.grid
    basis = template.basis
    if not grid.is_symmetric():
        raise DomainError("realified assembly needs a parity-symmetric mode grid")
    sites = ring_sites(egrid)
    n_x = egrid.size
    dx = 2.0 * math.pi / egrid.dq / n_x
    m = grid.size
    perm = grid.parity_permutation()
    v = template.couplings
    # per-mode, per-site coupling fields
    fields = np.zeros((m, n_x))
    for i in range(m):
        j = int(perm[i])
        if j == i:
            fields[i, :] = v[i]
        elif i < j:
            kpos = grid.momenta[j, 0]
            if abs(v[i] - v[j]) > 1e-12 * max(1.0, abs(v[i])):
                raise DomainError("realification needs even couplings in k")
            fields[i, :] = math.sqrt(2.0) * v[i] * np.cos(kpos * sites)
            fields[j, :] = math.sqrt(2.0) * v[i] * np.sin(kpos * sites)
    # one creation+annihilation matrix per mode, combined per site
    valid = basis.creation_index >= 0
    mode_mats = []
    for i in range(m):
        rows = basis.creation_index[valid[:, i], i]
        cols = np.nonzero(valid[:, i])[0]
        amps = basis.creation_amp[valid[:, i], i]
        up = sp.coo_matrix((amps, (rows, cols)), shape=(basis.dim, basis.dim))
        mode_mats.append((up + up.T).tocsr())
    blocks = [
        sum((fields[i, n] * mode_mats[i] for i in range(m)),
            sp.csr_matrix((basis.dim, basis.dim)))
        for n in range(n_x)
    ]
    interaction = sp.block_diag(blocks, format="csr")
    # periodic 3-point Laplacian / (2m)
    main = np.full(n_x, 2.0)
    lap = sp.diags([main, -np.ones(n_x - 1), -np.ones(n_x - 1), [-1.0], [-1.0]],
                   [0, 1, -1, n_x - 1, -(n_x - 1)], format="csr")
    kin = sp.kron(lap / (2.0 * spec.mass * dx * dx),
                  sp.identity(basis.dim, format="csr"), format="csr")
    diag_flat = np.tile(template.frequency_sums, n_x)
    if potential is not None:
        vsite = np.asarray(potential.values(sites), dtype=float)
        diag_flat = diag_flat + np.repeat(vsite, basis.dim)
    mat = interaction + kin
    return SymmetricOperator(mat, diag=diag_flat, name="direct-tensor")
