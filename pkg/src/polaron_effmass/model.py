"""Model definitions: dispersions, couplings, mode grids, potentials, trial functions.

Units and conventions used throughout the package:

* hbar = 1 and the particle mass is fixed at m = 1/2, so the bare kinetic
  energy of the particle is p^2.
* Fourier transform: Vhat(q) = (2*pi)^(-d/2) * integral V(x) exp(-i q x) dx.
  Every module uses this convention; the inverse carries the same prefactor
  with exp(+i q x).
* A field mode lattice with spacing dk carries midpoint quadrature weights
  w_i = dk^d.  The discretized coupling amplitude of mode i is
  v_i = v(k_i) * sqrt(w_i), which makes sum_i |v_i|^2 a Riemann sum of
  integral |v(k)|^2 dk.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate as _integrate
from scipy import special as _special

from .errors import CapacityError, ConfigError, DomainError

__all__ = [
    "MASS",
    "FROEHLICH_CONSTANT",
    "BASIS_CAPACITY",
    "ConstantDispersion",
    "TabulatedDispersion",
    "ZeroCoupling",
    "ConstantCoupling",
    "PowerLawCoupling",
    "FroehlichCoupling",
    "ModeGrid",
    "build_mode_grid",
    "effective_couplings",
    "ModelSpec",
    "GaussianWell",
    "PoschlTeller",
    "SoftStep",
    "ScaledPotential",
    "fourier_tail_fraction",
    "FourierBump",
    "TruncatedGaussian",
]

#: Particle mass.  Fixed by convention; the kinetic term is p^2 = p^2/(2*MASS).
MASS = 0.5

#: Normalization constant of the Froehlich-form coupling v(k) = c sqrt(alpha)/|k|.
FROEHLICH_CONSTANT = 1.0 / (math.sqrt(2.0) * math.pi)

#: Hard ceiling on the truncated Fock dimension before a CapacityError is raised.
BASIS_CAPACITY = 5_000_000


# ---------------------------------------------------------------------------
# dispersions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantDispersion:
    """Gapped flat field dispersion omega(k) = omega0 > 0."""

    omega0: float = 1.0

    def __post_init__(self):
        if not self.omega0 > 0.0:
            raise ConfigError(f"dispersion omega0 must be positive, got {self.omega0}")

    def __call__(self, k_mag: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(k_mag, dtype=float), self.omega0)

    def floor(self) -> float:
        return self.omega0


@dataclass(frozen=True)
class TabulatedDispersion:
    """Isotropic dispersion interpolated linearly from (|k|, omega) samples."""

    samples: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.samples, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ConfigError("tabulated dispersion needs >= 2 rows of (|k|, omega)")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise ConfigError("tabulated dispersion |k| column must be strictly increasing")
        if np.any(pts[:, 1] <= 0):
            raise ConfigError("tabulated dispersion omega values must be positive")
        object.__setattr__(self, "samples", tuple(map(tuple, pts)))

    def __call__(self, k_mag: np.ndarray) -> np.ndarray:
        pts = np.asarray(self.samples, dtype=float)
        k = np.asarray(k_mag, dtype=float)
        if np.any(k < pts[0, 0] - 1e-12) or np.any(k > pts[-1, 0] + 1e-12):
            raise DomainError("tabulated dispersion queried outside its sample range")
        return np.interp(k, pts[:, 0], pts[:, 1])

    def floor(self) -> float:
        return float(min(p[1] for p in self.samples))


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroCoupling:
    """Free field, v(k) = 0."""

    def __call__(self, k_mag: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(k_mag, dtype=float))


@dataclass(frozen=True)
class ConstantCoupling:
    """Flat real coupling v(k) = g."""

    g: float = 0.1

    def __call__(self, k_mag: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(k_mag, dtype=float), self.g)


@dataclass(frozen=True)
class PowerLawCoupling:
    """Real isotropic coupling v(k) = g |k|^(-s) with s >= 0.

    Singular at k = 0 for s > 0; grids feeding it must keep |k| bounded away
    from zero (ir_cutoff >= dk/2).
    """

    g: float = 0.1
    s: float = 1.0

    def __post_init__(self):
        if self.s < 0:
            raise ConfigError(f"power-law exponent must be >= 0, got {self.s}")

    def __call__(self, k_mag: np.ndarray) -> np.ndarray:
        k = np.asarray(k_mag, dtype=float)
        if self.s > 0 and np.any(k == 0.0):
            raise ConfigError(
                "power-law coupling evaluated at k = 0; use a positive ir_cutoff"
            )
        return self.g * k ** (-self.s)


@dataclass(frozen=True)
class FroehlichCoupling:
    """Froehlich-form coupling v(k) = FROEHLICH_CONSTANT sqrt(alpha)/|k| in d = 3."""

    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")

    def __call__(self, k_mag: np.ndarray) -> np.ndarray:
        k = np.asarray(k_mag, dtype=float)
        if np.any(k == 0.0):
            raise ConfigError(
                "Froehlich coupling evaluated at k = 0; use a positive ir_cutoff"
            )
        return FROEHLICH_CONSTANT * math.sqrt(self.alpha) / k


# ---------------------------------------------------------------------------
# mode grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeGrid:
    """Finite set of retained field modes with quadrature weights.

    momenta has shape (m, d); weights has shape (m,).  Grids built by
    :func:`build_mode_grid` are symmetric under k -> -k and ordered
    lexicographically in the underlying integer lattice indices.
    """

    momenta: np.ndarray
    weights: np.ndarray
    dk: float

    def __post_init__(self):
        momenta = np.atleast_2d(np.asarray(self.momenta, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if momenta.shape[0] != weights.shape[0]:
            raise DomainError("mode grid momenta and weights disagree in length")
        if np.any(weights <= 0):
            raise DomainError("mode quadrature weights must be positive")
        object.__setattr__(self, "momenta", momenta)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.momenta.shape[0]

    @property
    def dimension(self) -> int:
        return self.momenta.shape[1]

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.momenta, axis=1)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """True when for every retained k there is a retained -k."""
        try:
            self.parity_permutation(tol=tol)
        except DomainError:
            return False
        return True

    def parity_permutation(self, tol: float = 1e-12) -> np.ndarray:
        """Index permutation pi with momenta[pi[i]] = -momenta[i].

        Raises DomainError when the grid is not closed under k -> -k.
        """
        keys = {tuple(np.round(k / max(self.dk, 1e-300), 6)): i
                for i, k in enumerate(self.momenta)}
        perm = np.empty(self.size, dtype=np.int64)
        for i, k in enumerate(self.momenta):
            j = keys.get(tuple(np.round(-k / max(self.dk, 1e-300), 6)))
            if j is None or not np.allclose(self.momenta[j], -k, atol=tol):
                raise DomainError("mode grid is not symmetric under k -> -k")
            perm[i] = j
        return perm


def build_mode_grid(dk: float, uv_cutoff: float, ir_cutoff: float = 0.0,
                    dimension: int = 1) -> ModeGrid:
    """Enumerate lattice modes k = dk * n, n integer, with ir <= |k| <= uv.

    The |k| comparisons use the Euclidean norm.  Weights are the midpoint
    quadrature weights dk^d.  An empty selection is a configuration error.
    """
    if dk <= 0:
        raise ConfigError(f"dk must be positive, got {dk}")
    if uv_cutoff <= 0:
        raise ConfigError(f"uv_cutoff must be positive, got {uv_cutoff}")
    if ir_cutoff < 0:
        raise ConfigError(f"ir_cutoff must be >= 0, got {ir_cutoff}")
    if dimension not in (1, 2, 3):
        raise ConfigError(f"dimension must be 1, 2 or 3, got {dimension}")
    nmax = int(math.floor(uv_cutoff / dk + 1e-9))
    sel = []
    for n in itertools.product(range(-nmax, nmax + 1), repeat=dimension):
        k = dk * np.asarray(n, dtype=float)
        mag = float(np.linalg.norm(k))
        if ir_cutoff - 1e-12 * dk <= mag <= uv_cutoff + 1e-12 * dk:
            sel.append(n)
    if not sel:
        raise ConfigError(
            f"mode window [{ir_cutoff}, {uv_cutoff}] with dk={dk} retains no modes"
        )
    sel.sort()
    momenta = dk * np.asarray(sel, dtype=float)
    weights = np.full(len(sel), dk ** dimension, dtype=float)
    return ModeGrid(momenta=momenta, weights=weights, dk=dk)


def effective_couplings(coupling, grid: ModeGrid) -> np.ndarray:
    """Discretized amplitudes v_i = v(k_i) sqrt(w_i) on a mode grid."""
    v = coupling(grid.magnitudes())
    return np.asarray(v, dtype=float) * np.sqrt(grid.weights)


# ---------------------------------------------------------------------------
# model spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Complete definition of one truncated particle-field model.

    The model couples a particle of mass 1/2 to a bosonic field over the
    retained mode grid; total field occupation is capped at n_max.
    """

    dimension: int
    dispersion: object
    coupling: object
    dk: float
    uv_cutoff: float
    ir_cutoff: float
    n_max: int
    mass: float = field(default=MASS, init=False)

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.n_max < 0:
            raise ConfigError(f"n_max must be >= 0, got {self.n_max}")
        if isinstance(self.coupling, FroehlichCoupling) and self.dimension != 3:
            raise ConfigError("the Froehlich coupling is defined in dimension 3 only")
        singular = isinstance(self.coupling, FroehlichCoupling) or (
            isinstance(self.coupling, PowerLawCoupling) and self.coupling.s > 0
        )
        if singular and self.ir_cutoff < 0.5 * self.dk:
            raise ConfigError(
                "singular couplings require ir_cutoff >= dk/2 "
                f"(got ir_cutoff={self.ir_cutoff}, dk={self.dk})"
            )

    def mode_grid(self) -> ModeGrid:
        grid = build_mode_grid(self.dk, self.uv_cutoff, self.ir_cutoff, self.dimension)
        omega = self.dispersion(grid.magnitudes())
        if np.any(omega <= 0):
            raise ConfigError("dispersion must be positive on every retained mode")
        return grid

    def fock_dimension(self, grid: ModeGrid | None = None) -> int:
        m = (grid or self.mode_grid()).size
        dim = math.comb(m + self.n_max, self.n_max)
        if dim > BASIS_CAPACITY:
            raise CapacityError(
                f"truncated Fock dimension {dim} exceeds capacity {BASIS_CAPACITY}"
            )
        return dim


# ---------------------------------------------------------------------------
# pinning potentials
# ---------------------------------------------------------------------------

class _Potential:
    """Shared helpers for the closed-form potential families."""

    dimension: int = 1

    def values(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fourier(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sup_norm(self) -> float:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.values(x)


def _axis_norm_sq(x: np.ndarray, dimension: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dimension == 1:
        # accept scalars, flat arrays, matrices of scalar arguments, or
        # explicit (..., 1) point arrays
        if x.ndim >= 2 and x.shape[-1] == 1:
            x = x[..., 0]
        return x * x
    x = np.atleast_2d(x)
    if x.shape[-1] != dimension:
        raise DomainError(f"expected points of dimension {dimension}")
    return np.sum(x * x, axis=-1)


@dataclass(frozen=True)
class GaussianWell(_Potential):
    """Attractive Gaussian well V(x) = -depth exp(-|x|^2/(2 width^2)).

    Closed-form transform: Vhat(q) = -depth width^d exp(-width^2 |q|^2 / 2).
    """

    depth: float
    width: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        if self.depth <= 0 or self.width <= 0:
            raise ConfigError("GaussianWell needs depth > 0 and width > 0")

    def values(self, x):
        r2 = _axis_norm_sq(x, self.dimension)
        return -self.depth * np.exp(-0.5 * r2 / self.width**2)

    def fourier(self, q):
        q2 = _axis_norm_sq(q, self.dimension)
        return -self.depth * self.width**self.dimension * np.exp(-0.5 * self.width**2 * q2)

    def sup_norm(self):
        return self.depth


@dataclass(frozen=True)
class PoschlTeller(_Potential):
    """One-dimensional well V(x) = -depth sech^2(x).

    Vhat(q) = -depth (2 pi)^(-1/2) * pi q / sinh(pi q / 2), continuous at q=0
    with value -2 depth / sqrt(2 pi).  For depth = l(l+1)/2m the ground energy
    of p^2/2m + V is -l^2/(2m) exactly, which the tests exploit.
    """

    depth: float
    dimension: int = 1

    def __post_init__(self):
        if self.depth <= 0:
            raise ConfigError("PoschlTeller needs depth > 0")
        if self.dimension != 1:
            raise ConfigError("PoschlTeller is implemented in dimension 1 only")

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return -self.depth / np.cosh(x) ** 2

    def fourier(self, q):
        q = np.asarray(q, dtype=float)
        out = np.empty_like(q)
        small = np.abs(q) < 1e-8
        # pi q / sinh(pi q/2) -> 2 as q -> 0
        out[small] = 2.0 - (np.pi * q[small]) ** 2 / 12.0
        qs = q[~small]
        # pi q / sinh(pi q / 2), written to stay finite for large |q|
        half = 0.5 * np.pi * np.abs(qs)
        out[~small] = 2.0 * np.pi * np.abs(qs) * np.exp(-half) / (
            1.0 - np.exp(-2.0 * half))
        return -self.depth / math.sqrt(2.0 * math.pi) * out

    def sup_norm(self):
        return self.depth

    def exact_ground_energy(self, mass: float) -> float:
        """Closed-form ground energy of p^2/(2 mass) - depth sech^2(x)."""
        ell = 0.5 * (-1.0 + math.sqrt(1.0 + 8.0 * mass * self.depth))
        return -ell * ell / (2.0 * mass)


@dataclass(frozen=True)
class SoftStep(_Potential):
    """Square well of radius a with error-function edges of softness s.

    V(x) = -(depth/2) [erf((x+a)/(sqrt(2) s)) - erf((x-a)/(sqrt(2) s))],
    i.e. the indicator of [-a, a] mollified by a Gaussian of width s.
    Vhat(q) = -depth (2 pi)^(-1/2) (2 sin(q a)/q) exp(-s^2 q^2/2).
    """

    depth: float
    radius: float = 1.0
    softness: float = 0.25
    dimension: int = 1

    def __post_init__(self):
        if self.depth <= 0 or self.radius <= 0 or self.softness <= 0:
            raise ConfigError("SoftStep needs depth, radius and softness > 0")
        if self.dimension != 1:
            raise ConfigError("SoftStep is implemented in dimension 1 only")

    def values(self, x):
        x = np.asarray(x, dtype=float)
        u = 1.0 / (math.sqrt(2.0) * self.softness)
        return -0.5 * self.depth * (
            _special.erf((x + self.radius) * u) - _special.erf((x - self.radius) * u)
        )

    def fourier(self, q):
        q = np.asarray(q, dtype=float)
        qa = q * self.radius
        box = np.where(np.abs(q) < 1e-12, 2.0 * self.radius,
                       2.0 * np.sin(qa) / np.where(q == 0.0, 1.0, q))
        return -self.depth / math.sqrt(2.0 * math.pi) * box * np.exp(
            -0.5 * self.softness**2 * q * q
        )

    def sup_norm(self):
        return self.depth * float(_special.erf(self.radius / (math.sqrt(2) * self.softness)))


@dataclass(frozen=True)
class ScaledPotential(_Potential):
    """The rescaled well lam^2 V(lam x) that drives the small-lam limit.

    Vhat_scaled(q) = lam^(2-d) Vhat(q/lam).
    """

    base: _Potential
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise DomainError(f"scale parameter must be positive, got {self.lam}")
        object.__setattr__(self, "dimension", self.base.dimension)

    def values(self, x):
        return self.lam**2 * self.base.values(self.lam * np.asarray(x, dtype=float))

    def fourier(self, q):
        q = np.asarray(q, dtype=float)
        return self.lam ** (2 - self.base.dimension) * self.base.fourier(q / self.lam)

    def sup_norm(self):
        return self.lam**2 * self.base.sup_norm()


def fourier_tail_fraction(potential: _Potential, q_cut: float) -> float:
    """Fraction of integral |Vhat| carried by |q| > q_cut (dimension 1 only)."""
    if potential.dimension != 1:
        raise DomainError("tail fraction implemented for 1-d potentials")
    absf = lambda q: abs(float(potential.fourier(np.asarray([q]))[0]))
    head, _ = _integrate.quad(absf, 0.0, q_cut, limit=200)
    tail, _ = _integrate.quad(absf, q_cut, np.inf, limit=200)
    total = head + tail
    return tail / total if total > 0 else 0.0


# ---------------------------------------------------------------------------
# trial momentum profiles
# ---------------------------------------------------------------------------

class _TrialFunction:
    """Normalized momentum profile fhat with compact support."""

    def fhat(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def support_radius(self) -> float:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FourierBump(_TrialFunction):
    """fhat(P) proportional to prod_a (1 - (P_a/R)^2)^2 on |P_a| < R.

    The per-axis normalization integral of (1-u^2)^4 over [-1, 1] is 256/315,
    giving ||fhat||_2 = 1 in closed form.
    """

    radius: float
    dimension: int = 1

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("FourierBump needs radius > 0")

    def fhat(self, P):
        c = (315.0 / (256.0 * self.radius)) ** (0.5 * self.dimension)
        u2 = np.clip((np.atleast_2d(np.asarray(P, float).reshape(-1, self.dimension))
                      / self.radius) ** 2, 0.0, None)
        prof = np.where(u2 < 1.0, (1.0 - u2) ** 2, 0.0)
        out = c * np.prod(prof, axis=-1)
        return out if np.ndim(P) else float(out[0])

    @property
    def support_radius(self):
        return self.radius

    def params(self):
        return {"type": "bump", "radius": self.radius}

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class TruncatedGaussian(_TrialFunction):
    """fhat(P) proportional to exp(-P^2/(4 sigma^2)) restricted to |P_a| < R."""

    sigma: float
    radius: float
    dimension: int = 1

    def __post_init__(self):
        if self.sigma <= 0 or self.radius <= 0:
            raise ConfigError("TruncatedGaussian needs sigma > 0 and radius > 0")

    def fhat(self, P):
        norm1 = self.sigma * math.sqrt(2.0 * math.pi) * float(
            _special.erf(self.radius / (math.sqrt(2.0) * self.sigma))
        )
        c = norm1 ** (-0.5 * self.dimension)
        pts = np.atleast_2d(np.asarray(P, float).reshape(-1, self.dimension))
        prof = np.where(np.abs(pts) < self.radius,
                        np.exp(-pts**2 / (4.0 * self.sigma**2)), 0.0)
        out = c * np.prod(prof, axis=-1)
        return out if np.ndim(P) else float(out[0])

    @property
    def support_radius(self):
        return self.radius

    def params(self):
        return {"type": "gaussian", "sigma": self.sigma, "radius": self.radius}

    def replace(self, **kw):
        return replace(self, **kw)
