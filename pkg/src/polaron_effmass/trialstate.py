"""Variational upper bounds on e(lam) from dressed ground-state families.

A trial vector for the coupled scaling-limit operator A(lam) is built by
placing, at each electron momentum node q_j, the fiber ground state at
total momentum lam * q_j, weighted by a smooth compactly supported profile
fhat:

    psi[j, :] = fhat(q_j) * sqrt(dq) * Phi(lam * q_j).

Its Rayleigh quotient is computable from scalars alone -- the fiber ground
energies eps_j, the potential kernel W and the Gram matrix
G[j, j'] = <Phi(lam q_j), Phi(lam q_j')>:

    U = [ sum_j a_j^2 (eps_j - e0)/lam^2 + a^T (W * G) a ] / sum_j a_j^2 ,

with a_j = fhat(q_j) sqrt(dq).  When every support node lam * q_j is an
actually solved family momentum, U is the exact Rayleigh quotient of an
explicit vector and hence a certified upper bound on e(lam) up to solver
and rounding error ("exact" path).  When the meshes do not line up, cubic
splines in the family data interpolate eps and G ("spline" path); the
result is then an estimate, and it is labeled as such.

Profiles are scaled so their support lam * R stays inside the
quasi-parabolic window; :func:`minimize_upper_bound` tunes the support
radius by bounded scalar minimization, reusing one ground-state family
for every candidate radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.optimize import minimize_scalar

from .dispersion import GAP_THRESHOLD_DEFAULT, FiberCache
from .errors import AnalysisError, ConfigError, DomainError
from .model import FourierBump, TruncatedGaussian
from .operators import ElectronGrid, potential_kernel

__all__ = [
    "GroundStateFamily",
    "UpperBoundResult",
    "MinimizedUpperBound",
    "build_family",
    "overlap_matrix",
    "upper_bound",
    "minimize_upper_bound",
]


@dataclass(frozen=True)
class GroundStateFamily:
    """Phase-aligned fiber ground states on a momentum mesh (one axis)."""

    momenta: np.ndarray        # (n,) sorted scalar momenta along the axis
    energies: np.ndarray       # (n,)
    gaps: np.ndarray           # (n,)
    residuals: np.ndarray      # (n,)
    vectors: np.ndarray        # (n, fock_dim), rows unit norm
    continuity: np.ndarray     # (n-1,) adjacent ||Phi_i+1 - Phi_i||

    @property
    def size(self) -> int:
        return len(self.momenta)

    @property
    def p_max(self) -> float:
        return float(np.max(np.abs(self.momenta)))

    def index_of(self, P: float) -> int:
        i = int(np.argmin(np.abs(self.momenta - P)))
        if abs(self.momenta[i] - P) > 1e-9:
            raise AnalysisError(
                f"momentum {P:.6g} is not a family node "
                f"(nearest: {self.momenta[i]:.6g})"
            )
        return i


def build_family(cache: FiberCache, P_values, *, p_c: float | None = None,
                 gap_threshold: float = GAP_THRESHOLD_DEFAULT
                 ) -> GroundStateFamily:
    """Solve (or fetch) the fiber ground pair on a momentum mesh.

    Every requested momentum must sit strictly inside the quasi-particle
    window (-p_c, p_c) when p_c is given, and must have a safely
    non-degenerate ground state; violations name the offending momentum.
    """
    P = np.unique(np.round(np.asarray(P_values, dtype=float), 12))
    if len(P) == 0:
        raise ConfigError("family mesh is empty")
    if p_c is not None and np.max(np.abs(P)) >= p_c:
        raise AnalysisError(
            f"family momentum {P[np.argmax(np.abs(P))]:.6g} lies outside "
            f"the open window (-{p_c:g}, {p_c:g})"
        )
    energies, gaps, residuals, vectors = [], [], [], []
    for p in P:
        rec = cache.pair(float(p))
        if rec["degenerate"] or rec["gap"] <= gap_threshold:
            raise AnalysisError(
                f"ground state at P = {p:.6g} is (near-)degenerate "
                f"(gap {rec['gap']:.3e} <= threshold {gap_threshold:g})"
            )
        energies.append(rec["energy"])
        gaps.append(rec["gap"])
        residuals.append(rec["residual"])
        vectors.append(rec["vector"])
    vecs = np.asarray(vectors)
    cont = np.linalg.norm(np.diff(vecs, axis=0), axis=1) if len(P) > 1 else np.zeros(0)
    return GroundStateFamily(momenta=P, energies=np.asarray(energies),
                             gaps=np.asarray(gaps),
                             residuals=np.asarray(residuals),
                             vectors=vecs, continuity=cont)


def overlap_matrix(family: GroundStateFamily) -> np.ndarray:
    """Gram matrix of the family vectors: symmetric with unit diagonal."""
    G = family.vectors @ family.vectors.T
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 1.0)
    return G


@dataclass(frozen=True)
class UpperBoundResult:
    lam: float
    value: float
    fiber_term: float
    potential_term: float
    norm_sq: float
    path: str                 # "exact" or "spline"
    profile_params: dict
    n_support: int


def _support_data(lam: float, profile, egrid: ElectronGrid):
    if egrid.dimension != 1:
        raise DomainError("trial-state bounds are implemented in dimension 1")
    q = egrid.points[:, 0]
    f = np.asarray(profile.fhat(q.reshape(-1, 1)), dtype=float)
    sup = np.flatnonzero(f != 0.0)
    if len(sup) < 3:
        raise AnalysisError(
            f"profile support radius {profile.support_radius:g} covers only "
            f"{len(sup)} grid nodes; widen it or refine the grid"
        )
    return q, f, sup


def upper_bound(lam: float, family: GroundStateFamily, profile, potential,
                egrid: ElectronGrid, e0: float, *, path: str = "exact",
                kernel: np.ndarray | None = None,
                gram: np.ndarray | None = None) -> UpperBoundResult:
    """Rayleigh quotient of the profiled dressed trial vector.

    `path="exact"` requires every support node lam*q_j to be a family
    momentum and returns a certified bound; `path="spline"` interpolates
    family data instead (estimate only).  `kernel` and `gram` can be
    passed in when the caller evaluates many profiles on one grid.
    """
    if lam <= 0:
        raise DomainError(f"lam must be positive, got {lam}")
    q, f, sup = _support_data(lam, profile, egrid)
    W = potential_kernel(potential, egrid) if kernel is None else kernel
    G_fam = overlap_matrix(family) if gram is None else gram

    a = f[sup] * math.sqrt(egrid.dq)
    Psup = lam * q[sup]
    if path == "exact":
        idx = np.array([family.index_of(p) for p in Psup])
        eps = family.energies[idx]
        G = G_fam[np.ix_(idx, idx)]
    elif path == "spline":
        if np.max(np.abs(Psup)) > family.p_max + 1e-12:
            raise AnalysisError(
                "profile support leaves the family's momentum range; "
                "extend the family or shrink the profile"
            )
        e_spl = CubicSpline(family.momenta, family.energies)
        eps = e_spl(Psup)
        g_spl = RectBivariateSpline(family.momenta, family.momenta, G_fam,
                                    kx=3, ky=3)
        G = g_spl(Psup, Psup)
        G = 0.5 * (G + G.T)
    else:
        raise ConfigError(f"unknown upper-bound path {path!r}")

    norm_sq = float(a @ a)
    fiber_term = float(a @ ((eps - e0) / lam**2 * a))
    potential_term = float(a @ ((W[np.ix_(sup, sup)] * G) @ a))
    value = (fiber_term + potential_term) / norm_sq
    return UpperBoundResult(lam=lam, value=value, fiber_term=fiber_term,
                            potential_term=potential_term, norm_sq=norm_sq,
                            path=path, profile_params=dict(profile.params()),
                            n_support=len(sup))


@dataclass(frozen=True)
class MinimizedUpperBound:
    result: UpperBoundResult
    radius: float
    radius_bounds: tuple
    boundary_hit: bool
    n_evaluations: int
    family_size: int


def _make_profile(kind: str, radius: float, dimension: int):
    if kind == "bump":
        return FourierBump(radius=radius, dimension=dimension)
    if kind == "gaussian":
        # sigma tracks the radius so one scalar controls the shape
        return TruncatedGaussian(sigma=radius / 3.0, radius=radius,
                                 dimension=dimension)
    raise ConfigError(f"unknown trial profile kind {kind!r}")


def minimize_upper_bound(lam: float, cache: FiberCache, potential,
                         egrid: ElectronGrid, e0: float, *,
                         p_c: float, profile_kind: str = "bump",
                         gap_threshold: float = GAP_THRESHOLD_DEFAULT,
                         radius_bounds: tuple | None = None,
                         xatol: float = 1e-3) -> MinimizedUpperBound:
    """Tune the profile support radius to the smallest upper bound.

    The radius ranges over [3 dq, min(p_c/lam, q_max)] (the upper cap keeps
    every node of the dressed family strictly inside the quasi-particle
    window).  One family is built at the widest support and reused for all
    candidate radii, so the scan costs no extra eigensolves.  Whatever
    radius the scalar minimizer returns, the reported value is a bound;
    `boundary_hit` flags a minimum pinned at either end.
    """
    if radius_bounds is None:
        r_hi = min(p_c / lam * (1.0 - 1e-9), egrid.q_max)
        r_lo = 3.0 * egrid.dq
        radius_bounds = (r_lo, r_hi)
    r_lo, r_hi = float(radius_bounds[0]), float(radius_bounds[1])
    if not r_lo < r_hi:
        raise ConfigError(
            f"empty radius range [{r_lo:g}, {r_hi:g}]; the quasi-particle "
            "window is too narrow for this lam and grid"
        )

    q = egrid.points[:, 0]
    wide = np.flatnonzero(np.abs(q) < r_hi)
    mesh = np.concatenate([[0.0], lam * q[wide]])
    family = build_family(cache, mesh, p_c=p_c, gap_threshold=gap_threshold)
    kernel = potential_kernel(potential, egrid)
    gram = overlap_matrix(family)

    evals = {"n": 0}

    def objective(r: float) -> float:
        evals["n"] += 1
        prof = _make_profile(profile_kind, float(r), egrid.dimension)
        return upper_bound(lam, family, prof, potential, egrid, e0,
                           kernel=kernel, gram=gram).value

    opt = minimize_scalar(objective, bounds=(r_lo, r_hi), method="bounded",
                          options={"xatol": xatol})
    radius = float(opt.x)
    best = upper_bound(lam, family,
                       _make_profile(profile_kind, radius, egrid.dimension),
                       potential, egrid, e0, kernel=kernel, gram=gram)
    boundary = (radius - r_lo <= 2 * xatol) or (r_hi - radius <= 2 * xatol)
    return MinimizedUpperBound(result=best, radius=radius,
                               radius_bounds=(r_lo, r_hi),
                               boundary_hit=boundary,
                               n_evaluations=evals["n"] + 1,
                               family_size=family.size)
