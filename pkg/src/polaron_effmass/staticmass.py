"""Static effective mass: comparison energies, coupled solves, extrapolation.

The static mass is defined through the chain

    e(lam) = infspec A(lam)  --lam->0-->  e0,      M_stat = Einv(e0),

where A(lam) is the coupled scaling-limit operator, Einv inverts the
one-particle comparison curve E(m) = infspec(p^2/(2m) + V), and everything
is computed on one electron momentum grid so that discretization bias
largely cancels between e0 and the inverse curve.

Pieces:

* :func:`schrodinger_energy`: ground energy of q^2/(2m) + W.  The default
  mode runs a grid-refinement pair (spacing halved, which also doubles the
  implied box) and combines them Richardson-style, attaching the pair
  difference as the discretization error estimate.  Callers that rely on
  same-grid bias cancellation pass refine=False.
* :func:`invert_E`: bisection inverse of the strictly decreasing comparison
  curve, with on-the-fly monotonicity validation and bracket expansion.
* :func:`coupled_ground`: e(lam) through the preconditioned subspace solver
  (the coupled operators' diagonal spread rules out plain Lanczos); supports
  warm starts across a descending lam sequence.
* :func:`extrapolate_static_mass`: fits e(lam) = e0 + c1 lam + c2 lam^2
  (the leading correction of the scaling limit is O(lam)), propagates the
  fit uncertainty and a drop-the-largest-lam refit shift into e0 and the
  mass, and inverts on the same grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolve import davidson_ground, dense_ground, ground_state
from .errors import (AnalysisError, BracketError, NoBoundStateError,
                     SolverError)
from .model import ScaledPotential
from .operators import (ElectronGrid, FiberTemplate, assemble_coupled_llp,
                        assemble_schrodinger)

__all__ = [
    "SchrodingerEnergy",
    "SchrodingerCurve",
    "CoupledResult",
    "StaticMassResult",
    "DEFAULT_LAMBDA_SEQ",
    "schrodinger_energy",
    "schrodinger_curve",
    "invert_E",
    "coupled_ground",
    "extrapolate_static_mass",
]

DEFAULT_LAMBDA_SEQ = (0.4, 0.28, 0.2, 0.14, 0.1)


@dataclass(frozen=True)
class SchrodingerEnergy:
    value: float
    error: float
    grid_points: int
    refined: bool


def _ground_value(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    if n <= 2000:
        return dense_ground(matrix).value
    return ground_state(matrix, tol=1e-11, seed=0).value


def schrodinger_energy(mass: float, potential, egrid: ElectronGrid,
                       *, refine: bool = True) -> SchrodingerEnergy:
    """Ground energy of the one-particle comparison operator.

    With refine=True (default) the energy is recomputed at half the grid
    spacing and the pair is Richardson-combined; the attached error is the
    pair difference.  A nonnegative result means the potential has no bound
    state at this mass and raises NoBoundStateError.
    """
    coarse = _ground_value(assemble_schrodinger(potential, egrid, mass))
    if refine:
        fine_grid = ElectronGrid(egrid.dq / 2.0, egrid.q_max, egrid.dimension)
        fine = _ground_value(assemble_schrodinger(potential, fine_grid, mass))
        value = fine + (fine - coarse) / 3.0
        err = abs(fine - coarse)
        points = fine_grid.size
        # the combination can dip below zero even when both stages are
        # nonnegative; judge binding on the variational stage values
        witness = max(value, coarse, fine)
    else:
        value, err, points = coarse, 0.0, egrid.size
        witness = coarse
    if witness >= 0.0:
        raise NoBoundStateError(
            f"no bound state at mass {mass:g} (ground energy {witness:.3e} >= 0)"
        )
    return SchrodingerEnergy(value=float(value), error=float(err),
                             grid_points=points, refined=refine)


@dataclass(frozen=True)
class SchrodingerCurve:
    masses: np.ndarray
    energies: np.ndarray
    errors: np.ndarray
    refined: bool

    def __post_init__(self):
        diffs = np.diff(self.energies)
        if np.any(diffs >= 0.0):
            i = int(np.argmax(diffs >= 0.0))
            raise AnalysisError(
                "comparison curve is not strictly decreasing between "
                f"m = {self.masses[i]:g} and m = {self.masses[i + 1]:g}"
            )


def schrodinger_curve(masses, potential, egrid: ElectronGrid,
                      *, refine: bool = False) -> SchrodingerCurve:
    """Comparison energies at several masses, validated strictly decreasing."""
    m_arr = np.asarray(sorted(masses), dtype=float)
    vals, errs = [], []
    for m in m_arr:
        res = schrodinger_energy(float(m), potential, egrid, refine=refine)
        vals.append(res.value)
        errs.append(res.error)
    return SchrodingerCurve(masses=m_arr, energies=np.asarray(vals),
                            errors=np.asarray(errs), refined=refine)


def invert_E(target: float, potential, egrid: ElectronGrid, *,
             bracket=(0.5, 4.0), rel_tol: float = 1e-6,
             endpoint_tol: float = 1e-7, max_hi: float = 1024.0) -> float:
    """Mass m with E(m) = target, by bisection on the decreasing curve.

    The bracket's upper end expands geometrically until it straddles the
    target.  Every evaluation is checked against monotonicity; a violation
    (a grid artifact) is a hard error.  A target within endpoint_tol of
    E(1/2) returns exactly the endpoint mass (the free-particle edge case).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo < 0.5:
        raise BracketError(f"bracket must start at mass >= 1/2, got {lo}")
    e_lo = schrodinger_energy(lo, potential, egrid, refine=False).value
    if abs(target - e_lo) <= endpoint_tol:
        return lo
    if target > e_lo:
        raise BracketError(
            f"target energy {target:.6g} is above E({lo:g}) = {e_lo:.6g}; "
            "would need a mass below 1/2"
        )
    e_hi = schrodinger_energy(hi, potential, egrid, refine=False).value
    while target < e_hi:
        hi *= 2.0
        if hi > max_hi:
            raise BracketError(
                f"target energy {target:.6g} below E({max_hi:g}); bracket "
                "expansion exhausted"
            )
        e_hi = schrodinger_energy(hi, potential, egrid, refine=False).value
    slack = 1e-12 * max(1.0, abs(e_lo), abs(e_hi))
    while (hi - lo) > rel_tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        e_mid = schrodinger_energy(mid, potential, egrid, refine=False).value
        if not (e_hi - slack <= e_mid <= e_lo + slack):
            raise AnalysisError(
                f"comparison curve non-monotone at m = {mid:g} "
                f"(E = {e_mid:.9g} outside [{e_hi:.9g}, {e_lo:.9g}])"
            )
        if e_mid > target:
            lo, e_lo = mid, e_mid
        else:
            hi, e_hi = mid, e_mid
    return 0.5 * (lo + hi)


@dataclass
class CoupledResult:
    lam: float
    value: float
    residual: float
    iterations: int
    matvecs: int
    dim: int
    vector: np.ndarray


def coupled_ground(template: FiberTemplate, potential, egrid: ElectronGrid,
                   lam: float, e0: float, *, tol: float = 1e-9, seed: int = 0,
                   v0=None, max_subspace: int = 40, max_iters: int = 600,
                   tail_tol: float = 1e-6) -> CoupledResult:
    """e(lam) = infspec A(lam), via the preconditioned subspace solver.

    `v0` warm-starts the iteration (the ground vector of a neighboring lam
    is an excellent start).  One reseeded retry with a larger search space
    runs before giving up.
    """
    op = assemble_coupled_llp(template, potential, egrid, lam, e0,
                              tail_tol=tail_tol)
    try:
        res = davidson_ground(op, tol=tol, seed=seed, v0=v0,
                              max_subspace=max_subspace, max_iters=max_iters)
    except SolverError as exc:
        # continue from the stalled attempt's best vector, larger space
        res = davidson_ground(op, tol=tol, seed=seed + 101,
                              v0=exc.best_vector,
                              max_subspace=min(2 * max_subspace, op.dim),
                              max_iters=2 * max_iters)
    return CoupledResult(lam=lam, value=res.value, residual=res.residual,
                         iterations=res.iterations, matvecs=res.matvecs,
                         dim=op.dim, vector=res.vector)


@dataclass
class StaticMassResult:
    lambdas: np.ndarray
    e_values: np.ndarray
    e0: float
    e0_err: float
    coeffs: np.ndarray
    fit_rms: float
    drop_shift: float
    mass: float
    mass_err: float
    rejected: bool
    reason: str


def _fit_quadratic_in_lambda(lams: np.ndarray, evals: np.ndarray):
    X = np.column_stack([np.ones_like(lams), lams, lams * lams])
    coef, _, _, _ = np.linalg.lstsq(X, evals, rcond=None)
    resid = evals - X @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    dof = len(lams) - 3
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        cov00 = sigma2 * np.linalg.inv(X.T @ X)[0, 0]
        e0_sigma = math.sqrt(max(cov00, 0.0))
    else:
        e0_sigma = 0.0
    return coef, rms, e0_sigma


def extrapolate_static_mass(lambdas, e_values, potential, egrid: ElectronGrid,
                            *, fit_rms_tol: float = 1e-3,
                            mass_bracket=(0.5, 4.0),
                            mass_rel_tol: float = 1e-6) -> StaticMassResult:
    """Extrapolate e(lam) to lam = 0 and invert the comparison curve.

    Fit model e(lam) = e0 + c1 lam + c2 lam^2.  The e0 uncertainty is the
    larger of the fit's standard error and the shift from refitting without
    the largest lam.  The mass uncertainty propagates e0_err through the
    numerically differentiated comparison-curve slope.  A fit with rms
    residual above fit_rms_tol is marked rejected (data still returned);
    the inversion uses the same grid as the coupled solves, unrefined.
    """
    lams = np.asarray(lambdas, dtype=float)
    evals = np.asarray(e_values, dtype=float)
    if lams.shape != evals.shape or lams.ndim != 1:
        raise AnalysisError("lambda and energy arrays must align")
    if len(lams) < 4:
        raise AnalysisError("need at least 4 lambda values to extrapolate")
    if np.any(lams <= 0) or len(np.unique(lams)) != len(lams):
        raise AnalysisError("lambda values must be positive and distinct")
    order = np.argsort(lams)[::-1]
    lams, evals = lams[order], evals[order]

    coef, rms, e0_sigma = _fit_quadratic_in_lambda(lams, evals)
    coef_drop, _, _ = _fit_quadratic_in_lambda(lams[1:], evals[1:])
    drop_shift = abs(float(coef[0] - coef_drop[0]))
    e0 = float(coef[0])
    e0_err = max(e0_sigma, drop_shift)

    rejected = rms > fit_rms_tol
    reason = (f"fit rms {rms:.3e} exceeds tolerance {fit_rms_tol:g}"
              if rejected else "")

    mass = math.nan
    mass_err = math.nan
    try:
        mass = invert_E(e0, potential, egrid, bracket=mass_bracket,
                        rel_tol=mass_rel_tol)
        h = max(1e-3 * mass, 1e-4)
        if mass - h >= 0.5:
            e_plus = schrodinger_energy(mass + h, potential, egrid, refine=False).value
            e_minus = schrodinger_energy(mass - h, potential, egrid, refine=False).value
            slope = (e_plus - e_minus) / (2.0 * h)
        else:
            e_plus = schrodinger_energy(mass + h, potential, egrid, refine=False).value
            e_here = schrodinger_energy(mass, potential, egrid, refine=False).value
            slope = (e_plus - e_here) / h
        mass_err = e0_err / abs(slope) if slope != 0.0 else math.inf
    except (BracketError, NoBoundStateError, AnalysisError) as exc:
        if not rejected:
            rejected = True
            reason = f"mass inversion failed: {exc}"

    return StaticMassResult(lambdas=lams, e_values=evals, e0=e0, e0_err=e0_err,
                            coeffs=np.asarray(coef), fit_rms=rms,
                            drop_shift=drop_shift, mass=mass, mass_err=mass_err,
                            rejected=rejected, reason=reason)


def scaled_comparison_pair(mass: float, potential, lam: float,
                           egrid: ElectronGrid) -> tuple:
    """The two sides of the scaling identity on exactly matched grids.

    infspec(p^2/2m + lam^2 V(lam x)) on `egrid` equals lam^2 times
    infspec(p^2/2m + V) on the grid stretched by 1/lam; the match is an
    exact discrete similarity, so the pair agrees to rounding.
    """
    left = schrodinger_energy(mass, ScaledPotential(potential, lam), egrid,
                              refine=False).value
    right = schrodinger_energy(mass, potential, egrid.scaled(1.0 / lam),
                               refine=False).value
    return left, lam * lam * right
