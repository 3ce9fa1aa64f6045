"""Certified lower bounds on e(lam) and the two-sided sandwich report.

Two independent lower-bound routes:

* Momentum-decomposition bound (L1).  Inside each electron-momentum block,
  the fiber operator dominates its own ground energy times the identity, so

      A(lam) >= (D + W) (x) I_F,   D = diag((E(lam q_j) - E0)/lam^2),

  and L1 = infspec(D + W) is a rigorous lower bound whenever the D entries
  are themselves lower bounds on the fiber energies.  The default route
  solves every fiber exactly and subtracts its residual, which certifies
  the bound at solver precision.  A cheaper "curve" route interpolates an
  existing dispersion scan and falls back to the variational ceilings
  outside the scanned window; ceilings overestimate fiber energies, so that
  route is diagnostic only and is labeled accordingly.

* Scaled-potential split bound (L2).  Splitting trial vectors by how much
  momentum mass sits outside a ball of radius beta = c_beta sqrt(lam) and
  using the quasi-parabolic certificate E(P) >= E0 + P^2/(2M(1+CP^2))
  yields

      L2 = min( infspec(p^2/(2 M_c) + (1+eps) V),
                beta^2/(2 lam^2 M_c) - (1 + 1/eps) sup|V| ),

  with M_c = M (1 + C beta^2) and eps = c_eps lam.  The first branch is a
  one-particle operator on the same grid; the second is scalar.  With
  c_eps > 2 M_c sup|V| the scalar branch grows like 1/lam and the first
  branch converges to the static-mass comparison energy, so the bound is
  tight in the limit.  Implemented for nonpositive potentials (wells);
  sign-mixed potentials are rejected.

:func:`sandwich_report` lines the bounds up against e(lam) and the trial
upper bound U(lam) and checks the ordering chain at a pinned tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dispersion import DispersionCurve, FiberCache
from .eigensolve import dense_ground
from .errors import AnalysisError, ConfigError, DomainError
from .operators import ElectronGrid, assemble_schrodinger, potential_kernel

__all__ = [
    "SplitParams",
    "LowerBoundResult",
    "SplitBoundResult",
    "SandwichRow",
    "SandwichReport",
    "suggest_c_eps",
    "momentum_lower_bound",
    "split_lower_bound",
    "sandwich_report",
    "ORDERING_TOL_DEFAULT",
]

ORDERING_TOL_DEFAULT = 1e-8


# ---------------------------------------------------------------------------
# momentum-decomposition bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBoundResult:
    lam: float
    value: float
    route: str                # "exact" (certified) or "curve" (diagnostic)
    certified: bool
    n_nodes: int
    max_residual: float


def _fiber_floor_exact(lam: float, q: np.ndarray, cache: FiberCache,
                       e0: float) -> tuple:
    eps = np.empty(len(q))
    max_res = 0.0
    for i, qi in enumerate(q):
        rec = cache.pair(float(lam * qi))
        # Ritz value minus residual is a certified lower bound on the
        # fiber ground energy for a symmetric operator
        eps[i] = rec["energy"] - rec["residual"]
        max_res = max(max_res, rec["residual"])
    return (eps - e0) / lam**2, max_res


def _fiber_floor_curve(lam: float, q: np.ndarray, curve: DispersionCurve,
                       e0: float, ceiling) -> np.ndarray:
    from scipy.interpolate import CubicSpline
    P = lam * q
    spl = CubicSpline(curve.momenta, curve.energies)
    inside = np.abs(P) <= np.max(np.abs(curve.momenta))
    eps = np.where(inside, spl(P), ceiling(P))
    return (eps - e0) / lam**2


def momentum_lower_bound(lam: float, egrid: ElectronGrid, potential,
                         e0: float, *, cache: FiberCache | None = None,
                         curve: DispersionCurve | None = None,
                         ceiling=None) -> LowerBoundResult:
    """L1 = infspec(D + W) on the electron grid.

    The exact route (pass `cache`) solves the fiber at every lam*q_j and
    certifies the result; the curve route (pass `curve` and a `ceiling`
    callable for momenta beyond the scan) is a fast diagnostic whose
    interpolation error is not controlled.
    """
    if lam <= 0:
        raise DomainError(f"lam must be positive, got {lam}")
    if egrid.dimension != 1:
        raise DomainError("lower bounds are implemented in dimension 1")
    q = egrid.points[:, 0]
    if cache is not None:
        diag, max_res = _fiber_floor_exact(lam, q, cache, e0)
        route, certified = "exact", True
    elif curve is not None:
        if ceiling is None:
            raise ConfigError("curve route needs a ceiling callable")
        diag = _fiber_floor_curve(lam, q, curve, e0, ceiling)
        route, certified, max_res = "curve", False, math.nan
    else:
        raise ConfigError("pass either a fiber cache or a dispersion curve")
    h = potential_kernel(potential, egrid)
    h[np.diag_indices_from(h)] += diag
    value = dense_ground(h).value
    return LowerBoundResult(lam=lam, value=float(value), route=route,
                            certified=certified, n_nodes=len(q),
                            max_residual=max_res)


# ---------------------------------------------------------------------------
# scaled-potential split bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitParams:
    """Split-bound knobs: eps = c_eps * lam, beta = c_beta * sqrt(lam)."""

    c_eps: float
    c_beta: float = 1.0

    def eps(self, lam: float) -> float:
        return self.c_eps * lam

    def beta(self, lam: float) -> float:
        return self.c_beta * math.sqrt(lam)


def suggest_c_eps(mass: float, c_min: float, sup_norm: float,
                  lam_max: float, *, c_beta: float = 1.0,
                  safety: float = 2.0) -> float:
    """Smallest c_eps (times a safety factor) keeping the scalar branch

    beta^2/(2 lam^2 M_c) - (1 + 1/eps) sup|V| bounded below as lam -> 0;
    the threshold is c_eps = 2 M_c sup|V| with M_c at the largest lam.
    """
    m_c = mass * (1.0 + c_min * c_beta**2 * lam_max)
    return safety * 2.0 * m_c * sup_norm


@dataclass(frozen=True)
class SplitBoundResult:
    lam: float
    value: float
    operator_branch: float
    scalar_branch: float
    eps: float
    beta: float
    effective_mass_arg: float


def split_lower_bound(lam: float, potential, egrid: ElectronGrid, *,
                      mass: float, c_min: float, p_c: float,
                      params: SplitParams) -> SplitBoundResult:
    """L2 from the momentum-split argument (nonpositive potentials only)."""
    if lam <= 0:
        raise DomainError(f"lam must be positive, got {lam}")
    x_probe = np.linspace(-egrid.q_max, egrid.q_max, 4001)
    if float(np.max(potential.values(x_probe))) > 1e-12:
        raise DomainError(
            "the split lower bound is implemented for nonpositive "
            "potentials; this one takes positive values"
        )
    eps = params.eps(lam)
    beta = params.beta(lam)
    if eps <= 0:
        raise ConfigError(f"eps = {eps:g} must be positive")
    if beta >= p_c:
        raise AnalysisError(
            f"beta = {beta:.4g} reaches the quasi-parabolic window "
            f"p_c = {p_c:.4g}; lam = {lam:g} is too large for this window"
        )
    m_c = mass * (1.0 + c_min * beta**2)
    op = assemble_schrodinger(potential, egrid, m_c, v_scale=1.0 + eps)
    operator_branch = float(dense_ground(op).value)
    scalar_branch = (beta**2 / (2.0 * lam**2 * m_c)
                     - (1.0 + 1.0 / eps) * potential.sup_norm())
    return SplitBoundResult(lam=lam, value=min(operator_branch, scalar_branch),
                            operator_branch=operator_branch,
                            scalar_branch=scalar_branch, eps=eps, beta=beta,
                            effective_mass_arg=m_c)


# ---------------------------------------------------------------------------
# sandwich assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SandwichRow:
    lam: float
    l2: float
    l1: float
    e: float
    u_star: float

    def margins(self, tol: float) -> tuple:
        """(L1 - L2 + tol, e - L1, U* - e + tol): all must be >= 0."""
        return (self.l1 - self.l2 + tol, self.e - self.l1,
                self.u_star - self.e + tol)


@dataclass(frozen=True)
class SandwichReport:
    rows: tuple
    ordering_tol: float
    passed: bool
    margin_min: float
    worst_lam: float
    worst_pair: str

    def table(self) -> str:
        lines = ["lam        L2              L1              e               U*"]
        for r in self.rows:
            lines.append("%-10.4g %-15.10g %-15.10g %-15.10g %-15.10g"
                         % (r.lam, r.l2, r.l1, r.e, r.u_star))
        return "\n".join(lines)


def sandwich_report(rows, *, ordering_tol: float = ORDERING_TOL_DEFAULT
                    ) -> SandwichReport:
    """Check L2 - tol <= L1 <= e <= U* + tol at every lam."""
    rows = tuple(sorted(rows, key=lambda r: -r.lam))
    if not rows:
        raise ConfigError("sandwich report needs at least one row")
    pair_names = ("L1-L2", "e-L1", "U*-e")
    margin_min, worst_lam, worst_pair = math.inf, rows[0].lam, pair_names[0]
    for r in rows:
        for name, m in zip(pair_names, r.margins(ordering_tol)):
            if m < margin_min:
                margin_min, worst_lam, worst_pair = m, r.lam, name
    return SandwichReport(rows=rows, ordering_tol=ordering_tol,
                          passed=margin_min >= 0.0, margin_min=margin_min,
                          worst_lam=worst_lam, worst_pair=worst_pair)
