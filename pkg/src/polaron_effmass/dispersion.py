"""Ground-state dispersion E(P) of the fibers and derived quantities.

The dispersion is scanned along a single axis (shipped models are
isotropic; a different axis can be requested for cross-checks).  From the
curve we extract

* the dynamic effective mass, via a windowed least-squares fit of
  E(P) - E(0) against P^2/(2M) + b P^4 (a two-point finite difference would
  be polluted by the quartic term at reachable momenta);
* a quasi-parabolicity certificate: the smallest C >= 0 such that
  E(P) >= E(0) + P^2 / (2M (1 + C P^2)) holds at every sample;
* variational ceilings E(P) <= min_i [(P - k_i)^2 + omega_i] and
  E(P) <= E(0) + P^2, both of which hold exactly on the truncated model
  (one-phonon trial state; shifted ground state with zero mean field
  momentum on symmetric grids);
* the largest momentum window P_c on which the spectral gap stays open,
  which downstream consumers use to bound trial-state supports.

A :class:`FiberCache` memoizes fiber ground pairs by momentum.  On
parity-symmetric mode grids it solves only |P| and obtains the -P ground
vector by the mode permutation that realizes k -> -k, and it fixes phases so
that <Phi_0 | Phi_P> > 0 for every cached vector, making overlap matrices
well-defined across momenta.

An independent weak-coupling oracle :func:`perturbative_mass` evaluates the
second-order energy E2(P) = P^2 - sum_i v_i^2 / ((P - k_i)^2 + omega_i - P^2)
and runs it through the same fit estimator, so that fit-window bias cancels
when comparing masses.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from threading import Lock

import numpy as np

from .eigensolve import lowest_two
from .errors import AnalysisError, DomainError
from .operators import FiberTemplate

__all__ = [
    "FiberCache",
    "DispersionSample",
    "DispersionCurve",
    "MassFit",
    "QuasiParabolicCertificate",
    "CeilingReport",
    "scan_dispersion",
    "fit_dynamic_mass",
    "certify_quasi_parabolic",
    "check_ceilings",
    "estimate_Pc",
    "perturbative_mass",
    "GAP_THRESHOLD_DEFAULT",
]

GAP_THRESHOLD_DEFAULT = 1e-3


def _unit_axis(axis, dimension: int) -> np.ndarray:
    if axis is None:
        e = np.zeros(dimension)
        e[0] = 1.0
        return e
    e = np.asarray(axis, dtype=float)
    if e.shape != (dimension,):
        raise DomainError(f"axis must have shape ({dimension},)")
    n = np.linalg.norm(e)
    if n == 0:
        raise DomainError("axis must be a nonzero vector")
    return e / n


class FiberCache:
    """Memoized fiber ground pairs along a fixed scan axis.

    Stores, per momentum magnitude-with-sign P (a scalar coordinate along
    the axis), the two lowest energies, the phase-fixed ground vector, the
    residual and the degeneracy flag.  On symmetric grids the -P data is
    derived from +P by the parity permutation instead of a second solve.
    """

    def __init__(self, template: FiberTemplate, *, tol: float = 1e-9,
                 seed: int = 0, axis=None, use_parity: bool | None = None):
        self.template = template
        self.tol = tol
        self.seed = seed
        self.axis = _unit_axis(axis, template.spec.dimension)
        self._store: dict = {}
        self._lock = Lock()
        self._use_parity = (template.grid.is_symmetric() if use_parity is None
                            else bool(use_parity))
        if self._use_parity and not template.grid.is_symmetric():
            raise DomainError("parity reuse needs a symmetric mode grid")
        self._state_perm = None
        if self._use_parity:
            mode_perm = template.grid.parity_permutation()
            self._state_perm = template.basis.permute_modes(mode_perm)

    @staticmethod
    def _key(P: float) -> float:
        return float(np.round(P, 12)) + 0.0   # normalize -0.0 to 0.0

    def solves(self) -> int:
        """Number of momenta actually solved (not derived by parity)."""
        with self._lock:
            return sum(1 for rec in self._store.values() if rec["solved"])

    def _solve(self, P: float) -> dict:
        op = self.template.operator(P * self.axis)
        pair = lowest_two(op, tol=self.tol, seed=self.seed)
        vec = pair.vectors[0]
        return {
            "energy": pair.values[0],
            "excited": pair.values[1],
            "gap": pair.gap,
            "degenerate": pair.degenerate,
            "residual": max(pair.residuals),
            "vector": vec,
            "solved": True,
        }

    def _ensure(self, P: float) -> dict:
        key = self._key(P)
        with self._lock:
            if key in self._store:
                return self._store[key]
        if self._use_parity and key < 0.0:
            # the parity image of a phase-fixed vector is already
            # phase-consistent (the reference vector is parity even)
            pos = self._ensure(-key)
            vec = np.empty_like(pos["vector"])
            vec[self._state_perm] = pos["vector"]
            rec = dict(pos, vector=vec, solved=False)
        else:
            rec = self._solve(key)
            if key != 0.0:
                zero = self._ensure(0.0)
                if float(zero["vector"] @ rec["vector"]) < 0.0:
                    rec["vector"] = -rec["vector"]
        # publish once, fully formed; racing threads keep the first record
        with self._lock:
            return self._store.setdefault(key, rec)

    def pair(self, P: float) -> dict:
        """Record with energy, excited, gap, degenerate, residual, vector."""
        return self._ensure(float(P))

    def energy(self, P: float) -> float:
        return self.pair(P)["energy"]

    def vector(self, P: float) -> np.ndarray:
        return self.pair(P)["vector"]

    def energies(self, P_values) -> np.ndarray:
        return np.array([self.energy(p) for p in np.asarray(P_values, dtype=float)])

    def prefetch(self, P_values, threads: int = 1):
        """Solve a batch of momenta, optionally with a thread pool.

        Each momentum is solved independently from the same seed, so the
        results do not depend on the pool size or schedule.
        """
        todo = sorted({self._key(p) for p in np.asarray(P_values, dtype=float)},
                      key=abs)
        self._ensure(0.0)   # phase reference, solved once up front
        if threads <= 1:
            for p in todo:
                self._ensure(p)
            return
        # solve canonical representatives concurrently, then derive parities
        canon = sorted({abs(p) for p in todo}) if self._use_parity else todo
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(self._ensure, canon))
        for p in todo:
            self._ensure(p)


@dataclass(frozen=True)
class DispersionSample:
    P: float
    energy: float
    gap: float
    residual: float
    degenerate: bool


@dataclass(frozen=True)
class DispersionCurve:
    """E(P) samples along one axis, sorted by P, including P = 0."""

    axis: np.ndarray
    samples: tuple
    e0: float
    parity_max_diff: float = 0.0

    @property
    def momenta(self) -> np.ndarray:
        return np.array([s.P for s in self.samples])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.samples])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([s.gap for s in self.samples])

    def sample_at(self, P: float) -> DispersionSample:
        for s in self.samples:
            if abs(s.P - P) <= 1e-12:
                return s
        raise DomainError(f"no sample at P={P}")


def scan_dispersion(template: FiberTemplate, P_list, *, axis=None,
                    tol: float = 1e-9, seed: int = 0, threads: int = 1,
                    cache: FiberCache | None = None) -> DispersionCurve:
    """Solve the fibers at the requested momenta and assemble the curve.

    P_list must contain 0 (the curve is pinned to E0 = E(0)).  Momenta are
    solved independently (parallelizable); the curve is reduced in sorted
    order.  E(P) >= E0 and parity symmetry are validated to solver
    tolerance.
    """
    P_arr = np.unique(np.asarray(P_list, dtype=float))
    if not np.any(np.abs(P_arr) <= 1e-15):
        raise DomainError("P_list must include 0")
    if cache is None:
        cache = FiberCache(template, tol=tol, seed=seed, axis=axis)
    cache.prefetch(P_arr, threads=threads)
    samples = []
    for p in P_arr:
        rec = cache.pair(p)
        samples.append(DispersionSample(
            P=float(p), energy=rec["energy"], gap=rec["gap"],
            residual=rec["residual"], degenerate=rec["degenerate"],
        ))
    e0 = cache.energy(0.0)
    slack = 10.0 * tol * max(1.0, abs(e0))
    for s in samples:
        if s.energy < e0 - slack:
            raise AnalysisError(
                f"dispersion minimum not at P=0: E({s.P}) = {s.energy} < E0 = {e0}"
            )
    parity_diff = 0.0
    by_key = {round(s.P, 12): s for s in samples}
    for s in samples:
        twin = by_key.get(round(-s.P, 12))
        if twin is not None:
            parity_diff = max(parity_diff, abs(s.energy - twin.energy))
    if parity_diff > slack:
        raise AnalysisError(f"dispersion not even in P (max diff {parity_diff:.3e})")
    return DispersionCurve(axis=cache.axis, samples=tuple(samples), e0=e0,
                           parity_max_diff=parity_diff)


@dataclass(frozen=True)
class MassFit:
    mass: float
    quartic: float
    window: float
    rms: float
    mass_half_window: float
    window_sensitivity: float
    condition: float
    n_samples: int


def _quartic_fit(P: np.ndarray, dE: np.ndarray):
    X = np.column_stack([0.5 * P * P, P**4])
    coef, _, _, sv = np.linalg.lstsq(X, dE, rcond=None)
    resid = dE - X @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    return coef, rms, cond


def fit_dynamic_mass(curve: DispersionCurve, P_fit: float | None = None,
                     *, P_c: float | None = None) -> MassFit:
    """Windowed quartic-corrected fit of the dispersion curvature at 0.

    Fits E(P) - E0 = P^2/(2M) + b P^4 over 0 < |P| <= P_fit.  The default
    window is min(P_c/2, 0.3/sqrt(M_guess)) with M_guess from a coarse
    pre-fit; the fit is repeated on the half window and the relative mass
    shift reported as the window-sensitivity diagnostic.
    """
    P = curve.momenta
    dE = curve.energies - curve.e0
    nz = np.abs(P) > 1e-15
    if P_fit is None:
        coarse_window = float(np.max(np.abs(P[nz])))
        sel = nz & (np.abs(P) <= 0.5 * coarse_window)
        if np.count_nonzero(sel) < 2:
            sel = nz
        coef, _, _ = _quartic_fit(P[sel], dE[sel])
        if coef[0] <= 0:
            raise AnalysisError("pre-fit found non-positive curvature at P=0")
        m_guess = 1.0 / coef[0]
        P_fit = 0.3 / math.sqrt(m_guess)
        if P_c is not None:
            P_fit = min(P_fit, 0.5 * P_c)
    sel = nz & (np.abs(P) <= P_fit + 1e-12)
    if np.count_nonzero(sel) < 4:
        raise AnalysisError(
            f"need >= 4 nonzero samples within the fit window {P_fit:g}, "
            f"have {np.count_nonzero(sel)}"
        )
    coef, rms, cond = _quartic_fit(P[sel], dE[sel])
    if coef[0] <= 0:
        raise AnalysisError("fitted curvature at P=0 is not positive")
    mass = 1.0 / coef[0]
    half = nz & (np.abs(P) <= 0.5 * P_fit + 1e-12)
    if np.count_nonzero(half) >= 4:
        coef_h, _, _ = _quartic_fit(P[half], dE[half])
        mass_half = 1.0 / coef_h[0] if coef_h[0] > 0 else math.inf
        sens = abs(mass_half - mass) / mass
    else:
        mass_half = math.nan
        sens = math.nan
    return MassFit(mass=mass, quartic=float(coef[1]), window=float(P_fit),
                   rms=rms, mass_half_window=mass_half, window_sensitivity=sens,
                   condition=cond, n_samples=int(np.count_nonzero(sel)))


@dataclass(frozen=True)
class QuasiParabolicCertificate:
    mass: float
    c_min: float
    worst_P: float
    margin: float
    n_samples: int


def certify_quasi_parabolic(curve: DispersionCurve, mass: float,
                            extra_samples=None, *, tol: float = 1e-9
                            ) -> QuasiParabolicCertificate:
    """Smallest C >= 0 with E(P) >= E0 + P^2/(2 mass (1 + C P^2)) at samples.

    `extra_samples` is an optional array of (P, E) rows folded into the
    certificate (the lower-bound machinery evaluates the inequality at
    momenta that need not lie on the scanned curve).  The certificate is
    re-verified by a direct sweep; its margin is the worst slack.
    """
    P = curve.momenta
    E = curve.energies
    if extra_samples is not None:
        extra = np.atleast_2d(np.asarray(extra_samples, dtype=float))
        if extra.size:
            P = np.concatenate([P, extra[:, 0]])
            E = np.concatenate([E, extra[:, 1]])
    dE = E - curve.e0
    nz = np.abs(P) > 1e-15
    c_min = 0.0
    worst = 0.0
    for p, d in zip(P[nz], dE[nz]):
        if d <= tol * max(1.0, abs(curve.e0)):
            if d <= 0.0:
                raise AnalysisError(
                    f"E(P) = E0 at P = {p:g}; quasi-parabolic bound unverifiable"
                )
        c_here = (p * p / (2.0 * mass * d) - 1.0) / (p * p)
        if c_here > c_min:
            c_min, worst = c_here, p
    c_min = max(0.0, c_min)
    # direct re-verification sweep
    margin = math.inf
    for p, d in zip(P[nz], dE[nz]):
        bound = p * p / (2.0 * mass * (1.0 + c_min * p * p))
        margin = min(margin, d - bound)
    if margin < -tol * max(1.0, abs(curve.e0)):
        raise AnalysisError(
            f"certificate sweep failed: margin {margin:.3e} at C = {c_min:g}"
        )
    return QuasiParabolicCertificate(mass=mass, c_min=c_min, worst_P=worst,
                                     margin=margin,
                                     n_samples=int(np.count_nonzero(nz)))


@dataclass(frozen=True)
class CeilingReport:
    one_phonon_margin: float
    parabola_margin: float
    violations: tuple
    passed: bool


def check_ceilings(curve: DispersionCurve, template: FiberTemplate,
                   *, tol: float = 1e-9) -> CeilingReport:
    """Verify E(P) <= min_i[(P - k_i)^2/(2m) + omega_i] and E <= E0 + P^2/(2m).

    Both are variational on the truncated model: the first uses a
    one-phonon trial state (the interaction has zero expectation there),
    the second the P = 0 ground state (whose field momentum has zero mean
    on a symmetric grid).  Margins are (ceiling - E); report-only.
    """
    k = template.grid.momenta
    omg = template.omegas
    inv2m = 1.0 / (2.0 * template.spec.mass)
    axis = curve.axis
    one_ph = math.inf
    parab = math.inf
    violations = []
    scale = max(1.0, abs(curve.e0))
    for s in curve.samples:
        Pvec = s.P * axis
        ceil1 = float(np.min(np.sum((Pvec[None, :] - k) ** 2, axis=1) * inv2m + omg))
        ceil2 = curve.e0 + s.P * s.P * inv2m
        m1 = ceil1 - s.energy
        m2 = ceil2 - s.energy
        one_ph = min(one_ph, m1)
        parab = min(parab, m2)
        if m1 < -tol * scale:
            violations.append(("one_phonon", s.P, m1))
        if m2 < -tol * scale:
            violations.append(("parabola", s.P, m2))
    return CeilingReport(one_phonon_margin=one_ph, parabola_margin=parab,
                         violations=tuple(violations), passed=not violations)


def estimate_Pc(curve: DispersionCurve,
                gap_threshold: float = GAP_THRESHOLD_DEFAULT) -> float:
    """Largest contiguous |P| from 0 with open gap and no degeneracy flags."""
    order = np.argsort(np.abs(curve.momenta))
    samples = [curve.samples[i] for i in order]
    if samples[0].gap <= gap_threshold or samples[0].degenerate:
        raise AnalysisError(
            f"gap at P=0 is {samples[0].gap:.3e} <= threshold {gap_threshold:g}; "
            "a unique ground state at 0 is required"
        )
    p_c = 0.0
    seen = {}
    for s in samples:
        ap = abs(s.P)
        ok = s.gap > gap_threshold and not s.degenerate
        seen[ap] = min(seen.get(ap, True), ok)
    for ap in sorted(seen):
        if not seen[ap]:
            break
        p_c = ap
    return p_c


def perturbative_energy(template: FiberTemplate, P_values, axis=None) -> np.ndarray:
    """Second-order weak-coupling energy E2(P) on the scan axis.

    E2(P) = P^2/(2m) - sum_i v_i^2 / ((P - k_i)^2/(2m) + omega_i - P^2/(2m)).
    """
    spec = template.spec
    axis = _unit_axis(axis, spec.dimension)
    P_values = np.asarray(P_values, dtype=float)
    k = template.grid.momenta
    omg = template.omegas
    v2 = template.couplings**2
    inv2m = 1.0 / (2.0 * spec.mass)
    out = np.empty(P_values.shape)
    for idx, p in np.ndenumerate(P_values):
        Pvec = p * axis
        denom = np.sum((Pvec[None, :] - k) ** 2, axis=1) * inv2m + omg - p * p * inv2m
        if np.any(denom <= 0.0):
            raise DomainError(
                f"second-order denominator vanishes at P = {p:g}; "
                "shrink the momentum window"
            )
        out[idx] = p * p * inv2m - float(np.sum(v2 / denom))
    return out


def perturbative_mass(template: FiberTemplate, P_list, *, axis=None,
                      P_fit: float | None = None) -> float:
    """Weak-coupling oracle mass from E2's curvature at 0.

    The curvature is extracted with the same windowed quartic fit as the
    dynamic mass, over the same momenta, so fit-window bias cancels in
    comparisons between the two.
    """
    P_arr = np.unique(np.asarray(P_list, dtype=float))
    if not np.any(np.abs(P_arr) <= 1e-15):
        P_arr = np.concatenate([[0.0], P_arr])
    E2 = perturbative_energy(template, P_arr, axis=axis)
    e0 = float(E2[np.argmin(np.abs(P_arr))])
    samples = tuple(
        DispersionSample(P=float(p), energy=float(e), gap=1.0, residual=0.0,
                         degenerate=False)
        for p, e in zip(P_arr, E2)
    )
    curve = DispersionCurve(axis=_unit_axis(axis, template.spec.dimension),
                            samples=samples, e0=e0)
    return fit_dynamic_mass(curve, P_fit=P_fit).mass
