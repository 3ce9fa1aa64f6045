"""Experiment stages: dispersion scan, static-mass chain, sandwich, oracles.

Each stage is a pure function from a validated config (plus upstream stage
state) to a JSON-ready report block and CSV rows; :func:`run` dispatches a
subcommand, times the stages, folds their verdicts, and writes every
artifact in one final sequential pass.

Determinism contract: identical config + seed produce byte-identical CSV
files.  To keep results independent of the thread count, worker pools are
used only where jobs are strictly independent (fiber solves from a fixed
seed); the coupled lam solves run sequentially from cold starts, and all
floats are printed through one fixed format.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .bounds import (SandwichRow, SplitParams, momentum_lower_bound,
                     sandwich_report, split_lower_bound, suggest_c_eps)
from .config import ExperimentConfig
from .dispersion import (FiberCache, certify_quasi_parabolic, check_ceilings,
                         estimate_Pc, fit_dynamic_mass, perturbative_mass,
                         scan_dispersion)
from .eigensolve import dense_ground, dense_spectrum, ground_state
from .errors import ConfigError
from .model import ModelSpec
from .operators import (FiberTemplate, assemble_direct_tensor,
                        assemble_llp_ring)
from .staticmass import (coupled_ground, extrapolate_static_mass,
                         _fit_quadratic_in_lambda)
from .trialstate import minimize_upper_bound

__all__ = ["run", "stage_dispersion", "stage_static", "stage_sandwich",
           "run_oracle_check", "run_converge", "write_csv", "FMT",
           "CSV_HEADERS"]

FMT = "%.17g"

# one source of truth for artifact columns (docsgen renders this table)
CSV_HEADERS = {
    "dispersion.csv": "P,E,gap,residual",
    "staticmass.csv": "lambda,e_lambda,lower_bound,upper_bound,residual",
    "trialstate.csv": "lambda,f_params,U_lambda",
    "sandwich.csv": "lambda,L2,L1,e,U_star,margin_min",
    "oracle.csv": "check,dim,max_diff,passed",
    "converge.csv": "variant,n_max,dk,M_dyn,M_stat,rel_gap,sandwich_pass,"
                    "mass_pass",
}


def _fmt(x) -> str:
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return FMT % x
    return str(x)


def write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

@dataclass
class DispersionState:
    template: FiberTemplate
    cache: FiberCache
    curve: object
    p_c: float
    fit: object
    certificate: object
    ceilings: object


def stage_dispersion(cfg: ExperimentConfig) -> tuple:
    """Scan E(P), fit the dynamic mass, certify the curve."""
    if not cfg.P_list:
        raise ConfigError("run.P_list is required for this subcommand")
    template = FiberTemplate(cfg.spec)
    cache = FiberCache(template, tol=cfg.solver_tol, seed=cfg.seed)
    cache.prefetch(cfg.P_list, threads=cfg.threads)
    curve = scan_dispersion(template, cfg.P_list, tol=cfg.solver_tol,
                            seed=cfg.seed, cache=cache)
    p_c = estimate_Pc(curve, gap_threshold=cfg.gap_threshold)
    fit = fit_dynamic_mass(curve, P_fit=cfg.P_fit, P_c=p_c)
    cert = certify_quasi_parabolic(curve, fit.mass)
    ceilings = check_ceilings(curve, template)
    m_pt = perturbative_mass(template, cfg.P_list, P_fit=fit.window)
    block = {
        "E0": curve.e0,
        "P_c": p_c,
        "parity_max_diff": curve.parity_max_diff,
        "mass_fit": {
            "M_dyn": fit.mass,
            "quartic_coeff": fit.quartic,
            "window": fit.window,
            "rms": fit.rms,
            "mass_half_window": fit.mass_half_window,
            "window_sensitivity": fit.window_sensitivity,
            "n_samples": fit.n_samples,
        },
        "certificate": {
            "C_min": cert.c_min,
            "worst_P": cert.worst_P,
            "margin": cert.margin,
            "passed": True,
        },
        "ceilings": {
            "one_phonon_margin": ceilings.one_phonon_margin,
            "parabola_margin": ceilings.parabola_margin,
            "violations": list(ceilings.violations),
            "passed": ceilings.passed,
        },
        "perturbative_mass": m_pt,
        "fiber_solves": cache.solves(),
    }
    rows = [(s.P, s.energy, s.gap, s.residual) for s in curve.samples]
    state = DispersionState(template, cache, curve, p_c, fit, cert, ceilings)
    return state, block, rows


@dataclass
class StaticState:
    e_rows: list                 # (lam, e, L1, U*, residual)
    u_results: list
    extrapolation: object


def stage_static(cfg: ExperimentConfig, dstate: DispersionState) -> tuple:
    """e(lam) per lam with its certified bounds, then the lam -> 0 mass."""
    if cfg.potential is None:
        raise ConfigError(
            "the static-mass stage needs a potential; set potential.type"
        )
    if len(cfg.lambda_seq) < 4:
        raise ConfigError("run.lambda_seq needs >= 4 values to extrapolate")
    lams = sorted(set(cfg.lambda_seq), reverse=True)
    e0 = dstate.curve.e0
    q = cfg.egrid.points[:, 0]

    # fiber energies used by the momentum bound, batched across lam
    wanted = np.concatenate([lam * q for lam in lams])
    dstate.cache.prefetch(wanted, threads=cfg.threads)

    e_rows, u_results = [], []
    for lam in lams:
        res = coupled_ground(dstate.template, cfg.potential, cfg.egrid, lam,
                             e0=e0, tol=cfg.coupled_tol, seed=cfg.seed,
                             tail_tol=cfg.tail_tol)
        l1 = momentum_lower_bound(lam, cfg.egrid, cfg.potential, e0,
                                  cache=dstate.cache)
        ub = minimize_upper_bound(
            lam, dstate.cache, cfg.potential, cfg.egrid, e0=e0,
            p_c=dstate.p_c, profile_kind=cfg.profile_kind,
            gap_threshold=cfg.gap_threshold,
            radius_bounds=cfg.radius_bounds, xatol=cfg.profile_xatol)
        e_rows.append((lam, res.value, l1.value, ub.result.value,
                       res.residual))
        u_results.append(ub)

    extrap = extrapolate_static_mass(
        [r[0] for r in e_rows], [r[1] for r in e_rows], cfg.potential,
        cfg.egrid, fit_rms_tol=cfg.fit_rms_tol)

    u_vals = np.array([u.result.value for u in u_results])
    u_coef, _, _ = _fit_quadratic_in_lambda(np.array(lams), u_vals)
    consistent = all(r[2] - cfg.ordering_tol <= r[1] <= r[3] + cfg.ordering_tol
                     for r in e_rows)
    block = {
        "static_mass": {
            "e0": extrap.e0,
            "e0_err": extrap.e0_err,
            "M_stat": extrap.mass,
            "M_stat_err": extrap.mass_err,
            "lambda_seq": list(extrap.lambdas),
            "e_values": list(extrap.e_values),
            "fit_coeffs": list(extrap.coeffs),
            "fit_rms": extrap.fit_rms,
            "drop_largest_shift": extrap.drop_shift,
            "rejected": extrap.rejected,
            "reason": extrap.reason,
        },
        "upper_bound": {
            "lambda_seq": list(lams),
            "U_star": [u.result.value for u in u_results],
            "extrapolated": float(u_coef[0]),
            "radius": [u.radius for u in u_results],
            "boundary_hit": [u.boundary_hit for u in u_results],
            "path": [u.result.path for u in u_results],
        },
        "bounds_consistent": consistent,
    }
    return StaticState(e_rows, u_results, extrap), block


def _profile_string(params: dict) -> str:
    items = sorted(params.items())
    return ";".join(
        f"{k}={v}" if isinstance(v, str) else f"{k}={FMT % v}"
        for k, v in items
    )


def stage_sandwich(cfg: ExperimentConfig, dstate: DispersionState,
                   sstate: StaticState) -> tuple:
    """Split lower bound per lam and the ordering verdict."""
    lam_max = max(r[0] for r in sstate.e_rows)
    c_eps = cfg.c_eps
    if c_eps is None:
        c_eps = suggest_c_eps(dstate.fit.mass, dstate.certificate.c_min,
                              cfg.potential.sup_norm(), lam_max,
                              c_beta=cfg.c_beta)
    params = SplitParams(c_eps=c_eps, c_beta=cfg.c_beta)
    rows, l2_blocks = [], []
    for lam, e_val, l1, u_star, _res in sstate.e_rows:
        l2 = split_lower_bound(lam, cfg.potential, cfg.egrid,
                               mass=dstate.fit.mass,
                               c_min=dstate.certificate.c_min,
                               p_c=dstate.p_c, params=params)
        rows.append(SandwichRow(lam=lam, l2=l2.value, l1=l1, e=e_val,
                                u_star=u_star))
        l2_blocks.append({
            "lam": lam, "L2": l2.value,
            "operator_branch": l2.operator_branch,
            "scalar_branch": l2.scalar_branch,
            "eps": l2.eps, "beta": l2.beta,
        })
    report = sandwich_report(rows, ordering_tol=cfg.ordering_tol)
    block = {
        "split_bound": {"c_eps": c_eps, "c_beta": cfg.c_beta,
                        "rows": l2_blocks},
        "verdict": {
            "pass": report.passed,
            "worst_margin": report.margin_min,
            "worst_lambda": report.worst_lam,
            "worst_pair": report.worst_pair,
            "ordering_tol": report.ordering_tol,
        },
    }
    csv_rows = [
        (r.lam, r.l2, r.l1, r.e, r.u_star,
         min(r.l1 - r.l2, r.e - r.l1, r.u_star - r.e))
        for r in report.rows
    ]
    return report, block, csv_rows


# ---------------------------------------------------------------------------
# oracle suite
# ---------------------------------------------------------------------------

_ORACLE_DENSE_LIMIT = 1000
_ORACLE_RANDOM_INSTANCES = 50
_ORACLE_TOL = 1e-8


def run_oracle_check(cfg: ExperimentConfig) -> tuple:
    """Frame-equivalence and solver cross-checks, run inline.

    1.  The translation-covariant frame (electron momentum blocks) and the
        direct position-space tensor assembly describe the same operator on
        commensurate grids; full sorted spectra must agree.
    2.  The iterative ground-state solver must reproduce the in-house dense
        solver on a seeded batch of random sparse symmetric instances.
    """
    template = FiberTemplate(cfg.spec)
    dim = cfg.egrid.size * template.dim
    if dim > _ORACLE_DENSE_LIMIT:
        raise ConfigError(
            f"oracle-check needs grid_size * fock_dim <= {_ORACLE_DENSE_LIMIT}"
            f", got {dim}; use a smaller preset"
        )
    checks = []
    for label, pot in (("frame_no_potential", None),
                       ("frame_with_potential", cfg.potential)):
        ring = assemble_llp_ring(template, pot, cfg.egrid)
        direct = assemble_direct_tensor(template, pot, cfg.egrid)
        s1 = dense_spectrum(ring.to_dense())
        s2 = dense_spectrum(direct.to_dense())
        diff = float(np.max(np.abs(s1 - s2)))
        checks.append((label, dim, diff, diff <= _ORACLE_TOL))

    rng = np.random.default_rng(cfg.seed + 12345)
    worst = 0.0
    for i in range(_ORACLE_RANDOM_INSTANCES):
        n = int(rng.integers(20, 501))
        density = float(rng.uniform(0.02, 0.2))
        mask = rng.random((n, n)) < density
        a = rng.standard_normal((n, n)) * mask
        a = 0.5 * (a + a.T)
        a[np.diag_indices(n)] += rng.standard_normal(n)
        dense_val = dense_ground(a).value
        lanczos_val = ground_state(a, tol=1e-11, seed=cfg.seed + i).value
        diff = abs(dense_val - lanczos_val)
        worst = max(worst, diff)
        checks.append((f"lanczos_vs_dense_{i:02d}", n, diff,
                       diff <= _ORACLE_TOL))
    passed = all(ok for (_, _, _, ok) in checks)
    block = {
        "oracles": {
            "checks": [
                {"name": name, "dim": d, "max_diff": diff, "passed": ok}
                for (name, d, diff, ok) in checks
            ],
            "worst_random_diff": worst,
            "tolerance": _ORACLE_TOL,
            "passed": passed,
        }
    }
    csv_rows = [(name, d, diff, ok) for (name, d, diff, ok) in checks]
    return passed, block, csv_rows


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

def _variant_specs(spec: ModelSpec):
    yield "base", spec
    if spec.n_max > 1:
        yield "n_max-1", replace(spec, n_max=spec.n_max - 1)
    yield "n_max+1", replace(spec, n_max=spec.n_max + 1)
    yield "dk/2", replace(spec, dk=spec.dk / 2.0)


def run_converge(cfg: ExperimentConfig) -> tuple:
    """Re-run the headline numbers at perturbed truncation parameters.

    Verdicts (sandwich ordering, mass agreement) must not change between
    the base truncation and n_max +- 1 or half the mode spacing; the masses
    themselves may drift within their tolerances.
    """
    rows, table = [], []
    base_verdicts = None
    for label, spec in _variant_specs(cfg.spec):
        vcfg = replace(cfg, spec=spec)
        dstate, dblock, _ = stage_dispersion(vcfg)
        sstate, sblock = stage_static(vcfg, dstate)
        report, wblock, _ = stage_sandwich(vcfg, dstate, sstate)
        m_dyn = dstate.fit.mass
        extrap = sstate.extrapolation
        rel_gap = (abs(m_dyn - extrap.mass) / m_dyn
                   if not math.isnan(extrap.mass) else math.inf)
        mass_ok = (not extrap.rejected) and rel_gap <= cfg.mass_rel_tol
        verdicts = (report.passed, mass_ok, dblock["ceilings"]["passed"])
        if base_verdicts is None:
            base_verdicts = verdicts
        rows.append((label, spec.n_max, spec.dk, m_dyn, extrap.mass, rel_gap,
                     report.passed, mass_ok))
        table.append({
            "variant": label, "n_max": spec.n_max, "dk": spec.dk,
            "M_dyn": m_dyn, "M_stat": extrap.mass, "rel_gap": rel_gap,
            "sandwich_pass": report.passed, "mass_pass": mass_ok,
            "ceilings_pass": dblock["ceilings"]["passed"],
            "stable": verdicts == base_verdicts,
        })
    passed = all(t["stable"] for t in table) and base_verdicts[0] \
        and base_verdicts[1] and base_verdicts[2]
    return passed, {"convergence": {"table": table, "passed": passed}}, rows


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def run(subcommand: str, cfg: ExperimentConfig, out_dir: str | None = None
        ) -> bool:
    """Execute a subcommand; write report.json + CSVs; return overall pass."""
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    report = {
        "package_version": __version__,
        "subcommand": subcommand,
        "config": cfg.raw,
        "config_sha256": _config_hash(cfg.raw),
        "seed": cfg.seed,
        "threads": cfg.threads,
    }
    timings: dict = {}
    csvs: dict = {}
    passed = True

    def timed(name, fn, *args):
        t0 = time.perf_counter()
        out_ = fn(*args)
        timings[name] = round(time.perf_counter() - t0, 3)
        return out_

    if subcommand in ("dispersion", "staticmass", "sandwich"):
        dstate, dblock, drows = timed("dispersion", stage_dispersion, cfg)
        report["dispersion"] = dblock
        csvs["dispersion.csv"] = drows
        passed = dblock["ceilings"]["passed"]

    if subcommand in ("staticmass", "sandwich"):
        sstate, sblock = timed("staticmass", stage_static, cfg, dstate)
        report.update(sblock)
        csvs["staticmass.csv"] = sstate.e_rows
        csvs["trialstate.csv"] = [
            (r[0], _profile_string(u.result.profile_params), r[3])
            for r, u in zip(sstate.e_rows, sstate.u_results)]
        extrap = sstate.extrapolation
        m_dyn = dstate.fit.mass
        rel_gap = (abs(m_dyn - extrap.mass) / m_dyn
                   if not math.isnan(extrap.mass) else math.inf)
        mass_ok = (not extrap.rejected) and rel_gap <= cfg.mass_rel_tol
        report["mass_comparison"] = {
            "M_dyn": m_dyn,
            "M_stat": extrap.mass,
            "rel_gap": rel_gap,
            "tolerance": cfg.mass_rel_tol,
            "pass": mass_ok,
        }
        passed = passed and mass_ok and sblock["bounds_consistent"]

    if subcommand == "sandwich":
        sreport, wblock, wrows = timed("sandwich", stage_sandwich, cfg,
                                       dstate, sstate)
        report.update(wblock)
        csvs["sandwich.csv"] = wrows
        passed = passed and sreport.passed

    if subcommand == "oracle-check":
        ok, oblock, orows = timed("oracle_check", run_oracle_check, cfg)
        report.update(oblock)
        csvs["oracle.csv"] = orows
        passed = ok

    if subcommand == "converge":
        ok, cblock, crows = timed("converge", run_converge, cfg)
        report.update(cblock)
        csvs["converge.csv"] = crows
        passed = ok

    if subcommand not in ("dispersion", "staticmass", "sandwich",
                          "oracle-check", "converge"):
        raise ConfigError(f"unknown subcommand {subcommand!r}")

    report["timings_seconds"] = timings
    report["pass"] = bool(passed)
    # all artifact writes happen here, sequentially
    for name, rows in csvs.items():
        write_csv(os.path.join(out, name), CSV_HEADERS[name], rows)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True,
                  default=_json_default)
        fh.write("\n")
    return bool(passed)
