"""Experiment configuration: JSON schema, strict validation, object builders.

A config file has five blocks:

    model     -- dimension, n_max, mode grid, dispersion, coupling
    potential -- the external well (or "none")
    trial     -- upper-bound profile family and its minimizer knobs
    solver    -- eigensolver tolerances and budgets
    run       -- seed, threads, momentum list, lambda sequence, electron
                 grid, analysis tolerances, output directory

Validation is strict: unknown keys anywhere are hard errors naming the
full dotted path, as are missing required keys and out-of-range values.
:func:`validate_config` additionally reports physics-range diagnostics
(warnings) that do not block a run, e.g. when lam_max * Q_max reaches the
estimated quasi-particle window so the trial-profile support will be
clipped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import (ConstantCoupling, ConstantDispersion, FroehlichCoupling,
                    GaussianWell, ModelSpec, PoschlTeller, PowerLawCoupling,
                    SoftStep, TabulatedDispersion, ZeroCoupling,
                    fourier_tail_fraction)
from .operators import ElectronGrid
from .staticmass import DEFAULT_LAMBDA_SEQ

__all__ = ["ExperimentConfig", "load_config", "parse_config",
           "validate_config", "preset_path", "PRESET_NAMES"]

_DISPERSION_VARIANTS = {
    "constant": {"type": (True, str), "omega0": (False, float)},
    "tabulated": {"type": (True, str), "samples": (True, list)},
}
_COUPLING_VARIANTS = {
    "zero": {"type": (True, str)},
    "constant": {"type": (True, str), "g": (True, float)},
    "powerlaw": {"type": (True, str), "g": (True, float), "s": (False, float)},
    "froehlich": {"type": (True, str), "alpha": (True, float)},
}
_POTENTIAL_VARIANTS = {
    "none": {"type": (True, str)},
    "poschl_teller": {"type": (True, str), "depth": (True, float)},
    "gaussian_well": {"type": (True, str), "depth": (True, float),
                      "width": (False, float)},
    "soft_step": {"type": (True, str), "depth": (True, float),
                  "radius": (False, float), "softness": (False, float)},
}
_DISPERSIONS = set(_DISPERSION_VARIANTS)
_COUPLINGS = set(_COUPLING_VARIANTS)
_POTENTIALS = set(_POTENTIAL_VARIANTS)
_PROFILES = {"bump", "gaussian"}


def _require(block: dict, path: str, allowed: dict):
    """Check `block` against {key: (required, type_or_none)}; return a copy."""
    if not isinstance(block, dict):
        raise ConfigError(f"config section '{path}' must be an object")
    unknown = set(block) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key '{path}.{key}'")
    for key, (required, typ) in allowed.items():
        if key not in block:
            if required:
                raise ConfigError(f"missing required config key '{path}.{key}'")
            continue
        val = block[key]
        if typ is float:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ConfigError(f"config key '{path}.{key}' must be a number")
        elif typ is int:
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"config key '{path}.{key}' must be an integer")
        elif typ is str:
            if not isinstance(val, str):
                raise ConfigError(f"config key '{path}.{key}' must be a string")
        elif typ is list:
            if not isinstance(val, list):
                raise ConfigError(f"config key '{path}.{key}' must be a list")
        elif typ is dict:
            if not isinstance(val, dict):
                raise ConfigError(f"config key '{path}.{key}' must be an object")
    return dict(block)


def _build_dispersion(block: dict):
    kind = block.get("type")
    if kind not in _DISPERSIONS:
        raise ConfigError(
            f"model.dispersion.type must be one of {sorted(_DISPERSIONS)}, "
            f"got {kind!r}"
        )
    b = _require(block, "model.dispersion", _DISPERSION_VARIANTS[kind])
    if kind == "constant":
        return ConstantDispersion(omega0=float(b.get("omega0", 1.0)))
    return TabulatedDispersion(samples=tuple(map(tuple, b["samples"])))


def _build_coupling(block: dict):
    kind = block.get("type")
    if kind not in _COUPLINGS:
        raise ConfigError(
            f"model.coupling.type must be one of {sorted(_COUPLINGS)}, "
            f"got {kind!r}"
        )
    b = _require(block, "model.coupling", _COUPLING_VARIANTS[kind])
    if kind == "zero":
        return ZeroCoupling()
    if kind == "constant":
        return ConstantCoupling(g=float(b["g"]))
    if kind == "powerlaw":
        return PowerLawCoupling(g=float(b["g"]), s=float(b.get("s", 1.0)))
    return FroehlichCoupling(alpha=float(b["alpha"]))


def _build_potential(block: dict, dimension: int):
    kind = block.get("type")
    if kind not in _POTENTIALS:
        raise ConfigError(
            f"potential.type must be one of {sorted(_POTENTIALS)}, got {kind!r}"
        )
    b = _require(block, "potential", _POTENTIAL_VARIANTS[kind])
    if kind == "none":
        return None
    if kind == "poschl_teller":
        return PoschlTeller(depth=float(b["depth"]))
    if kind == "gaussian_well":
        return GaussianWell(depth=float(b["depth"]),
                            width=float(b.get("width", 1.0)),
                            dimension=dimension)
    return SoftStep(depth=float(b["depth"]),
                    radius=float(b.get("radius", 1.0)),
                    softness=float(b.get("softness", 0.25)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description plus the built model objects."""

    raw: dict
    spec: ModelSpec
    potential: object            # None for the potential-free model
    egrid: ElectronGrid
    P_list: tuple
    lambda_seq: tuple
    seed: int
    threads: int
    out_dir: str
    profile_kind: str
    profile_xatol: float
    radius_bounds: tuple | None
    solver_tol: float
    coupled_tol: float
    tail_tol: float
    gap_threshold: float
    fit_rms_tol: float
    ordering_tol: float
    c_eps: float | None
    c_beta: float
    P_fit: float | None
    mass_rel_tol: float


_MODEL_KEYS = {
    "dimension": (True, int), "n_max": (True, int),
    "mode_grid": (True, dict), "dispersion": (True, dict),
    "coupling": (True, dict),
}
_MODE_GRID_KEYS = {
    "dk": (True, float), "uv_cutoff": (True, float),
    "ir_cutoff": (False, float),
}
_TRIAL_KEYS = {
    "profile": (False, str), "xatol": (False, float),
    "radius_bounds": (False, list),
}
_SOLVER_KEYS = {
    "tol": (False, float), "coupled_tol": (False, float),
    "tail_tol": (False, float),
}
_RUN_KEYS = {
    "seed": (False, int), "threads": (False, int), "out": (False, str),
    "P_list": (False, list), "lambda_seq": (False, list),
    "electron_grid": (False, dict), "gap_threshold": (False, float),
    "fit_rms_tol": (False, float), "ordering_tol": (False, float),
    "c_eps": (False, float), "c_beta": (False, float),
    "P_fit": (False, float), "mass_rel_tol": (False, float),
}
_EGRID_KEYS = {"dq": (True, float), "q_max": (True, float)}
_TOP_KEYS = {
    "model": (True, dict), "potential": (True, dict), "trial": (False, dict),
    "solver": (False, dict), "run": (False, dict),
}


def parse_config(data: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a parsed JSON object."""
    top = _require(data, "<top>", _TOP_KEYS)
    model = _require(top["model"], "model", _MODEL_KEYS)
    mode_grid = _require(model["mode_grid"], "model.mode_grid", _MODE_GRID_KEYS)
    dispersion = _build_dispersion(model["dispersion"])
    coupling = _build_coupling(model["coupling"])
    spec = ModelSpec(
        dimension=int(model["dimension"]),
        dispersion=dispersion,
        coupling=coupling,
        dk=float(mode_grid["dk"]),
        uv_cutoff=float(mode_grid["uv_cutoff"]),
        ir_cutoff=float(mode_grid.get("ir_cutoff", 0.0)),
        n_max=int(model["n_max"]),
    )
    potential = _build_potential(top["potential"], spec.dimension)

    trial = _require(top.get("trial", {}), "trial", _TRIAL_KEYS)
    profile_kind = trial.get("profile", "bump")
    if profile_kind not in _PROFILES:
        raise ConfigError(
            f"trial.profile must be one of {sorted(_PROFILES)}, "
            f"got {profile_kind!r}"
        )
    radius_bounds = trial.get("radius_bounds")
    if radius_bounds is not None:
        if len(radius_bounds) != 2 or radius_bounds[0] >= radius_bounds[1]:
            raise ConfigError("trial.radius_bounds must be [lo, hi] with lo < hi")
        radius_bounds = (float(radius_bounds[0]), float(radius_bounds[1]))

    solver = _require(top.get("solver", {}), "solver", _SOLVER_KEYS)
    run = _require(top.get("run", {}), "run", _RUN_KEYS)

    eg = _require(run.get("electron_grid", {"dq": 0.25, "q_max": 6.0}),
                  "run.electron_grid", _EGRID_KEYS)
    egrid = ElectronGrid(float(eg["dq"]), float(eg["q_max"]), spec.dimension)

    P_list = tuple(float(p) for p in run.get("P_list", ()))
    lambda_seq = tuple(float(l) for l in run.get("lambda_seq",
                                                 DEFAULT_LAMBDA_SEQ))
    if any(l <= 0 for l in lambda_seq):
        raise ConfigError("run.lambda_seq entries must be positive")
    threads = int(run.get("threads", 1))
    if threads < 1:
        raise ConfigError("run.threads must be >= 1")
    seed = int(run.get("seed", 0))

    return ExperimentConfig(
        raw=data,
        spec=spec,
        potential=potential,
        egrid=egrid,
        P_list=P_list,
        lambda_seq=lambda_seq,
        seed=seed,
        threads=threads,
        out_dir=run.get("out", "out"),
        profile_kind=profile_kind,
        profile_xatol=float(trial.get("xatol", 1e-3)),
        radius_bounds=radius_bounds,
        solver_tol=float(solver.get("tol", 1e-9)),
        coupled_tol=float(solver.get("coupled_tol", 1e-9)),
        tail_tol=float(solver.get("tail_tol", 1e-6)),
        gap_threshold=float(run.get("gap_threshold", 1e-3)),
        fit_rms_tol=float(run.get("fit_rms_tol", 1e-3)),
        ordering_tol=float(run.get("ordering_tol", 1e-8)),
        c_eps=(float(run["c_eps"]) if "c_eps" in run else None),
        c_beta=float(run.get("c_beta", 1.0)),
        P_fit=(float(run["P_fit"]) if "P_fit" in run else None),
        mass_rel_tol=float(run.get("mass_rel_tol", 0.02)),
    )


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a JSON config file (or a named preset)."""
    real = preset_path(path) if path in PRESET_NAMES else path
    try:
        with open(real, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path!r} is not valid JSON at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_config(data)


def estimate_window(cfg: ExperimentConfig) -> float:
    """Cheap analytic window estimate: the free parabola E0 + P^2/(2m)

    meets the lowest one-phonon ceiling where P^2 = (P - k)^2/(2m)... the
    crossing of P^2 (m = 1/2) with (P - k)^2 + omega(k) sits at
    P = (k^2 + omega)/(2 k); the window estimate is the minimum over modes.
    """
    grid = cfg.spec.mode_grid()
    mags = grid.magnitudes()
    omegas = np.asarray(cfg.spec.dispersion(mags), dtype=float)
    nz = mags > 0
    if not np.any(nz):
        return math.inf
    return float(np.min((mags[nz] ** 2 + omegas[nz]) / (2.0 * mags[nz])))


def validate_config(path_or_data) -> list:
    """Full schema check plus physics-range diagnostics.

    Returns a list of (severity, message) with severity "error" or
    "warning"; schema violations raise ConfigError instead (they carry the
    dotted key path).
    """
    if isinstance(path_or_data, dict):
        cfg = parse_config(path_or_data)
    else:
        cfg = load_config(path_or_data)
    notes = []
    grid = cfg.spec.mode_grid()
    fdim = cfg.spec.fock_dimension(grid)
    notes.append(("info", f"{grid.size} field modes, Fock dimension {fdim}, "
                          f"electron grid {cfg.egrid.size} nodes"))
    p_c_est = estimate_window(cfg)
    lam_max = max(cfg.lambda_seq)
    lam_min = min(cfg.lambda_seq)
    if math.isfinite(p_c_est):
        notes.append(("info", f"estimated quasi-particle window: {p_c_est:.4g}"))
        if lam_min * cfg.egrid.q_max >= p_c_est:
            notes.append((
                "warning",
                f"lambda_min * Q_max = {lam_min * cfg.egrid.q_max:.4g} >= "
                f"estimated window {p_c_est:.4g}; the trial-profile support "
                "will be clipped to the window at every lambda"
            ))
        if cfg.c_beta * math.sqrt(lam_max) >= p_c_est:
            notes.append((
                "warning",
                f"beta(lambda_max) = {cfg.c_beta * math.sqrt(lam_max):.4g} "
                f">= estimated window {p_c_est:.4g}; the split bound will "
                "fail at the largest lambda unless the measured window is "
                "wider"
            ))
    if cfg.potential is not None:
        tail = fourier_tail_fraction(cfg.potential, 2.0 * cfg.egrid.q_max)
        if tail > cfg.tail_tol:
            notes.append((
                "warning",
                f"potential transform tail beyond 2 Q_max carries a fraction "
                f"{tail:.3e} > tail_tol {cfg.tail_tol:g}; enlarge q_max"
            ))
    if cfg.P_list:
        if 0.0 not in cfg.P_list:
            notes.append(("error", "run.P_list must contain P = 0"))
        if len(cfg.P_list) >= 2 and p_c_est and math.isfinite(p_c_est):
            if max(abs(p) for p in cfg.P_list) > 2.0 * p_c_est:
                notes.append(("warning",
                              "run.P_list extends far beyond the estimated "
                              "window; fits ignore those samples"))
    if len(cfg.lambda_seq) < 4:
        notes.append(("warning",
                      "fewer than 4 lambda values: the static-mass "
                      "extrapolation will be rejected"))
    return notes


PRESET_NAMES = ("free", "toy", "small", "powerlaw_g01", "powerlaw_g03",
                "oracle")


def preset_path(name: str) -> str:
    """Filesystem path of a shipped preset config."""
    from importlib.resources import files
    if name not in PRESET_NAMES:
        raise ConfigError(
            f"unknown preset {name!r}; shipped presets: {', '.join(PRESET_NAMES)}"
        )
    return str(files("polaron_effmass").joinpath("presets", name + ".json"))
