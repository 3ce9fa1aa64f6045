"""Strict config parsing, schema errors, presets, physics diagnostics."""

import copy
import json
import math

import pytest

from polaron_effmass.config import (PRESET_NAMES, estimate_window,
                                    load_config, parse_config, preset_path,
                                    validate_config)
from polaron_effmass.errors import ConfigError
from polaron_effmass.model import (ConstantDispersion, GaussianWell,
                                   ModelSpec, PoschlTeller, PowerLawCoupling,
                                   SoftStep, ZeroCoupling)
from polaron_effmass.staticmass import DEFAULT_LAMBDA_SEQ


def _base():
    return {
        "model": {
            "dimension": 1,
            "n_max": 2,
            "mode_grid": {"dk": 1.0, "uv_cutoff": 1.0, "ir_cutoff": 0.5},
            "dispersion": {"type": "constant", "omega0": 1.0},
            "coupling": {"type": "constant", "g": 0.2},
        },
        "potential": {"type": "poschl_teller", "depth": 2.0},
    }


def _mutated(**paths):
    data = copy.deepcopy(_base())
    for dotted, value in paths.items():
        keys = dotted.split("__")
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        if value is ...:
            del node[keys[-1]]
        else:
            node[keys[-1]] = value
    return data


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def test_all_presets_parse_and_validate():
    for name in PRESET_NAMES:
        cfg = load_config(name)
        assert cfg.spec.dimension == 1
        assert cfg.egrid.size >= 9
        assert all(l > 0 for l in cfg.lambda_seq)
        notes = validate_config(cfg.raw)
        assert [n for n in notes if n[0] == "error"] == []


def test_clean_presets_have_no_warnings():
    for name in ("free", "toy"):
        notes = validate_config(load_config(name).raw)
        assert [n for n in notes if n[0] == "warning"] == []


def test_preset_path_rejects_unknown_name():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_path("gigantic")


# ---------------------------------------------------------------------------
# schema violations carry the dotted key path
# ---------------------------------------------------------------------------

def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="unknown config key '<top>.modle'"):
        parse_config(_mutated(modle={}))


def test_unknown_nested_key():
    with pytest.raises(ConfigError,
                       match="unknown config key 'model.mode_grid.dkk'"):
        parse_config(_mutated(model__mode_grid__dkk=0.5))


def test_unknown_variant_key():
    # width belongs to the gaussian well, not this potential
    with pytest.raises(ConfigError,
                       match="unknown config key 'potential.width'"):
        parse_config(_mutated(potential__width=1.0))


def test_missing_required_keys():
    with pytest.raises(ConfigError,
                       match="missing required config key 'model.mode_grid.dk'"):
        parse_config(_mutated(model__mode_grid__dk=...))
    with pytest.raises(ConfigError,
                       match="missing required config key '<top>.potential'"):
        parse_config(_mutated(potential=...))


def test_type_errors_name_the_key():
    with pytest.raises(ConfigError,
                       match="'model.dimension' must be an integer"):
        parse_config(_mutated(model__dimension=1.5))
    with pytest.raises(ConfigError,
                       match="'model.mode_grid' must be an object"):
        parse_config(_mutated(model__mode_grid="fine"))
    with pytest.raises(ConfigError,
                       match="'model.dispersion.omega0' must be a number"):
        parse_config(_mutated(model__dispersion__omega0="one"))
    # booleans are not accepted where numbers are expected
    with pytest.raises(ConfigError, match="'run.c_beta' must be a number"):
        parse_config(_mutated(run__c_beta=True))


def test_bad_variant_names_list_the_choices():
    with pytest.raises(ConfigError, match=r"model.dispersion.type must be one "
                                          r"of \['constant', 'tabulated'\]"):
        parse_config(_mutated(model__dispersion__type="quadratic"))
    with pytest.raises(ConfigError, match="model.coupling.type must be one of"):
        parse_config(_mutated(model__coupling__type="cubic"))
    with pytest.raises(ConfigError, match="potential.type must be one of"):
        parse_config(_mutated(potential={"type": "coulomb"}))
    with pytest.raises(ConfigError,
                       match=r"trial.profile must be one of \['bump', "
                             r"'gaussian'\]"):
        parse_config(_mutated(trial__profile="box"))


def test_run_value_guards():
    with pytest.raises(ConfigError, match="lambda_seq entries must be positive"):
        parse_config(_mutated(run__lambda_seq=[0.4, 0.0]))
    with pytest.raises(ConfigError, match="threads must be >= 1"):
        parse_config(_mutated(run__threads=0))
    with pytest.raises(ConfigError, match="radius_bounds"):
        parse_config(_mutated(trial__radius_bounds=[2.0, 1.0]))
    with pytest.raises(ConfigError, match="radius_bounds"):
        parse_config(_mutated(trial__radius_bounds=[1.0]))


# ---------------------------------------------------------------------------
# builders and defaults
# ---------------------------------------------------------------------------

def test_defaults_of_minimal_config():
    cfg = parse_config(_base())
    assert cfg.egrid.dq == 0.25 and cfg.egrid.q_max == 6.0
    assert cfg.egrid.size == 49
    assert cfg.lambda_seq == DEFAULT_LAMBDA_SEQ
    assert cfg.P_list == ()
    assert cfg.seed == 0 and cfg.threads == 1 and cfg.out_dir == "out"
    assert cfg.profile_kind == "bump" and cfg.profile_xatol == 1e-3
    assert cfg.radius_bounds is None
    assert cfg.solver_tol == 1e-9 and cfg.coupled_tol == 1e-9
    assert cfg.tail_tol == 1e-6
    assert cfg.gap_threshold == 1e-3 and cfg.fit_rms_tol == 1e-3
    assert cfg.ordering_tol == 1e-8
    assert cfg.c_eps is None and cfg.c_beta == 1.0 and cfg.P_fit is None
    assert cfg.mass_rel_tol == 0.02


def test_builders_produce_the_right_objects():
    data = _mutated(
        model__coupling={"type": "powerlaw", "g": 0.1, "s": 0.5},
        potential={"type": "gaussian_well", "depth": 1.5, "width": 0.8},
    )
    cfg = parse_config(data)
    assert isinstance(cfg.spec.coupling, PowerLawCoupling)
    assert cfg.spec.coupling.g == 0.1 and cfg.spec.coupling.s == 0.5
    assert isinstance(cfg.potential, GaussianWell)
    assert cfg.potential.depth == 1.5 and cfg.potential.width == 0.8

    cfg2 = parse_config(_mutated(
        model__coupling={"type": "zero"},
        potential={"type": "soft_step", "depth": 1.0},
    ))
    assert isinstance(cfg2.spec.coupling, ZeroCoupling)
    assert isinstance(cfg2.potential, SoftStep)
    assert cfg2.potential.radius == 1.0 and cfg2.potential.softness == 0.25

    cfg3 = parse_config(_mutated(potential={"type": "none"}))
    assert cfg3.potential is None
    assert isinstance(cfg3.spec.dispersion, ConstantDispersion)


# ---------------------------------------------------------------------------
# file loading
# ---------------------------------------------------------------------------

def test_load_config_from_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(_base()), encoding="utf-8")
    cfg = load_config(str(path))
    assert isinstance(cfg.potential, PoschlTeller)


def test_load_config_reports_json_error_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"model": \n  bad}', encoding="utf-8")
    with pytest.raises(ConfigError, match="line 2, column 3"):
        load_config(str(path))


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config("/nonexistent/exp.json")


# ---------------------------------------------------------------------------
# physics diagnostics
# ---------------------------------------------------------------------------

def test_estimate_window_hand_values():
    # single mode |k| = 1, omega = 1: crossing at (1 + 1)/2 = 1
    assert estimate_window(parse_config(_base())) == pytest.approx(1.0)
    # modes 0.5 and 1.0: min(1.25/1, 2/2) = 1.0
    spec = ModelSpec(dimension=1, dispersion=ConstantDispersion(omega0=1.0),
                     coupling=ZeroCoupling(), dk=0.5, uv_cutoff=1.0,
                     ir_cutoff=0.0, n_max=1)
    cfg = parse_config(_mutated(
        model__mode_grid={"dk": 0.5, "uv_cutoff": 1.0},
        model__coupling={"type": "zero"}, model__n_max=1))
    assert cfg.spec.mode_grid().size == spec.mode_grid().size
    assert estimate_window(cfg) == pytest.approx(1.0)


def test_estimate_window_no_nonzero_modes_is_infinite():
    cfg = parse_config(_mutated(
        model__mode_grid={"dk": 1.0, "uv_cutoff": 0.4},
        model__coupling={"type": "zero"}))
    assert math.isinf(estimate_window(cfg))


def test_validate_flags_missing_origin_in_P_list():
    notes = validate_config(_mutated(run__P_list=[-0.2, 0.2]))
    assert ("error", "run.P_list must contain P = 0") in notes


def test_validate_warns_on_short_lambda_sequence():
    notes = validate_config(_mutated(run__lambda_seq=[0.4, 0.2, 0.1]))
    assert any(s == "warning" and "fewer than 4" in m for s, m in notes)


def test_validate_warns_when_scaling_exceeds_window():
    notes = validate_config(_mutated(run__lambda_seq=[1.5, 1.2, 1.0, 0.8]))
    msgs = [m for s, m in notes if s == "warning"]
    assert any("clipped" in m for m in msgs)
    assert any("split bound" in m for m in msgs)


def test_validate_reports_size_info():
    notes = validate_config(_base())
    assert notes[0][0] == "info"
    assert "field modes" in notes[0][1]
