"""Lower bounds (momentum split and scaled-potential split) and the sandwich."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polaron_effmass.bounds import (SandwichRow, SplitParams,
                                    momentum_lower_bound, sandwich_report,
                                    split_lower_bound, suggest_c_eps)
from polaron_effmass.dispersion import (FiberCache, certify_quasi_parabolic,
                                        fit_dynamic_mass, scan_dispersion)
from polaron_effmass.errors import AnalysisError, ConfigError, DomainError
from polaron_effmass.model import (ConstantDispersion, ModelSpec,
                                   PoschlTeller, ZeroCoupling)
from polaron_effmass.operators import (ElectronGrid, FiberTemplate,
                                       assemble_schrodinger)
from polaron_effmass.staticmass import coupled_ground

EGRID = ElectronGrid(dq=0.25, q_max=6.0, dimension=1)
WELL = PoschlTeller(depth=2.0)


class _PositiveBump:
    """Repulsive stand-in used to exercise the sign guard."""

    dimension = 1

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-x**2)

    def fourier(self, q):
        q = np.asarray(q, dtype=float)
        return np.exp(-q**2 / 4.0) / math.sqrt(2.0)

    def sup_norm(self):
        return 1.0


@pytest.fixture(scope="module")
def free_cache():
    spec = ModelSpec(dimension=1, dispersion=ConstantDispersion(omega0=1.0),
                     coupling=ZeroCoupling(), dk=0.5, uv_cutoff=1.0,
                     ir_cutoff=0.0, n_max=2)
    template = FiberTemplate(spec)
    return FiberCache(template, tol=1e-9, seed=0)


@pytest.fixture(scope="module")
def toy_ground(toy_cfg, toy_template, toy_cache):
    """e(lam) for the small interacting model at two coupling scales."""
    e0 = toy_cache.pair(0.0)["energy"]
    energies = {
        lam: coupled_ground(toy_template, toy_cfg.potential, toy_cfg.egrid,
                            lam, e0, tol=1e-9, tail_tol=None).value
        for lam in (0.4, 0.2)
    }
    return e0, energies


@pytest.fixture(scope="module")
def toy_certificate(toy_cfg, toy_template, toy_cache):
    curve = scan_dispersion(toy_template, toy_cfg.P_list, cache=toy_cache)
    fit = fit_dynamic_mass(curve)
    cert = certify_quasi_parabolic(curve, fit.mass)
    return curve, fit, cert


# ---------------------------------------------------------------------------
# split-bound knobs
# ---------------------------------------------------------------------------

def test_split_params_schedules():
    params = SplitParams(c_eps=3.0, c_beta=0.8)
    assert params.eps(0.2) == pytest.approx(0.6, rel=1e-15)
    assert params.beta(0.25) == pytest.approx(0.8 * 0.5, rel=1e-15)


def test_suggest_c_eps_frozen_formula():
    # m_c = 0.5 * (1 + 0.2 * 1^2 * 0.4) = 0.54; 2 * 2 * 0.54 * 1.5 = 3.24
    got = suggest_c_eps(0.5, 0.2, 1.5, 0.4, c_beta=1.0, safety=2.0)
    assert got == pytest.approx(3.24, rel=1e-14)


def test_suggest_c_eps_scales_linearly_in_safety_and_sup_norm():
    base = suggest_c_eps(0.5, 0.1, 1.0, 0.3)
    assert suggest_c_eps(0.5, 0.1, 1.0, 0.3, safety=4.0) == pytest.approx(
        2.0 * base, rel=1e-14)
    assert suggest_c_eps(0.5, 0.1, 3.0, 0.3) == pytest.approx(
        3.0 * base, rel=1e-14)


# ---------------------------------------------------------------------------
# scaled-potential split bound
# ---------------------------------------------------------------------------

def test_split_bound_rejects_positive_potential():
    with pytest.raises(DomainError, match="nonpositive"):
        split_lower_bound(0.2, _PositiveBump(), EGRID, mass=0.5, c_min=0.1,
                          p_c=0.7, params=SplitParams(c_eps=4.0))


def test_split_bound_rejects_beta_at_window_edge():
    # beta = sqrt(0.5) ~ 0.707 reaches p_c = 0.7
    with pytest.raises(AnalysisError, match="window"):
        split_lower_bound(0.5, WELL, EGRID, mass=0.5, c_min=0.1, p_c=0.7,
                          params=SplitParams(c_eps=4.0, c_beta=1.0))


def test_split_bound_guards():
    with pytest.raises(DomainError):
        split_lower_bound(0.0, WELL, EGRID, mass=0.5, c_min=0.1, p_c=0.7,
                          params=SplitParams(c_eps=4.0))
    with pytest.raises(ConfigError):
        split_lower_bound(0.2, WELL, EGRID, mass=0.5, c_min=0.1, p_c=0.7,
                          params=SplitParams(c_eps=0.0))


def test_split_bound_components_match_hand_assembly():
    lam, mass, c_min = 0.2, 0.52, 0.15
    params = SplitParams(c_eps=5.0, c_beta=0.9)
    res = split_lower_bound(lam, WELL, EGRID, mass=mass, c_min=c_min,
                            p_c=0.7, params=params)
    eps = 5.0 * lam
    beta = 0.9 * math.sqrt(lam)
    m_c = mass * (1.0 + c_min * beta**2)
    assert res.eps == pytest.approx(eps, rel=1e-15)
    assert res.beta == pytest.approx(beta, rel=1e-15)
    assert res.effective_mass_arg == pytest.approx(m_c, rel=1e-15)
    h = assemble_schrodinger(WELL, EGRID, m_c, v_scale=1.0 + eps)
    assert res.operator_branch == pytest.approx(
        float(np.linalg.eigvalsh(h)[0]), abs=1e-11)
    scalar = beta**2 / (2.0 * lam**2 * m_c) - (1.0 + 1.0 / eps) * WELL.sup_norm()
    assert res.scalar_branch == pytest.approx(scalar, rel=1e-13)
    assert res.value == min(res.operator_branch, res.scalar_branch)


def test_split_bound_scalar_branch_grows_as_lam_shrinks():
    # with c_eps above the threshold the scalar branch must climb ~ 1/lam
    c_eps = suggest_c_eps(0.5, 0.1, WELL.sup_norm(), 0.4)
    params = SplitParams(c_eps=c_eps)
    res = [split_lower_bound(lam, WELL, EGRID, mass=0.5, c_min=0.1, p_c=0.7,
                             params=params) for lam in (0.4, 0.2, 0.1)]
    scalars = [r.scalar_branch for r in res]
    assert scalars[0] < scalars[1] < scalars[2]
    # eventually the operator branch is the binding one
    assert res[-1].value == res[-1].operator_branch


def test_split_bound_sits_below_coupled_energy(toy_cfg, toy_ground,
                                               toy_certificate):
    _, energies = toy_ground
    _, fit, cert = toy_certificate
    c_eps = suggest_c_eps(fit.mass, cert.c_min, toy_cfg.potential.sup_norm(),
                          0.4)
    params = SplitParams(c_eps=c_eps)
    for lam, e in energies.items():
        res = split_lower_bound(lam, toy_cfg.potential, toy_cfg.egrid,
                                mass=fit.mass, c_min=cert.c_min, p_c=0.7,
                                params=params)
        assert res.value <= e + 1e-9


# ---------------------------------------------------------------------------
# momentum-decomposition bound
# ---------------------------------------------------------------------------

def test_momentum_bound_guards(toy_cache):
    with pytest.raises(DomainError):
        momentum_lower_bound(-0.1, EGRID, WELL, 0.0, cache=toy_cache)
    with pytest.raises(ConfigError):
        momentum_lower_bound(0.2, EGRID, WELL, 0.0)


def test_momentum_bound_certified_below_coupled_energy(toy_cfg, toy_cache,
                                                       toy_ground):
    e0, energies = toy_ground
    for lam, e in energies.items():
        res = momentum_lower_bound(lam, toy_cfg.egrid, toy_cfg.potential, e0,
                                   cache=toy_cache)
        assert res.route == "exact"
        assert res.certified
        assert res.n_nodes == len(toy_cfg.egrid.points)
        assert res.max_residual < 1e-7
        assert res.value <= e + 1e-12


def test_momentum_bound_zero_coupling_matches_schrodinger(free_cache):
    # with the field decoupled and lam * q_max small enough that the
    # zero-excitation sector carries every fiber ground, the bound
    # collapses to the bare-mass comparison operator
    e0 = free_cache.pair(0.0)["energy"]
    res = momentum_lower_bound(0.15, EGRID, WELL, e0, cache=free_cache)
    h = assemble_schrodinger(WELL, EGRID, 0.5)
    ground = float(np.linalg.eigvalsh(h)[0])
    assert res.value <= ground + 1e-12
    assert res.value == pytest.approx(ground, abs=1e-6)


def test_momentum_bound_curve_route_matches_exact_route(free_cache):
    template = free_cache.template
    P_list = np.arange(-0.7, 0.7001, 0.1)
    curve = scan_dispersion(template, P_list, cache=free_cache)
    # lam * q_max = 1.2 exceeds the scan window, exercising the ceiling
    res = momentum_lower_bound(0.2, EGRID, WELL, curve.e0, curve=curve,
                               ceiling=lambda P: np.asarray(P)**2)
    assert res.route == "curve"
    assert not res.certified
    assert math.isnan(res.max_residual)
    ref = momentum_lower_bound(0.2, EGRID, WELL, curve.e0, cache=free_cache)
    assert res.value == pytest.approx(ref.value, abs=1e-6)


def test_momentum_bound_curve_route_needs_ceiling(free_cache):
    template = free_cache.template
    curve = scan_dispersion(template, np.arange(-0.3, 0.3001, 0.1),
                            cache=free_cache)
    with pytest.raises(ConfigError, match="ceiling"):
        momentum_lower_bound(0.2, EGRID, WELL, curve.e0, curve=curve)


# ---------------------------------------------------------------------------
# sandwich assembly
# ---------------------------------------------------------------------------

def test_sandwich_row_margins_hand_example():
    row = SandwichRow(lam=0.3, l2=-1.2, l1=-1.0, e=-0.9, u_star=-0.85)
    m = row.margins(1e-8)
    assert m[0] == pytest.approx(0.2 + 1e-8, rel=1e-12)
    assert m[1] == pytest.approx(0.1, rel=1e-12)
    assert m[2] == pytest.approx(0.05 + 1e-8, rel=1e-12)


def test_sandwich_report_passes_ordered_rows():
    rows = [
        SandwichRow(lam=0.4, l2=-1.3, l1=-1.1, e=-1.0, u_star=-0.9),
        SandwichRow(lam=0.2, l2=-1.2, l1=-1.05, e=-1.01, u_star=-0.95),
    ]
    rep = sandwich_report(rows, ordering_tol=1e-8)
    assert rep.passed
    # worst slack: e - L1 = 0.04 on the lam = 0.2 row
    assert rep.margin_min == pytest.approx(0.04, rel=1e-12)
    assert rep.worst_lam == 0.2
    assert rep.worst_pair == "e-L1"
    assert [r.lam for r in rep.rows] == [0.4, 0.2]


def test_sandwich_report_flags_upper_bound_violation():
    rows = [
        SandwichRow(lam=0.4, l2=-1.3, l1=-1.1, e=-1.0, u_star=-0.97),
        SandwichRow(lam=0.2, l2=-1.2, l1=-1.05, e=-0.9, u_star=-0.95),
    ]
    rep = sandwich_report(rows, ordering_tol=1e-8)
    assert not rep.passed
    assert rep.worst_pair == "U*-e"
    assert rep.worst_lam == 0.2
    assert rep.margin_min == pytest.approx(-0.05 + 1e-8, rel=1e-9)


def test_sandwich_report_tolerance_absorbs_roundoff():
    row = SandwichRow(lam=0.1, l2=-1.0 + 1e-10, l1=-1.0, e=-0.9, u_star=-0.9)
    assert sandwich_report([row], ordering_tol=1e-8).passed
    assert not sandwich_report([row], ordering_tol=0.0).passed


def test_sandwich_report_sorts_rows_by_decreasing_lam():
    rows = [SandwichRow(lam=lam, l2=-2.0, l1=-1.5, e=-1.0, u_star=-0.5)
            for lam in (0.1, 0.4, 0.2)]
    rep = sandwich_report(rows)
    assert [r.lam for r in rep.rows] == [0.4, 0.2, 0.1]


def test_sandwich_report_rejects_empty():
    with pytest.raises(ConfigError):
        sandwich_report([])


def test_sandwich_table_format():
    rows = [SandwichRow(lam=0.25, l2=-1.0, l1=-0.5, e=-0.25, u_star=0.0)]
    table = sandwich_report(rows).table()
    lines = table.split("\n")
    assert lines[0] == ("lam        L2              L1              "
                        "e               U*")
    assert lines[1].split() == ["0.25", "-1", "-0.5", "-0.25", "0"]


_finite = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False,
                    allow_infinity=False)


@settings(max_examples=120, deadline=None)
@given(st.lists(st.tuples(st.floats(min_value=0.01, max_value=1.0),
                          _finite, _finite, _finite, _finite),
                min_size=1, max_size=6))
def test_sandwich_report_verdict_matches_margins(raw):
    rows = [SandwichRow(lam=a, l2=b, l1=c, e=d, u_star=f)
            for a, b, c, d, f in raw]
    rep = sandwich_report(rows, ordering_tol=1e-8)
    margins = [m for r in rows for m in r.margins(1e-8)]
    assert rep.margin_min == min(margins)
    assert rep.passed == (min(margins) >= 0.0)
