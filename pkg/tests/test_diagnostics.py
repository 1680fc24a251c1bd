import dataclasses

import numpy as np
import pytest

from helesim.diagnostics import (
    ConvexTestFn,
    Verdict,
    bounds_report,
    convexity_check,
    convexity_scale,
    empirical_modulus,
    energy_identity_residual,
    functionals,
    max_principle_report,
    modulus_check,
    monotonicity_report,
    record_state,
    slope_dissipation_report,
    slope_threshold,
)
from helesim.dno import DnoExpansion, DnoOperator
from helesim.errors import DegenerateStateError, GridMismatchError, PreconditionError
from helesim.evolution import SolverConfig, SurfaceState, run
from helesim.field import Field, Grid, translate
from helesim.traces import compute_traces

from conftest import cosine, smooth_random, with_slope


@pytest.fixture(scope="module")
def zero_run(grid256):
    return run(Field.constant(grid256, 0.0), SolverConfig(t_end=0.05, record_every=5))


def test_functionals_constant_state(grid256):
    c = 0.3
    h = Field.constant(grid256, c)
    rec = functionals(h, compute_traces(h), (1, 2, 4))
    vol = 2 * np.pi
    for p in (1, 2, 4):
        assert rec.l2p[p] == pytest.approx(c ** (2 * p) * vol, rel=1e-14)
        assert rec.inv_a_lp[p] == pytest.approx(vol, rel=1e-14)
    assert abs(rec.dirichlet) < 1e-14
    assert rec.sup_dt == 0.0 and max(rec.sup_abs_grad) == 0.0
    assert rec.inf_a == pytest.approx(1.0, abs=1e-14)
    assert rec.energy_dissipation == pytest.approx(0.0, abs=1e-14)


def test_functionals_rejects_bad_p(grid256):
    h = cosine(grid256)
    with pytest.raises(ValueError):
        functionals(h, compute_traces(h), (1, 3))


def test_functionals_degenerate_state(grid256):
    h = cosine(grid256)
    tr = compute_traces(h)
    bad = dataclasses.replace(tr, a=Field.constant(grid256, -1.0))
    with pytest.raises(DegenerateStateError):
        functionals(h, bad)


def test_slope_functional_only_in_one_dimension():
    g = Grid.uniform(2, 16)
    X, Y = g.coordinates
    rec = record_state(SurfaceState(Field(g, 0.05 * np.cos(X) * np.cos(Y))), DnoExpansion())
    assert rec.slope_fun == {} and len(rec.sup_grad) == 2


def test_slope_threshold():
    assert slope_threshold(1) == 1.0
    assert slope_threshold(2) == pytest.approx(np.sqrt(0.5))
    # decreasing towards 1/sqrt(3)
    assert slope_threshold(4) < slope_threshold(2) and slope_threshold(100) > 1 / np.sqrt(3)


def test_csv_column_order(standard_run):
    cols = standard_run.records[0].columns()
    assert cols[:5] == ["t", "l2p_1", "l2p_2", "l2p_4", "dirichlet"]
    assert cols.index("inv_a_lp_4") < cols.index("slope_fun_1") < cols.index("sup_abs_h")
    assert cols.index("sup_abs_h") < cols.index("sup_grad_1") < cols.index("sup_dt") < cols.index("inf_a")
    assert cols.index("gamma_max") < cols.index("R1_l2") < cols.index("energy_dissipation")
    assert all(np.isfinite(v) for v in standard_run.records[0].row().values())


def test_verdict_line():
    assert Verdict("x", 1e-9, 1e-8).line().startswith("PASS x")
    assert Verdict("x", 1e-7, 1e-8).line().startswith("FAIL x")
    v = Verdict("x", 1.0, 0.0, active=False, note="gated")
    assert v.passed and v.line().startswith("SKIP") and "gated" in v.line()


# -- trajectory reports --------------------------------------------------------------


def test_zero_trajectory_reports(zero_run):
    rep = max_principle_report(zero_run)
    assert set(rep) == {"dt", "|h|", "dx1", "|dx1|"}
    assert all(v.passed and v.margin == 0.0 for v in rep.values())
    assert energy_identity_residual(zero_run) == (0.0, 0.0)
    assert all(v.passed for v in monotonicity_report(zero_run).values())


def test_max_principle_threshold(zero_run):
    rep = max_principle_report(zero_run, M={"dt": 0.5})
    assert rep["dt"].margin == -0.5


def test_reports_on_standard_run(standard_run):
    for rep in (
        max_principle_report(standard_run),
        monotonicity_report(standard_run),
        slope_dissipation_report(standard_run),
        bounds_report(standard_run),
    ):
        for v in rep.values():
            assert v.passed, v.line()
    sd = slope_dissipation_report(standard_run)
    assert not sd["slope_diss_1"].active and "even p" in sd["slope_diss_1"].note
    assert sd["slope_diss_2"].active


def test_slope_gate_inactive_for_steep_data(grid256):
    h0 = with_slope(grid256, cosine(grid256), 0.75)
    traj = run(h0, SolverConfig(t_end=0.02))
    rep = monotonicity_report(traj)
    assert rep["slope_fun_1"].active
    assert not rep["slope_fun_2"].active and not rep["slope_fun_4"].active


def test_energy_identity_standard_run(standard_run):
    res, second = energy_identity_residual(standard_run)
    assert res <= 5e-4
    assert second >= -1e-8


def test_energy_identity_preconditions(grid256):
    short = run(cosine(grid256), SolverConfig(t_end=0.01))
    with pytest.raises(PreconditionError):
        energy_identity_residual(short)
    uneven = run(cosine(grid256), SolverConfig(t_end=0.025))
    with pytest.raises(PreconditionError):
        energy_identity_residual(uneven)
    bare = run(cosine(grid256), SolverConfig(t_end=0.05), recorder=None)
    with pytest.raises(PreconditionError):
        energy_identity_residual(bare)


# -- convexity -----------------------------------------------------------------------


def test_convex_test_functions():
    r = np.linspace(-2, 2, 41)
    for phi in (ConvexTestFn.power(2), ConvexTestFn.power(4), ConvexTestFn.exp(), ConvexTestFn.affine(2.0, 1.0)):
        assert phi.is_convex_on(r)
    assert not ConvexTestFn(np.sin, np.cos, lambda x: -np.sin(x)).is_convex_on(r)
    with pytest.raises(ValueError):
        ConvexTestFn.power(3)


def test_convexity_trivial_cases(grid256):
    rng = np.random.default_rng(20)
    h = with_slope(grid256, smooth_random(grid256, rng, 1.0), 0.5)
    f = smooth_random(grid256, rng, 1.0)
    op = DnoOperator(h)
    assert abs(convexity_check(h, f, ConvexTestFn.affine(-1.5, 0.3), op=op)) < 1e-12
    for phi in (ConvexTestFn.power(2), ConvexTestFn.exp()):
        assert abs(convexity_check(h, Field.constant(grid256, 0.7), phi, op=op)) < 1e-12


def test_convexity_random_square(grid256):
    rng = np.random.default_rng(21)
    phi = ConvexTestFn.power(2)
    for _ in range(10):
        h = with_slope(grid256, smooth_random(grid256, rng, 1.0), 0.5)
        f = smooth_random(grid256, rng, 1.0)
        op = DnoOperator(h)
        assert convexity_check(h, f, phi, op=op) >= -1e-6 * convexity_scale(h, f, phi, op=op)


def test_convexity_grid_mismatch(grid256):
    with pytest.raises(GridMismatchError):
        convexity_check(cosine(grid256), cosine(Grid.uniform(1, 64)), ConvexTestFn.power(2))


# -- modulus -------------------------------------------------------------------------


def test_modulus_examples():
    g = Grid.uniform(1, 128)
    h = smooth_random(g, np.random.default_rng(22), 0.3)
    assert modulus_check(h, h) == 0.0
    assert modulus_check(h, translate(h, [g.spacing[0] * 11])) <= 0.0
    omega = empirical_modulus(h)
    assert omega(0.0) == 0.0
    assert np.all(np.diff(omega.bounds) >= 0)
    # a steeper copy is not bounded by the modulus of h
    assert modulus_check(h, h * 2.0) > 0.0


def test_modulus_two_dimensional():
    g = Grid.uniform(2, 16)
    h = smooth_random(g, np.random.default_rng(23), 0.3)
    assert modulus_check(h, translate(h, [g.spacing[0] * 3, g.spacing[1] * 5])) <= 0.0


def test_modulus_guard():
    with pytest.raises(PreconditionError):
        modulus_check(cosine(Grid.uniform(1, 1024)), cosine(Grid.uniform(1, 1024)))
    g = Grid.uniform(2, 128)
    with pytest.raises(PreconditionError):
        empirical_modulus(Field.constant(g, 0.0))
    with pytest.raises(GridMismatchError):
        modulus_check(cosine(Grid.uniform(1, 64)), cosine(Grid.uniform(1, 32)))
