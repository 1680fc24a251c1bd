"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

The lines are printed by each test and collected into an "acceptance
criteria" section at the end of the pytest terminal report.
"""

import numpy as np
import pytest

from helesim.diagnostics import (
    ConvexTestFn,
    bounds_report,
    convexity_check,
    convexity_scale,
    energy_identity_residual,
    max_principle_report,
    modulus_check,
    monotonicity_report,
    slope_threshold,
)
from helesim.dno import DnoExpansion, DnoOperator, dno_apply, dno_flat, shape_derivative
from helesim.evolution import SolverConfig, compare_pair, load_checkpoint, run, save_checkpoint
from helesim.field import Field, Grid, integrate, l2_norm
from helesim.oracle import StripOracle, dno_oracle
from helesim.traces import compute_traces, identity_residuals

from conftest import cosine, smooth_random, with_slope

M12 = DnoExpansion(max_order=12)


def rel(a, b):
    return l2_norm(a - b) / l2_norm(b)


def test_criterion_01_dno_correctness(grid256, criterion):
    x = grid256.coordinates[0]
    eig = 0.0
    for k in range(1, 128):
        out = dno_flat(Field(grid256, np.cos(k * x) + np.sin(k * x)))
        eig = max(eig, np.abs(out.values - k * (np.cos(k * x) + np.sin(k * x))).max() / k)
    errs = []
    for n in (64, 128, 256):
        g = Grid.uniform(1, n)
        h = cosine(g, 0.2)
        errs.append(rel(dno_apply(h, h, M12), dno_oracle(h, h, StripOracle(8.0, 2 * n))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = eig <= 1e-10 and errs[-1] <= 5e-4 and np.all(orders >= 2.0)
    criterion(
        1, ok,
        f"flat eigenvalue rel err {eig:.2e} (<=1e-10); oracle rel L2 err {errs[-1]:.2e} at N=256 (<=5e-4); "
        f"observed orders {', '.join(f'{o:.3f}' for o in orders)} (>=2)",
    )
    assert ok


def test_criterion_02_dno_structure(grid256, criterion):
    rng = np.random.default_rng(202)
    defect = mean = 0.0
    form = np.inf
    for _ in range(100):
        h = with_slope(grid256, smooth_random(grid256, rng, 1.0), rng.uniform(0.05, 0.5))
        phi, psi = smooth_random(grid256, rng, 1.0), smooth_random(grid256, rng, 1.0)
        phi, psi = phi * (1 / l2_norm(phi)), psi * (1 / l2_norm(psi))
        op = DnoOperator(h, M12)
        Gphi, Gpsi = op(phi), op(psi)
        defect = max(defect, abs(integrate(phi * Gpsi) - integrate(psi * Gphi)))
        form = min(form, integrate(psi * Gpsi))
        mean = max(mean, abs(integrate(Gpsi)))
    ok = defect <= 1e-8 and form >= -1e-10 and mean <= 1e-10
    criterion(
        2, ok,
        f"100 pairs, unit-L2 data: symmetry defect {defect:.2e} (<=1e-8), min quadratic form {form:.2e} "
        f"(>=-1e-10), max |mean| {mean:.2e} (<=1e-10)",
    )
    assert ok


def test_criterion_03_shape_derivative(grid256, criterion):
    rng = np.random.default_rng(303)
    worst = np.inf
    for _ in range(3):
        h = with_slope(grid256, smooth_random(grid256, rng, 1.0), 0.3)
        psi, zeta = smooth_random(grid256, rng, 1.0), smooth_random(grid256, rng, 1.0)
        d = shape_derivative(h, psi, zeta, M12)
        base = dno_apply(h, psi, M12)
        errs = [l2_norm((dno_apply(h + zeta * e, psi, M12) - base) / e - d) for e in (1e-2, 1e-3, 1e-4)]
        worst = min(worst, np.log10(np.array(errs[:-1]) / np.array(errs[1:])).min())
    ok = worst >= 0.9
    criterion(3, ok, f"finite-difference defect order {worst:.3f} at eps in 1e-2..1e-4 (>=0.9)")
    assert ok


STATES = {
    "0.2cos x": lambda x: 0.2 * np.cos(x),
    "0.1cos x + 0.05sin 2x": lambda x: 0.1 * np.cos(x) + 0.05 * np.sin(2 * x),
    "0.15sin x - 0.06cos 3x": lambda x: 0.15 * np.sin(x) - 0.06 * np.cos(3 * x),
}


def test_criterion_04_identity_suite(criterion):
    parts, ok = [], True
    for name, fn in STATES.items():
        worst = []
        for n, m in ((64, 8), (128, 10), (256, 12)):
            g = Grid.uniform(1, n)
            h = Field(g, fn(g.coordinates[0]))
            cfg = DnoExpansion(max_order=m)
            rep = identity_residuals(h, compute_traces(h, cfg), cfg)
            worst.append(rep.max_l2() / l2_norm(h))
        decreasing = worst[0] > worst[1] > worst[2]
        ok &= worst[-1] <= 1e-6 and decreasing
        parts.append(f"{name}: {worst[-1]:.1e}{'' if decreasing else ' (not decreasing)'}")
    criterion(4, ok, "max relative residual R1-R6 at N=256, M=12 (<=1e-6, decreasing): " + "; ".join(parts))
    assert ok


def test_criterion_05_sign_conditions(standard_run, criterion):
    recs = standard_run.records
    min_a = min(r.inf_a for r in recs)
    gam = max(r.gamma_max / r.gamma_sup for r in recs)
    ok = min_a > 0 and gam <= 1e-6
    criterion(5, ok, f"{len(recs)} records: min a {min_a:.4f} (>0); max gamma / |gamma|_inf {gam:.2e} (<=1e-6)")
    assert ok


def test_criterion_06_convexity(grid256, criterion):
    rng = np.random.default_rng(606)
    phis = (ConvexTestFn.power(2), ConvexTestFn.power(4), ConvexTestFn.exp())
    worst = {p.name: np.inf for p in phis}
    for _ in range(100):
        h = with_slope(grid256, smooth_random(grid256, rng, 1.0), rng.uniform(0.05, 0.5))
        op = DnoOperator(h, M12)
        for phi in phis:
            f = smooth_random(grid256, rng, 1.0)
            m = convexity_check(h, f, phi, op=op) / convexity_scale(h, f, phi, op=op)
            worst[phi.name] = min(worst[phi.name], m)
    ok = min(worst.values()) >= -1e-6
    criterion(
        6, ok,
        "100 trials, min of [Phi'(f)Gf - G Phi(f)] / scale (>=-1e-6): "
        + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()),
    )
    assert ok


def _mode_amplitude(h, k):
    return 2 * np.abs(h.spectrum[k])


def test_criterion_07_linearized_dynamics(grid256, criterion):
    x = grid256.coordinates[0]
    eps, t_end = 1e-3, 0.5
    lin = DnoExpansion(max_order=4)  # exact to ~eps^5 at this amplitude
    rate_err = 0.0
    for k in (1, 2, 3):
        h0 = Field(grid256, eps * np.cos(k * x))
        rates = []
        for dt in (1e-3 / k, 5e-4 / k):
            cfg = SolverConfig(dt=dt, t_end=t_end, record_every=10**6, dno=lin)
            hT = run(h0, cfg, recorder=None).states[-1].h
            rates.append(-np.log(_mode_amplitude(hT, k) / _mode_amplitude(h0, k)) / t_end)
        refined = 2 * rates[1] - rates[0]
        rate_err = max(rate_err, abs(refined - k) / k)
    h0 = cosine(grid256)
    imex = run(h0, SolverConfig(dt=2.5e-4, t_end=0.5, record_every=10**6), recorder=None).states[-1].h
    rk4 = run(h0, SolverConfig(scheme="rk4", dt=1e-3, t_end=0.5, record_every=10**6), recorder=None).states[-1].h
    gap = l2_norm(imex - rk4)
    ok = rate_err <= 1e-3 and gap <= 1e-5
    criterion(
        7, ok,
        f"decay rate rel err {rate_err:.2e} for k=1,2,3 after dt-refinement (<=1e-3); "
        f"imex(dt=2.5e-4) vs rk4 L2 gap at t=0.5 {gap:.2e} (<=1e-5)",
    )
    assert ok


def test_criterion_08_lyapunov_suite(standard_run, criterion):
    tol = 1e-8
    mono = monotonicity_report(standard_run, tol)
    maxp = max_principle_report(standard_run, tol=tol)
    _, second = energy_identity_residual(standard_run)
    checks = dict(mono)
    checks["sup|dx h|"] = maxp["|dx1|"]
    checks["sup dt h"] = maxp["dt"]
    bound_ok = slope_threshold(1) == 1.0 and mono["slope_fun_1"].active
    failed = [k for k, v in checks.items() if not v.passed]
    ok = not failed and bound_ok and second >= -1e-8
    worst = max(v.margin for v in checks.values())
    criterion(
        8, ok,
        f"{len(checks)} monotone quantities, largest increase {worst:.2e} (<=1e-8){', failed ' + str(failed) if failed else ''}; "
        f"int V^2/a gated on slope <= {slope_threshold(1):g} (active={mono['slope_fun_1'].active}); "
        f"min second difference of int h^2 {second:.2e} (>=-1e-8)",
    )
    assert ok


def test_criterion_09_energy_identity(standard_run, grid256, criterion):
    coarse, _ = energy_identity_residual(standard_run)
    fine_run = run(cosine(grid256), SolverConfig(dt=5e-4, record_every=20))
    fine, _ = energy_identity_residual(fine_run)
    ratio = fine / coarse
    ok = coarse <= 5e-4 and ratio <= 0.55
    criterion(9, ok, f"residual {coarse:.2e} at dt=1e-3 (<=5e-4), {fine:.2e} at dt=5e-4, ratio {ratio:.2f} (<=0.55)")
    assert ok


def test_criterion_10_comparison(grid256, criterion):
    x = grid256.coordinates[0]
    cfg = SolverConfig(dt=1e-3, t_end=1.0)
    base = Field(grid256, 0.1 * np.sin(x) + 0.03 * np.cos(2 * x))
    pairs = {
        "offset pair": (Field(grid256, 0.1 * np.cos(x) - 0.05), Field(grid256, 0.1 * np.cos(x) + 0.05 * np.cos(2 * x) + 0.1)),
        "touching pair": (cosine(grid256), cosine(grid256) + Field(grid256, 0.05 * (1 - np.cos(x)))),
        "touching three-mode": (base, base + Field(grid256, 0.02 * (1 + np.sin(3 * x)))),
    }
    worst = np.inf
    for h1, h2 in pairs.values():
        worst = min(worst, compare_pair(h1, h2, cfg, record_every=10).min_difference)
    same = compare_pair(base, base, SolverConfig(dt=1e-3, t_end=0.2), record_every=10)
    spread = max(abs(m) for m in same.min_per_time)
    ok = worst >= -1e-6 and spread <= 1e-14
    criterion(10, ok, f"3 ordered pairs on [0,1], min(h2 - h1) {worst:.2e} (>=-1e-6); equal data gap {spread:.1e}")
    assert ok


def test_criterion_11_modulus(standard_run, criterion):
    h0 = standard_run.states[0].h
    worst = max(modulus_check(h0, s.h) for s in standard_run.states)
    ok = worst <= 1e-6
    criterion(11, ok, f"{len(standard_run.states)} recorded states, max modulus violation {worst:.2e} (<=1e-6)")
    assert ok


def test_criterion_12_bounds(standard_run, criterion):
    rep = bounds_report(standard_run, 1e-6)
    l2, sup = rep["grad_l2"], rep["grad_sup"]
    ok = l2.passed and sup.passed and sup.active
    criterion(
        12, ok,
        f"int|grad h|^2 - |T|/a0 {l2.margin:.3f} (<=1e-6); sup|grad h| - min(1/a0, sqrt(2/a0)) {sup.margin:.3f} "
        f"(<=1e-6, active={sup.active})",
    )
    assert ok


def test_criterion_13_determinism(grid256, tmp_path, criterion):
    cfg = SolverConfig(dt=1e-3, t_end=0.1)
    a = run(cosine(grid256), cfg)
    b = run(cosine(grid256), cfg)
    same_states = all(x.h.values.tobytes() == y.h.values.tobytes() for x, y in zip(a.states, b.states))
    same_records = [r.row() for r in a.records] == [r.row() for r in b.records]
    save_checkpoint(tmp_path / "a.hshw", a.last_state)
    back = load_checkpoint(tmp_path / "a.hshw")
    exact = back.t == a.last_state.t and back.h.values.tobytes() == a.last_state.h.values.tobytes()
    resumed = run(back, SolverConfig(dt=1e-3, t_end=0.2), recorder=None).states[-1].h
    whole = run(cosine(grid256), SolverConfig(dt=1e-3, t_end=0.2), recorder=None).states[-1].h
    drift = np.abs(resumed.values - whole.values).max()
    ok = same_states and same_records and exact and drift <= 1e-12 * 100
    criterion(
        13, ok,
        f"re-run bit-identical states={same_states} records={same_records}; checkpoint bit-exact={exact}; "
        f"resumed vs unbroken max diff {drift:.1e} (<=1e-12 per step)",
    )
    assert ok
