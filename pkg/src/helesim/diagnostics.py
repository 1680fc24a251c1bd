"""Lyapunov functionals, maximum principles and inequality checks.

Everything here evaluates quadratures on grid snapshots. Time derivatives of
``h`` are the exact substitution ``h_t = -G(h)h``; only
:func:`energy_identity_residual` differences recorded values in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .dno import DnoExpansion, DnoOperator
from .errors import DegenerateStateError, GridMismatchError, PreconditionError
from .field import Field, gradient, integrate, product
from .traces import ResidualReport, Traces, compute_traces, identity_residuals

if TYPE_CHECKING:
    from .evolution import SurfaceState, Trajectory

__all__ = [
    "FunctionalRecord",
    "ConvexTestFn",
    "Modulus",
    "Verdict",
    "functionals",
    "record_state",
    "slope_threshold",
    "max_principle_report",
    "convexity_check",
    "modulus_check",
    "energy_identity_residual",
    "monotonicity_report",
    "bounds_report",
    "slope_dissipation_report",
]


@dataclass
class FunctionalRecord:
    """One row of monitored quantities at time ``t``.

    CSV column order (see :meth:`columns`): ``t``, ``l2p_<p>`` for each p,
    ``dirichlet``, ``inv_a_lp_<p>``, ``slope_fun_<p>`` (one dimension only),
    ``sup_abs_h``, ``sup_grad_<i>``, ``sup_abs_grad_<i>``, ``sup_dt``,
    ``inf_a``, ``gamma_max``, the residual columns ``R*_l2``/``R*_sup``,
    ``energy_dissipation``, then the auxiliary ``grad_l2sq``,
    ``sup_grad_norm``, ``sup_abs_Gh``, ``slope_diss_<p>`` and ``gamma_sup``.
    """

    t: float
    l2p: dict[int, float]
    dirichlet: float
    inv_a_lp: dict[int, float]
    slope_fun: dict[int, float]
    sup_abs_h: float
    sup_grad: list[float]
    sup_abs_grad: list[float]
    sup_dt: float
    inf_a: float
    gamma_max: float
    residuals: ResidualReport | None
    energy_dissipation: float
    grad_l2sq: float = 0.0
    sup_grad_norm: float = 0.0
    sup_abs_Gh: float = 0.0
    slope_diss: dict[int, float] = field(default_factory=dict)
    gamma_sup: float = 0.0

    def row(self) -> dict[str, float]:
        out: dict[str, float] = {"t": self.t}
        out.update({f"l2p_{p}": v for p, v in self.l2p.items()})
        out["dirichlet"] = self.dirichlet
        out.update({f"inv_a_lp_{p}": v for p, v in self.inv_a_lp.items()})
        out.update({f"slope_fun_{p}": v for p, v in self.slope_fun.items()})
        out["sup_abs_h"] = self.sup_abs_h
        out.update({f"sup_grad_{i + 1}": v for i, v in enumerate(self.sup_grad)})
        out.update({f"sup_abs_grad_{i + 1}": v for i, v in enumerate(self.sup_abs_grad)})
        out["sup_dt"] = self.sup_dt
        out["inf_a"] = self.inf_a
        out["gamma_max"] = self.gamma_max
        if self.residuals is not None:
            out.update(self.residuals.as_row())
        out["energy_dissipation"] = self.energy_dissipation
        out["grad_l2sq"] = self.grad_l2sq
        out["sup_grad_norm"] = self.sup_grad_norm
        out["sup_abs_Gh"] = self.sup_abs_Gh
        out.update({f"slope_diss_{p}": v for p, v in self.slope_diss.items()})
        out["gamma_sup"] = self.gamma_sup
        return out

    def columns(self) -> list[str]:
        return list(self.row())


def _check_p_list(p_list: Sequence[int]) -> list[int]:
    ps = [int(p) for p in p_list]
    for p in ps:
        if p != 1 and (p < 2 or p % 2):
            raise ValueError(f"p = {p} is not in {{1}} U 2N")
    return ps


def functionals(
    h: Field,
    tr: Traces,
    p_list: Sequence[int] = (1, 2, 4),
    t: float = 0.0,
    residuals: ResidualReport | None = None,
    op: DnoOperator | None = None,
    cfg: DnoExpansion | None = None,
) -> FunctionalRecord:
    """Evaluate every monitored functional of one state."""
    ps = _check_p_list(p_list)
    grid = h.grid
    a = tr.a
    if a.min() <= 0.0:
        raise DegenerateStateError(f"min a = {a.min():.3e} <= 0")
    G = op if op is not None else DnoOperator(h, cfg)
    gh = gradient(h)
    grad2 = Field(grid, (gh.values**2).sum(axis=0))
    h_t = tr.h_t
    Gh = -h_t
    l2p = {p: integrate(h ** (2 * p)) for p in ps}
    inv = {p: integrate(a ** (-float(p))) for p in ps}
    slope, sdiss = {}, {}
    if grid.dim == 1:
        V = tr.V.component(0)
        for p in ps:
            slope[p] = integrate(V ** (2 * p) / a)
            Vp = V**p
            sdiss[p] = integrate(Vp * G(Vp))
    return FunctionalRecord(
        t=t,
        l2p=l2p,
        dirichlet=integrate(h * Gh),
        inv_a_lp=inv,
        slope_fun=slope,
        sup_abs_h=h.sup_abs(),
        sup_grad=[float(gh.values[i].max()) for i in range(grid.dim)],
        sup_abs_grad=[float(np.abs(gh.values[i]).max()) for i in range(grid.dim)],
        sup_dt=h_t.max(),
        inf_a=a.min(),
        gamma_max=tr.gamma.max(),
        residuals=residuals,
        energy_dissipation=integrate(a * (h_t * h_t + grad2)),
        grad_l2sq=integrate(grad2),
        sup_grad_norm=float(np.sqrt(grad2.values.max())),
        sup_abs_Gh=Gh.sup_abs(),
        slope_diss=sdiss,
        gamma_sup=tr.gamma.sup_abs(),
    )


def record_state(state: "SurfaceState", cfg: DnoExpansion | None, p_list=(1, 2, 4)) -> FunctionalRecord:
    """Traces, residuals and functionals of a state, sharing one operator."""
    op = DnoOperator(state.h, cfg)
    tr = compute_traces(state.h, op=op)
    res = identity_residuals(state.h, tr, op=op)
    return functionals(state.h, tr, p_list, t=state.t, residuals=res, op=op)


def slope_threshold(p: int) -> float:
    """Largest initial slope for which the ``int V^{2p}/a`` decay is asserted."""
    return math.sqrt(p / (3 * p - 2))


# -- verdicts ----------------------------------------------------------------------


@dataclass
class Verdict:
    name: str
    margin: float
    tol: float
    active: bool = True
    note: str = ""

    @property
    def passed(self) -> bool:
        return (not self.active) or self.margin <= self.tol

    def line(self) -> str:
        status = "SKIP" if not self.active else ("PASS" if self.passed else "FAIL")
        extra = f" ({self.note})" if self.note else ""
        return f"{status} {self.name}: margin={self.margin:.3e} tol={self.tol:.1e}{extra}"


def _records(traj: "Trajectory") -> list[FunctionalRecord]:
    recs = [r for r in traj.records if r is not None]
    if len(recs) != len(traj.records):
        raise PreconditionError("trajectory was run without functional records")
    return recs


def _max_increase(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(np.max(v[1:] - v[:-1]))


def max_principle_report(
    traj: "Trajectory", M: dict[str, float] | None = None, tol: float = 1e-6
) -> dict[str, Verdict]:
    """Growth of ``sup D h`` over a trajectory for ``D`` in ``{d_t, d_i}`` and ``|h|``.

    Margin for each derivative is ``max_t sup_x Dh(t) - max(sup_x Dh(0), M[D])``.
    ``sup |d_i h|`` is reported as well (the reflection ``x -> -x`` turns the
    lower bound into an upper one).
    """
    if not traj.states:
        raise PreconditionError("empty trajectory")
    M = M or {}
    recs = _records(traj)
    out = {}

    def verdict(name, series):
        ref = series[0]
        if name in M:
            ref = max(ref, M[name])
        out[name] = Verdict(f"sup {name}", float(max(series) - ref), tol)

    verdict("dt", [r.sup_dt for r in recs])
    verdict("|h|", [r.sup_abs_h for r in recs])
    n = len(recs[0].sup_grad)
    for i in range(n):
        verdict(f"dx{i + 1}", [r.sup_grad[i] for r in recs])
        verdict(f"|dx{i + 1}|", [r.sup_abs_grad[i] for r in recs])
    return out


def monotonicity_report(traj: "Trajectory", tol: float = 1e-8, allowance: float = 0.0) -> dict[str, Verdict]:
    """Largest increase between consecutive records of every decaying functional.

    ``allowance`` adds a discretization slack (typically ``C dt``).
    """
    recs = _records(traj)
    out = {}
    t0 = recs[0]
    bound = tol + allowance
    for p in t0.l2p:
        out[f"l2p_{p}"] = Verdict(f"int h^{2 * p} nonincreasing", _max_increase([r.l2p[p] for r in recs]), bound)
    out["dirichlet"] = Verdict("int h G(h)h nonincreasing", _max_increase([r.dirichlet for r in recs]), bound)
    for p in t0.inv_a_lp:
        out[f"inv_a_lp_{p}"] = Verdict(f"int a^-{p} nonincreasing", _max_increase([r.inv_a_lp[p] for r in recs]), bound)
    out["inf_a"] = Verdict(
        "inf a nondecreasing", float(t0.inf_a - min(r.inf_a for r in recs)), bound
    )
    s0 = t0.sup_abs_grad
    for p in t0.slope_fun:
        gate = max(s0) <= slope_threshold(p) - 0.01
        note = "" if gate else f"initial slope {max(s0):.3g} above {slope_threshold(p):.3g}"
        v = Verdict(f"int V^{2 * p}/a nonincreasing", _max_increase([r.slope_fun[p] for r in recs]), bound, gate, note)
        if gate and max(max(r.sup_abs_grad) for r in recs) > slope_threshold(p):
            v.note = "slope bound exceeded after t = 0 (anomaly)"
        out[f"slope_fun_{p}"] = v
    return out


def slope_dissipation_report(traj: "Trajectory", tol: float = 1e-8, allowance: float = 0.0) -> dict[str, Verdict]:
    """The one-dimensional inequality ``d/dt int V^{2p}/a + 2 int V^p G(h)V^p <= 0``.

    Uses forward differences between records and the trapezoidal mean of the
    dissipation term. Also checks ``int V^p G(h) V^p >= -1e-10``.
    """
    recs = _records(traj)
    out = {}
    s0 = max(recs[0].sup_abs_grad)
    for p in recs[0].slope_diss:
        gate = p % 2 == 0 and s0 <= slope_threshold(p) - 0.01
        worst = -np.inf
        for r0, r1 in zip(recs[:-1], recs[1:]):
            dt = r1.t - r0.t
            d = (r1.slope_fun[p] - r0.slope_fun[p]) + dt * (r0.slope_diss[p] + r1.slope_diss[p])
            worst = max(worst, d)
        out[f"slope_diss_{p}"] = Verdict(
            f"d/dt int V^{2 * p}/a + 2 int V^{p} G V^{p} <= 0", float(worst) if np.isfinite(worst) else 0.0,
            tol + allowance, gate,
            "" if gate else ("stated for even p only" if p % 2 else "initial slope above threshold"),
        )
        out[f"slope_diss_pos_{p}"] = Verdict(
            f"int V^{p} G V^{p} >= 0", float(-min(r.slope_diss[p] for r in recs)), 1e-10
        )
    return out


def bounds_report(traj: "Trajectory", tol: float = 1e-6) -> dict[str, Verdict]:
    """The two a-priori bounds driven by ``a0 = inf a(0)``.

    ``int |grad h|^2 <= |T^n|/a0`` always; ``sup |grad h| <= min(1/a0,
    sqrt(2/a0))`` when ``max |G(h0)h0| <= 1``.
    """
    recs = _records(traj)
    a0 = recs[0].inf_a
    vol = traj.states[0].h.grid.volume
    out = {
        "grad_l2": Verdict(
            "int |grad h|^2 <= |T|/a0", float(max(r.grad_l2sq for r in recs) - vol / a0), tol
        )
    }
    active = recs[0].sup_abs_Gh <= 1.0
    cap = min(1.0 / a0, math.sqrt(2.0 / a0))
    out["grad_sup"] = Verdict(
        "sup |grad h| <= min(1/a0, sqrt(2/a0))",
        float(max(r.sup_grad_norm for r in recs) - cap), tol, active,
        "" if active else "max |G(h0)h0| > 1",
    )
    return out


# -- convexity ---------------------------------------------------------------------


@dataclass(frozen=True)
class ConvexTestFn:
    """A convex ``Phi`` with its first two derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    first: Callable[[np.ndarray], np.ndarray]
    second: Callable[[np.ndarray], np.ndarray]
    name: str = "phi"

    @classmethod
    def power(cls, k: int) -> "ConvexTestFn":
        if k < 2 or k % 2:
            raise ValueError("use an even power >= 2")
        return cls(lambda r: r**k, lambda r: k * r ** (k - 1), lambda r: k * (k - 1) * r ** (k - 2), f"r^{k}")

    @classmethod
    def exp(cls) -> "ConvexTestFn":
        return cls(np.exp, np.exp, np.exp, "exp")

    @classmethod
    def affine(cls, slope: float, offset: float = 0.0) -> "ConvexTestFn":
        return cls(
            lambda r: slope * r + offset,
            lambda r: np.full_like(r, slope),
            lambda r: np.zeros_like(r),
            "affine",
        )

    def is_convex_on(self, values: np.ndarray) -> bool:
        return bool(np.all(self.second(np.asarray(values)) >= 0.0))


def convexity_check(
    h: Field, f: Field, phi: ConvexTestFn, cfg: DnoExpansion | None = None, op: DnoOperator | None = None
) -> float:
    """``min_x [Phi'(f) G(h)f - G(h)Phi(f)]``; nonnegative for convex ``Phi``.

    Pair with :func:`convexity_scale` to express the tolerance.
    """
    if h.grid != f.grid:
        raise GridMismatchError("h and f must share a grid")
    G = op if op is not None else DnoOperator(h, cfg)
    lhs = phi.first(f.values) * G(f).values
    rhs = G(Field(f.grid, phi.value(f.values))).values
    return float((lhs - rhs).min())


def convexity_scale(h: Field, f: Field, phi: ConvexTestFn, cfg: DnoExpansion | None = None,
                    op: DnoOperator | None = None) -> float:
    """Magnitude of the two sides of the convexity inequality, for relative tolerances."""
    G = op if op is not None else DnoOperator(h, cfg)
    a = np.abs(phi.first(f.values) * G(f).values).max()
    b = np.abs(G(Field(f.grid, phi.value(f.values))).values).max()
    return float(max(a, b, 1e-300))


# -- modulus of continuity ---------------------------------------------------------

_MODULUS_GUARD = {1: 512, 2: 64}


@dataclass(frozen=True)
class Modulus:
    """Empirical tightest modulus of a grid function.

    ``distances`` are the sorted distinct torus distances between grid points
    and ``bounds[i] = max{|f(x1)-f(x2)| : d(x1,x2) <= distances[i]}``.
    """

    distances: np.ndarray
    bounds: np.ndarray

    def __call__(self, d):
        i = np.searchsorted(self.distances, np.asarray(d) + 1e-12, side="right") - 1
        return np.where(i < 0, 0.0, self.bounds[np.clip(i, 0, None)])


def _shift_table(f: Field):
    """For each lattice shift: torus distance and ``max |f(x+s) - f(x)|``."""
    grid = f.grid
    n = grid.dim
    if any(N > _MODULUS_GUARD[n] for N in grid.resolution):
        raise PreconditionError(
            f"pair enumeration limited to {_MODULUS_GUARD[n]} points per axis in dimension {n}"
        )
    shifts = np.array(np.meshgrid(*[np.arange(N) for N in grid.resolution], indexing="ij")).reshape(n, -1).T
    dist = np.empty(len(shifts))
    osc = np.empty(len(shifts))
    for k, s in enumerate(shifts):
        d2 = 0.0
        for i in range(n):
            m = min(s[i], grid.resolution[i] - s[i])
            d2 += (m * grid.spacing[i]) ** 2
        dist[k] = math.sqrt(d2)
        osc[k] = np.abs(np.roll(f.values, tuple(-int(x) for x in s), axis=tuple(range(n))) - f.values).max()
    return dist, osc


def empirical_modulus(f: Field) -> Modulus:
    dist, osc = _shift_table(f)
    order = np.argsort(dist, kind="stable")
    d, o = dist[order], osc[order]
    uniq, start = np.unique(d, return_index=True)
    per = np.maximum.reduceat(o, start)
    return Modulus(uniq, np.maximum.accumulate(per))


def modulus_check(h_ref: Field, h_test: Field) -> float:
    """``max over pairs of |h_test(x1)-h_test(x2)| - omega(d(x1,x2))``, omega from ``h_ref``."""
    if h_ref.grid != h_test.grid:
        raise GridMismatchError("fields must share a grid")
    omega = empirical_modulus(h_ref)
    dist, osc = _shift_table(h_test)
    return float(np.max(osc - omega(dist)))


# -- energy identity ---------------------------------------------------------------


def energy_identity_residual(traj: "Trajectory") -> tuple[float, float]:
    """Centered-difference check of ``d/dt int hG(h)h = -int a(h_t^2 + |grad h|^2)``.

    Returns ``(max residual, min centered second difference of int h^2)``; the
    second difference is not divided by the record spacing squared.
    """
    recs = _records(traj)
    if len(recs) < 3:
        raise PreconditionError("need at least three records")
    t = np.array([r.t for r in recs])
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise PreconditionError("records are not uniformly spaced in time")
    tau = steps[0]
    D = np.array([r.dirichlet for r in recs])
    E = np.array([r.energy_dissipation for r in recs])
    m2 = np.array([integrate(s.h * s.h) for s in traj.states])
    res = np.abs((D[2:] - D[:-2]) / (2 * tau) + E[1:-1])
    second = m2[2:] - 2 * m2[1:-1] + m2[:-2]
    return float(res.max()), float(second.min())
