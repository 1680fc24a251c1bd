"""Run configuration: INI-style ``key = value`` documents with strict validation.

Section headers are optional and only group keys for readability; every key
name is global. Unknown keys, duplicate keys and out-of-range values raise
:class:`~helesim.errors.ConfigError`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dno import DnoExpansion
from .errors import ConfigError, PreconditionError
from .evolution import Scheme, SolverConfig, load_checkpoint
from .field import Field, Grid
from .oracle import BottomCondition, StripOracle

__all__ = ["RunConfig", "parse_config", "load_config", "initial_condition", "PRESETS", "KEYS"]

# Named initial states. Each maps a coordinate tuple to samples of h0.
PRESETS = {
    "flat": lambda X, c: 0.0 * X[0],
    "single-mode": None,  # uses k and amplitude
    "multi-mode": None,  # uses seed, modes, amplitude
    "checkpoint": None,  # uses checkpoint
    "standard": lambda X, c: 0.1 * np.cos(X[0]),  # same state as the single-mode defaults
    "cos02": lambda X, c: 0.2 * np.cos(X[0]),
    "two-mode": lambda X, c: 0.1 * np.cos(X[0]) + 0.05 * np.sin(2 * X[0]),
    "pair-low": lambda X, c: 0.1 * np.cos(X[0]) - 0.05,
    "pair-high": lambda X, c: 0.1 * np.cos(X[0]) + 0.05 * np.cos(2 * X[0]) + 0.1,
    "rough-tail": lambda X, c: _rough_tail(X[0]),
}


def _rough_tail(x: np.ndarray) -> np.ndarray:
    # algebraic spectrum ~ k^-3 over every mode the evolution keeps (k <= N/3)
    k = np.arange(1, x.shape[0] // 3 + 1)
    return 0.05 * np.sum(np.cos(np.multiply.outer(x, k)) / k**3, axis=-1)


def _ints(text: str) -> list[int]:
    out = []
    for v in text.replace(";", ",").split(","):
        v = v.strip()
        if v:
            f = float(v)
            if f != int(f):
                raise ValueError(f"{v} is not an integer")
            out.append(int(f))
    return out


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _opt_float(text: str):
    return None if text.strip().lower() in ("auto", "none", "") else float(text)


# key -> (parser, default, range description, range check)
def _in(lo, hi, lo_open=False, hi_open=False):
    def check(v):
        ok_lo = v > lo if lo_open else v >= lo
        ok_hi = v < hi if hi_open else v <= hi
        return ok_lo and ok_hi

    lb = "(" if lo_open else "["
    rb = ")" if hi_open else "]"
    return f"{lb}{lo}, {hi}{rb}", check


def _pow2(v):
    return v >= 8 and (v & (v - 1)) == 0


def _p_list_ok(v):
    return len(v) > 0 and all(p == 1 or (p >= 2 and p % 2 == 0) for p in v)


KEYS: dict[str, tuple] = {
    # grid
    "dim": (int, 1, ("{1, 2}", lambda v: v in (1, 2))),
    "N": (int, 256, ("powers of two >= 8", _pow2)),
    "period": (float, 2 * math.pi, _in(0, math.inf, lo_open=True, hi_open=True)),
    # initial condition
    "ic": (str, "single-mode", (", ".join(PRESETS), lambda v: v in PRESETS)),
    "k": (int, 1, _in(1, 10**6)),
    "amplitude": (float, 0.1, _in(-10, 10)),
    "offset": (float, 0.0, _in(-1e6, 1e6)),
    "seed": (int, 0, _in(0, 2**64 - 1)),
    "modes": (int, 4, _in(1, 64)),
    "checkpoint": (str, "", ("any path", lambda v: True)),
    # solver
    "scheme": (str, "imex1", ("{imex1, rk4}", lambda v: v in ("imex1", "rk4"))),
    "dt": (_opt_float, 1e-3, ("(0, 1] or auto", lambda v: v is None or 0 < v <= 1)),
    "t_end": (float, 1.0, _in(0, 1e6, lo_open=True)),
    "record_every": (int, 10, _in(1, 10**9)),
    "stabilizer_margin": (float, 1.1, _in(1, 100)),
    "cfl": (float, 0.5, _in(0, 10, lo_open=True)),
    "mode_cutoff": (float, 2.0 / 3.0, _in(0, 1, lo_open=True)),
    # operator expansion
    "max_order": (int, 8, _in(0, 64)),
    "dealias": (_bool, True, ("true/false", lambda v: True)),
    "convergence_ratio_threshold": (float, 0.9, _in(0, 1, True, True)),
    "burn_in": (int, 2, _in(0, 64)),
    "max_slope": (float, 0.8, _in(0, 10, lo_open=True)),
    "filter_level": (float, 1e-14, _in(0, 1e-6)),
    # diagnostics
    "p_list": (_ints, [1, 2, 4], ("1 or even positive integers", _p_list_ok)),
    "check_monotone": (_bool, True, ("true/false", lambda v: True)),
    "check_max_principle": (_bool, True, ("true/false", lambda v: True)),
    "check_bounds": (_bool, True, ("true/false", lambda v: True)),
    "check_signs": (_bool, True, ("true/false", lambda v: True)),
    "check_residuals": (_bool, True, ("true/false", lambda v: True)),
    "check_energy": (_bool, True, ("true/false", lambda v: True)),
    "check_modulus": (_bool, True, ("true/false", lambda v: True)),
    "check_mass": (_bool, True, ("true/false", lambda v: True)),
    "monotone_tol": (float, 1e-8, _in(0, 1)),
    "monotone_allowance": (float, 0.0, _in(0, 1)),
    "sup_tol": (float, 1e-6, _in(0, 1)),
    "residual_tol": (float, 1e-6, _in(0, 1)),
    "energy_tol": (float, 5e-4, _in(0, 1)),
    "modulus_tol": (float, 1e-6, _in(0, 1)),
    # oracle comparison
    "depth": (float, 8.0, _in(0, 1e3, lo_open=True)),
    "vertical_factor": (int, 2, _in(1, 16)),
    "bottom_condition": (
        str,
        "homogeneous-Neumann",
        ("{homogeneous-Neumann, Dirichlet-to-flat-decay}", lambda v: v in [b.value for b in BottomCondition]),
    ),
    "oracle_resolutions": (_ints, [64, 128, 256], ("powers of two >= 8", lambda v: len(v) > 0 and all(map(_pow2, v)))),
    "oracle_order": (int, 12, _in(0, 64)),
    "oracle_min_rate": (float, 2.0, _in(0, 10)),
    # sweep
    "sweep_key": (str, "", ("a numeric key or empty", lambda v: True)),
    "sweep_values": (str, "", ("comma-separated values", lambda v: True)),
    # output
    "out_dir": (str, "helesim-out", ("any path", lambda v: True)),
}

_SECTIONS = {
    "grid": ["dim", "N", "period"],
    "initial": ["ic", "k", "amplitude", "offset", "seed", "modes", "checkpoint"],
    "solver": ["scheme", "dt", "t_end", "record_every", "stabilizer_margin", "cfl", "mode_cutoff"],
    "dno": ["max_order", "dealias", "convergence_ratio_threshold", "burn_in", "max_slope", "filter_level"],
    "diagnostics": [k for k in KEYS if k.startswith("check_") or k.endswith("_tol") or k in ("p_list", "monotone_allowance")],
    "oracle": ["depth", "vertical_factor", "bottom_condition", "oracle_resolutions", "oracle_order", "oracle_min_rate"],
    "sweep": ["sweep_key", "sweep_values"],
    "output": ["out_dir"],
}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of one CLI invocation; ``values`` holds every key."""

    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def with_overrides(self, **kw) -> "RunConfig":
        merged = dict(self.values)
        for key, val in kw.items():
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = val
        return _validated(merged)

    @property
    def grid(self) -> Grid:
        return Grid.uniform(self.dim, self.N, self.period)

    @property
    def dno(self) -> DnoExpansion:
        return DnoExpansion(
            max_order=self.max_order,
            dealias=self.dealias,
            convergence_ratio_threshold=self.convergence_ratio_threshold,
            burn_in=self.burn_in,
            max_slope=self.max_slope,
            filter_level=self.filter_level,
        )

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(
            scheme=Scheme(self.scheme),
            dt=self.dt,
            t_end=self.t_end,
            record_every=self.record_every,
            stabilizer_margin=self.stabilizer_margin,
            cfl=self.cfl,
            mode_cutoff=self.mode_cutoff,
            dno=self.dno,
        )

    def oracle(self, n: int) -> StripOracle:
        return StripOracle(
            depth=self.depth,
            vertical_points=self.vertical_factor * n,
            bottom_condition=BottomCondition(self.bottom_condition),
        )

    def to_ini(self) -> str:
        """Effective configuration as an INI document (parses back to itself)."""
        lines = []
        for sec, keys in _SECTIONS.items():
            lines.append(f"[{sec}]")
            for k in keys:
                lines.append(f"{k} = {_format(self.values[k])}")
            lines.append("")
        return "\n".join(lines)


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    return str(v)


def _validated(values: dict) -> RunConfig:
    for key, val in values.items():
        _, _, (desc, ok) = KEYS[key]
        if not ok(val):
            raise ConfigError(f"{key} = {_format(val)} is out of range; permitted: {desc}")
    cfg = RunConfig(values)
    if cfg.scheme == "rk4":
        try:
            cfg.solver.check_cfl(cfg.grid)
        except PreconditionError as e:
            raise ConfigError(f"CFL violation at N = {cfg.N}: {e}") from e
    if cfg.ic == "checkpoint" and not cfg.checkpoint:
        raise ConfigError("ic = checkpoint needs the checkpoint key")
    if cfg.sweep_key:
        if cfg.sweep_key not in KEYS or cfg.sweep_key in ("sweep_key", "sweep_values", "out_dir"):
            raise ConfigError(f"sweep_key {cfg.sweep_key!r} is not a sweepable key")
        if not cfg.sweep_values.strip():
            raise ConfigError("sweep_key given without sweep_values")
    try:
        cfg.solver
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document; empty text gives all defaults."""
    body = text if text.lstrip().startswith("[") else "[root]\n" + text
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(body)
    except configparser.Error as e:
        raise ConfigError(f"malformed configuration: {e}") from e
    values = {k: default for k, (_, default, _) in KEYS.items()}
    seen = set()
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r} (section [{sec}])")
            if key in seen:
                raise ConfigError(f"key {key!r} given twice")
            seen.add(key)
            parser = KEYS[key][0]
            try:
                values[key] = parser(raw.strip())
            except ValueError as e:
                raise ConfigError(f"{key}: cannot parse {raw!r}: {e}") from e
    return _validated(values)


def load_config(path: str | Path | None) -> RunConfig:
    """Read a configuration file; ``None`` means all defaults. I/O errors propagate as OSError."""
    if path is None:
        return parse_config("")
    return parse_config(Path(path).read_text())


def sweep_points(cfg: RunConfig) -> list[RunConfig]:
    """One config per value of ``sweep_key``."""
    if not cfg.sweep_key:
        return [cfg]
    parser = KEYS[cfg.sweep_key][0]
    out = []
    for raw in cfg.sweep_values.split(","):
        raw = raw.strip()
        if not raw:
            continue
        try:
            val = parser(raw)
        except ValueError as e:
            raise ConfigError(f"sweep value {raw!r} for {cfg.sweep_key}: {e}") from e
        out.append(cfg.with_overrides(**{cfg.sweep_key: val, "sweep_key": "", "sweep_values": ""}))
    return out


def initial_condition(cfg: RunConfig, seed: int | None = None) -> tuple[Field, float]:
    """Initial field and start time for a configuration."""
    if cfg.ic == "checkpoint":
        state = load_checkpoint(cfg.checkpoint)
        return state.h, state.t
    grid = cfg.grid
    X = grid.coordinates
    if cfg.ic == "single-mode":
        vals = cfg.amplitude * np.cos(cfg.k * X[0])
    elif cfg.ic == "multi-mode":
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        vals = np.zeros(grid.shape)
        for _ in range(cfg.modes):
            kv = [int(rng.integers(-3, 4)) for _ in range(grid.dim)]
            if not any(kv):
                kv[0] = 1
            phase = rng.uniform(0, 2 * np.pi)
            vals = vals + rng.uniform(-1, 1) * np.cos(sum(k * x for k, x in zip(kv, X)) + phase)
        peak = np.abs(vals).max()
        vals = cfg.amplitude * vals / peak if peak > 0 else vals
    else:
        vals = PRESETS[cfg.ic](X, cfg) * np.ones(grid.shape)
    return Field(grid, vals + cfg.offset), 0.0
