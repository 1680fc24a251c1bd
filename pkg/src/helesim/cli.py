"""Command-line front end: ``helesim <command> --config <path> [--out DIR] [--seed N]``.

Exit statuses: 0 success, 1 configuration error, 2 numerical breakdown,
3 failed check, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, initial_condition, load_config, sweep_points
from .diagnostics import (
    Verdict,
    bounds_report,
    energy_identity_residual,
    max_principle_report,
    modulus_check,
    monotonicity_report,
    slope_dissipation_report,
)
from .dno import DnoExpansion, dno_apply
from .errors import (
    ConfigError,
    DegenerateStateError,
    ExpansionDivergenceError,
    HeleShawError,
    OracleFailureError,
    PreconditionError,
)
from .evolution import SurfaceState, Trajectory, run, save_checkpoint
from .field import integrate, l2_norm
from .oracle import dno_oracle

log = logging.getLogger("helesim")

EXIT_OK, EXIT_CONFIG, EXIT_BREAKDOWN, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3, 4
COMMANDS = ("simulate", "verify", "oracle-compare", "sweep")


class CheckFailure(HeleShawError):
    """A monitored inequality failed at the discrete level."""


class Breakdown(HeleShawError):
    """The run stopped on a degenerate state or a divergent expansion."""


def fmt(v) -> str:
    """17 significant digits, stable across platforms."""
    return f"{float(v):.17g}"


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([x if isinstance(x, str) else fmt(x) for x in r])
    path.write_text(buf.getvalue(), newline="")


def records_csv(path: Path, traj: Trajectory) -> None:
    recs = traj.records
    header = recs[0].columns()
    write_csv(path, header, [[r.row()[c] for c in header] for r in recs])


def _simulate(cfg: RunConfig, out: Path, seed: int | None) -> Trajectory:
    h0, t0 = initial_condition(cfg, seed)
    traj = run(SurfaceState(h0, t0), cfg.solver, p_list=cfg.p_list)
    if traj.records:
        records_csv(out / "functionals.csv", traj)
    if traj.last_state is not None:
        save_checkpoint(out / "final.hshw", traj.last_state)
    (out / "status.txt").write_text(traj.stop_reason + "\n")
    return traj


def _raise_on_stop(traj: Trajectory) -> None:
    if traj.completed:
        return
    if traj.error is not None:
        raise Breakdown(traj.stop_reason)
    # int h^2 grew between records: a monitored theorem failed
    raise CheckFailure(traj.stop_reason)


def verify_suite(traj: Trajectory, cfg: RunConfig) -> list[Verdict]:
    """Every enabled invariant check on a completed trajectory."""
    out: list[Verdict] = []
    recs = traj.records
    h0 = traj.states[0].h
    if cfg.check_signs:
        out.append(Verdict("min a > 0", -min(r.inf_a for r in recs), 0.0))
        worst = max(r.gamma_max - cfg.sup_tol * r.gamma_sup for r in recs)
        out.append(Verdict("gamma <= tol |gamma|_inf", worst, 0.0))
    if cfg.check_residuals:
        scale = max(l2_norm(h0), 1e-300)
        worst = max(r.residuals.max_l2() for r in recs) / scale
        out.append(Verdict("identity residuals R1-R6 (relative)", worst, cfg.residual_tol))
    if cfg.check_mass:
        m0 = integrate(h0)
        drift = max(abs(integrate(s.h) - m0) for s in traj.states)
        span = max(traj.times[-1] - traj.times[0], 1.0)
        out.append(Verdict("mass conservation", drift, 1e-10 * span))
    if cfg.check_monotone:
        out += monotonicity_report(traj, cfg.monotone_tol, cfg.monotone_allowance).values()
        out += slope_dissipation_report(traj, cfg.monotone_tol, cfg.monotone_allowance).values()
    if cfg.check_max_principle:
        out += max_principle_report(traj, tol=cfg.sup_tol).values()
    if cfg.check_bounds:
        out += bounds_report(traj, cfg.sup_tol).values()
    if cfg.check_energy:
        if len(recs) >= 3:
            try:
                res, second = energy_identity_residual(traj)
                out.append(Verdict("energy identity residual", res, cfg.energy_tol))
                out.append(Verdict("second difference of int h^2 >= 0", -second, cfg.monotone_tol))
            except PreconditionError as e:
                out.append(Verdict("energy identity residual", 0.0, cfg.energy_tol, False, str(e)))
        else:
            out.append(Verdict("energy identity residual", 0.0, cfg.energy_tol, False, "fewer than 3 records"))
    if cfg.check_modulus:
        try:
            worst = max(modulus_check(h0, s.h) for s in traj.states)
            out.append(Verdict("modulus of continuity", worst, cfg.modulus_tol))
        except PreconditionError as e:
            out.append(Verdict("modulus of continuity", 0.0, cfg.modulus_tol, False, str(e)))
    return out


def _verify(cfg: RunConfig, out: Path, seed: int | None) -> int:
    traj = _simulate(cfg, out, seed)
    _raise_on_stop(traj)
    verdicts = verify_suite(traj, cfg)
    lines = [v.line() for v in verdicts]
    (out / "verify.txt").write_text("\n".join(lines) + "\n")
    write_csv(
        out / "verify.csv",
        ["check", "status", "margin", "tol"],
        [[v.name, "SKIP" if not v.active else ("PASS" if v.passed else "FAIL"), v.margin, v.tol] for v in verdicts],
    )
    for line in lines:
        print(line)
    if not all(v.passed for v in verdicts):
        raise CheckFailure("one or more checks failed")
    return EXIT_OK


def oracle_table(cfg: RunConfig, seed: int | None = None) -> list[tuple[int, int, int, float]]:
    """Rows ``(N, M_y, order, relative L2 error)`` of expansion vs strip oracle."""
    rows = []
    base = cfg
    for n in cfg.oracle_resolutions:
        c = base.with_overrides(N=n)
        h, _ = initial_condition(c, seed)
        dcfg = DnoExpansion(max_order=cfg.oracle_order, filter_level=cfg.filter_level, max_slope=cfg.max_slope)
        fast = dno_apply(h, h, dcfg)
        ref = dno_oracle(h, h, c.oracle(n))
        err = l2_norm(fast - ref) / max(l2_norm(ref), 1e-300)
        rows.append((n, c.oracle(n).vertical_points, cfg.oracle_order, err))
    return rows


def _oracle_compare(cfg: RunConfig, out: Path, seed: int | None) -> int:
    rows = oracle_table(cfg, seed)
    table = []
    rates = []
    for i, (n, my, m, err) in enumerate(rows):
        rate = float("nan")
        if i > 0 and err > 0 and rows[i - 1][3] > 0:
            rate = float(np.log2(rows[i - 1][3] / err) / np.log2(n / rows[i - 1][0]))
            rates.append(rate)
        table.append([str(n), str(my), str(m), err, rate])
    write_csv(out / "oracle_compare.csv", ["resolution", "vertical_points", "order", "relative_error", "observed_order"], table)
    for r in table:
        print(",".join(x if isinstance(x, str) else fmt(x) for x in r))
    if rates and min(rates) < cfg.oracle_min_rate:
        raise CheckFailure(f"observed oracle order {min(rates):.3f} below {cfg.oracle_min_rate}")
    return EXIT_OK


def _sweep_point(args) -> tuple[str, int, str]:
    cfg, out, seed = args
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.ini").write_text(cfg.to_ini())
    try:
        traj = _simulate(cfg, out, seed)
        _raise_on_stop(traj)
        return str(out), EXIT_OK, "completed"
    except Breakdown as e:
        return str(out), EXIT_BREAKDOWN, str(e)
    except CheckFailure as e:
        return str(out), EXIT_CHECK, str(e)
    except OSError as e:
        return str(out), EXIT_IO, str(e)


def worker_count() -> int:
    env = os.environ.get("HELESIM_THREADS", "").strip()
    cpus = os.cpu_count() or 1
    if env:
        try:
            n = int(env)
        except ValueError as e:
            raise ConfigError(f"HELESIM_THREADS={env!r} is not an integer") from e
        if n < 1:
            raise ConfigError("HELESIM_THREADS must be >= 1")
        return min(n, cpus)
    return cpus


def _sweep(cfg: RunConfig, out: Path, seed: int | None) -> int:
    points = sweep_points(cfg)
    jobs = []
    for i, p in enumerate(points):
        tag = f"point_{i:03d}"
        if cfg.sweep_key:
            tag += f"_{cfg.sweep_key}={getattr(p, cfg.sweep_key)}"
        jobs.append((p, out / tag, seed))
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    write_csv(out / "sweep.csv", ["point", "status", "reason"], [[d, str(s), r] for d, s, r in results])
    codes = [s for _, s, _ in results]
    return max(codes) if codes else EXIT_OK


def execute(command: str, cfg: RunConfig, out: str | Path | None = None, seed: int | None = None) -> int:
    """Run one command and map every failure class to its exit status."""
    try:
        out = Path(out if out is not None else cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.ini").write_text(cfg.to_ini())
        if command == "simulate":
            _raise_on_stop(_simulate(cfg, out, seed))
            return EXIT_OK
        if command == "verify":
            return _verify(cfg, out, seed)
        if command == "oracle-compare":
            return _oracle_compare(cfg, out, seed)
        if command == "sweep":
            return _sweep(cfg, out, seed)
        raise ConfigError(f"unknown command {command!r}")
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (Breakdown, DegenerateStateError, ExpansionDivergenceError, OracleFailureError) as e:
        log.error("numerical breakdown: %s", e)
        return EXIT_BREAKDOWN
    except CheckFailure as e:
        log.error("check failed: %s", e)
        return EXIT_CHECK
    except OSError as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    except PreconditionError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="helesim", description="Hele-Shaw interface simulator and verifier")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI-style key = value file (defaults when omitted)")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--seed", type=int, help="seed for the multi-mode preset (u64)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="helesim: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        log.error("configuration error: --seed must be a u64")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except OSError as e:
        log.error("I/O error: cannot read config: %s", e)
        return EXIT_IO
    return execute(args.command, cfg, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
