import numpy as np
import pytest

ACCEPTANCE = pytest.StashKey[list]()

from helesim.evolution import SolverConfig, run
from helesim.field import Field, Grid


def cosine(grid, amp=0.1, k=1, offset=0.0):
    x = grid.coordinates[0]
    return Field(grid, amp * np.cos(k * x) + offset)


def smooth_random(grid, rng, amp, kmax=6, decay=1.0):
    """Random trigonometric polynomial with ``sup|f| <= amp`` roughly."""
    X = grid.coordinates
    vals = np.zeros(grid.shape)
    for _ in range(kmax):
        kv = rng.integers(-kmax // 2, kmax // 2 + 1, size=grid.dim)
        if not kv.any():
            kv[0] = 1
        kn = np.sqrt((kv**2).sum())
        vals += rng.normal() * np.exp(-decay * kn) * np.cos(sum(k * x for k, x in zip(kv, X)) + rng.uniform(0, 2 * np.pi))
    peak = np.abs(vals).max()
    return Field(grid, amp * vals / peak)


def with_slope(grid, f, slope):
    """Rescale ``f`` so that ``sup|grad f| = slope``."""
    from helesim.field import gradient

    s = np.sqrt((gradient(f).values ** 2).sum(axis=0)).max()
    return Field(grid, f.values * (slope / s))


@pytest.fixture(scope="session")
def grid256():
    return Grid.uniform(1, 256)


@pytest.fixture(scope="session")
def standard_run(grid256):
    """h0 = 0.1 cos x, imex1, dt = 1e-3, t_end = 1, records every 10 steps."""
    return run(cosine(grid256), SolverConfig())


@pytest.fixture
def criterion(request):
    """``report(n, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
