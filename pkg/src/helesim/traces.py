"""Surface traces of the velocity potential and the exact identities they obey.

With ``phi`` the harmonic extension of ``h`` (the potential of the flow, up to
the hydrostatic part) the traces at ``y = h`` are

    B = d_y phi = (G(h)h + |grad h|^2) / (1 + |grad h|^2),
    V = grad_x phi = (1 - B) grad h,

and ``a = 1 - B`` is the Rayleigh-Taylor coefficient. Time derivatives are
replaced by ``h_t = -G(h)h`` throughout, never differenced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dno import DnoExpansion, DnoOperator
from .errors import DegenerateStateError, GridMismatchError, InvalidFieldError
from .field import Field, divergence, gradient, integrate, product

__all__ = ["Traces", "ResidualReport", "compute_traces", "identity_residuals"]


@dataclass(frozen=True, eq=False)
class Traces:
    """Derived surface quantities of one state ``h``."""

    B: Field
    V: Field
    a: Field
    gamma: Field
    lambda_scale: float
    W: Field
    Z: Field
    Y: Field
    h_t: Field

    @property
    def inf_a(self) -> float:
        return self.a.min()


@dataclass
class ResidualReport:
    """L2 and sup norms of every identity residual, keyed by identity name.

    ``R5`` is a scalar (an integral), so both of its norms hold the same value.
    """

    l2: dict[str, float] = field(default_factory=dict)
    sup: dict[str, float] = field(default_factory=dict)
    a_positive: bool = True
    gamma_nonpositive: bool = True
    min_a: float = 1.0
    max_gamma: float = 0.0

    def add(self, name: str, res) -> None:
        if isinstance(res, Field):
            self.l2[name] = float(np.sqrt(np.sum(integrate(res * res))))
            self.sup[name] = res.sup_abs()
        else:
            self.l2[name] = self.sup[name] = abs(float(res))

    @property
    def names(self) -> list[str]:
        return list(self.l2)

    def max_l2(self) -> float:
        return max(self.l2.values(), default=0.0)

    def as_row(self) -> dict[str, float]:
        """Flat mapping ``name_l2``/``name_sup`` in a fixed order."""
        row = {}
        for k in self.l2:
            row[f"{k}_l2"] = self.l2[k]
            row[f"{k}_sup"] = self.sup[k]
        return row


def _dot(u: Field, v: Field) -> Field:
    return Field(u.grid, (u.values * v.values).sum(axis=0))


def compute_traces(h: Field, cfg: DnoExpansion | None = None, op: DnoOperator | None = None) -> Traces:
    """All surface traces of ``h``.

    Raises
    ------
    DegenerateStateError
        If ``min a <= 0``: the state has left the regime where the flow is
        parabolic and every later number would be meaningless.
    """
    if not isinstance(h, Field) or h.is_vector:
        raise InvalidFieldError("h must be a scalar Field")
    G = op if op is not None else DnoOperator(h, cfg)
    grid = h.grid
    gh = gradient(h)
    grad2 = _dot(gh, gh)
    Gh = G(h)
    B = (Gh + grad2) / (1.0 + grad2)
    a = 1.0 - B
    V = Field(grid, a.values * gh.values)
    min_a = a.min()
    if min_a <= 0.0:
        raise DegenerateStateError(f"Rayleigh-Taylor coefficient min a = {min_a:.3e} <= 0")

    BB = product(B, B)
    VV = sum(product(V.component(i), V.component(i)) for i in range(grid.dim))
    GB = G(B)
    GV = G(V)
    BGB = product(B, GB)
    VGV = sum(product(V.component(i), GV.component(i)) for i in range(grid.dim))
    gamma = (G(BB + VV) - 2.0 * BGB - 2.0 * VGV) / (1.0 + grad2)

    lam = float((a.values * np.sqrt(1.0 + grad2.values)).max())
    sqa = Field(grid, np.sqrt(a.values))
    h_t = -Gh
    return Traces(
        B=B,
        V=V,
        a=a,
        gamma=gamma,
        lambda_scale=lam,
        W=Field(grid, sqa.values * gh.values),
        Z=sqa * h_t,
        Y=a * h_t,
        h_t=h_t,
    )


def identity_residuals(
    h: Field,
    tr: Traces,
    cfg: DnoExpansion | None = None,
    gamma_tol: float = 1e-6,
    op: DnoOperator | None = None,
) -> ResidualReport:
    """Residuals R1..R6 of the trace identities plus the sign flags.

    R1  ``G(h)B + div V``
    R2_i ``d_i B - G(h)V_i - d_i h G(h)B - sum_j d_j h d_i V_j``
    R3  ``d_x B - G(h)V`` (one dimension)
    R4  ``G(B^2) - 2B G B - G(V^2) + 2V G V`` (one dimension)
    R5  ``|int |V|^2 - B^2 + 2B V.grad h|`` (Rellich)
    R6  ``B^2 + |V|^2 - ((G(h)h)^2 + |grad h|^2)/(1+|grad h|^2)``
    """
    if tr.B.grid != h.grid:
        raise GridMismatchError("traces were computed on another grid")
    G = op if op is not None else DnoOperator(h, cfg)
    grid = h.grid
    n = grid.dim
    gh = gradient(h)
    B, V = tr.B, tr.V
    GB = G(B)
    GV = G(V)
    rep = ResidualReport()

    rep.add("R1", GB + divergence(V))
    gB = gradient(B)
    dV = [gradient(V.component(j)) for j in range(n)]  # dV[j].component(i) = d_i V_j
    for i in range(n):
        r = gB.component(i) - GV.component(i) - product(gh.component(i), GB)
        for j in range(n):
            r = r - product(gh.component(j), dV[j].component(i))
        rep.add(f"R2_{i + 1}", r)
    if n == 1:
        rep.add("R3", gB.component(0) - GV.component(0))
        V1 = V.component(0)
        GV1 = GV.component(0)
        rep.add(
            "R4",
            G(product(B, B)) - 2.0 * product(B, GB) - G(product(V1, V1)) + 2.0 * product(V1, GV1),
        )
    VV = _dot(V, V)
    rep.add("R5", integrate(VV - B * B + 2.0 * B * _dot(V, gh)))
    grad2 = _dot(gh, gh)
    Gh = -tr.h_t
    rep.add("R6", B * B + VV - (Gh * Gh + grad2) / (1.0 + grad2))

    rep.min_a = tr.a.min()
    rep.max_gamma = tr.gamma.max()
    rep.a_positive = rep.min_a > 0.0
    scale = tr.gamma.sup_abs()
    rep.gamma_nonpositive = rep.max_gamma <= gamma_tol * scale
    return rep
