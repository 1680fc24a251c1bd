"""Periodic grids, real fields with spectral views, and Fourier multipliers.

Conventions
-----------
Spectra use the real-to-complex layout of ``scipy.fft.rfftn`` over the
spatial axes with ``norm="forward"``, so a stored coefficient is the true
Fourier coefficient ``c(xi)`` of ``f(x) = sum_xi c(xi) exp(i k(xi).x)``,
independent of the resolution. The physical wavevector of the integer mode
``xi`` is ``k_i = 2*pi*xi_i / L_i``.

Nonlinear products go through :func:`product`, which zero-pads spectra by a
factor 3/2 per axis (Orszag's rule) before multiplying in physical space.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, InvalidFieldError, SymbolContractError

__all__ = [
    "Grid",
    "Field",
    "MultiplierSymbol",
    "apply_fourier_multiplier",
    "gradient",
    "divergence",
    "integrate",
    "l2_norm",
    "product",
    "translate",
    "high_mode_norm",
]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on the torus ``prod_i [0, L_i)``.

    Parameters
    ----------
    dim : int
        Spatial dimension of the torus, 1 or 2.
    resolution : sequence of int
        Points per axis; each a power of two, at least 8.
    period : sequence of float, optional
        Axis lengths, ``2*pi`` by default.
    """

    dim: int
    resolution: tuple[int, ...]
    period: tuple[float, ...] = dc_field(default=())

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        res = tuple(int(n) for n in np.atleast_1d(self.resolution))
        if len(res) == 1 and self.dim == 2:
            res = res * 2
        per = tuple(float(p) for p in np.atleast_1d(self.period)) if self.period else ()
        if not per:
            per = (2.0 * np.pi,) * self.dim
        elif len(per) == 1 and self.dim == 2:
            per = per * 2
        if len(res) != self.dim or len(per) != self.dim:
            raise ValueError("resolution and period must have one entry per axis")
        for n in res:
            if n < 8 or not _is_power_of_two(n):
                raise ValueError(f"resolution must be a power of two >= 8, got {n}")
        for p in per:
            if not (np.isfinite(p) and p > 0):
                raise ValueError(f"period must be positive, got {p}")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "period", per)

    @classmethod
    def uniform(cls, dim: int = 1, n: int = 256, period: float = 2.0 * np.pi) -> Grid:
        return cls(dim, (n,) * dim, (period,) * dim)

    # -- geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.period, self.resolution))

    @property
    def volume(self) -> float:
        """Measure of the torus, ``|T^n|``."""
        return float(np.prod(self.period))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Per-axis sample coordinates broadcast to ``shape`` (``ij`` indexing)."""
        axes = [np.arange(n) * d for n, d in zip(self.resolution, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    # -- spectral geometry --------------------------------------------------
    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.resolution[:-1] + (self.resolution[-1] // 2 + 1,)

    @cached_property
    def integer_wavevector(self) -> tuple[np.ndarray, ...]:
        """Integer modes ``xi`` per axis in rfft layout, broadcastable."""
        out = []
        for ax, n in enumerate(self.resolution):
            if ax == self.dim - 1:
                xi = np.arange(n // 2 + 1)
            else:
                xi = np.fft.fftfreq(n, 1.0 / n).astype(int)
            shp = [1] * self.dim
            shp[ax] = xi.size
            out.append(xi.reshape(shp))
        return tuple(out)

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, ...]:
        return tuple(
            2.0 * np.pi * xi / L for xi, L in zip(self.integer_wavevector, self.period)
        )

    @cached_property
    def kabs(self) -> np.ndarray:
        """``|k|`` on the rfft layout; the flat-interface DNO symbol."""
        return np.sqrt(sum(k**2 for k in self.wavevector)) * np.ones(self.spectral_shape)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes where some axis sits at its Nyquist index."""
        mask = np.zeros(self.spectral_shape, dtype=bool)
        for xi, n in zip(self.integer_wavevector, self.resolution):
            mask |= np.abs(xi) == n // 2
        return mask

    @cached_property
    def derivative_symbols(self) -> tuple[np.ndarray, ...]:
        """``i k_j`` per axis with Nyquist modes zeroed (keeps outputs real)."""
        out = []
        for k, xi, n in zip(self.wavevector, self.integer_wavevector, self.resolution):
            sym = np.where(np.abs(xi) == n // 2, 0.0, 1j * k) * np.ones(self.spectral_shape)
            out.append(sym)
        return tuple(out)

    # -- transforms ---------------------------------------------------------
    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values, axes=self.axes, norm="forward")

    def ifft(self, spectrum: np.ndarray) -> np.ndarray:
        return sfft.irfftn(spectrum, s=self.resolution, axes=self.axes, norm="forward")

    @cached_property
    def padded_resolution(self) -> tuple[int, ...]:
        return tuple(3 * n // 2 for n in self.resolution)

    def pad(self, spectrum: np.ndarray) -> np.ndarray:
        """Zero-pad an rfft spectrum to the 3/2 grid, dropping Nyquist modes."""
        out = spectrum
        for ax in range(self.dim):
            n = self.resolution[ax]
            m = self.padded_resolution[ax]
            axis = ax - self.dim
            shp = list(out.shape)
            if ax == self.dim - 1:
                shp[axis] = m // 2 + 1
                tmp = np.zeros(shp, dtype=complex)
                idx = [slice(None)] * out.ndim
                idx[axis] = slice(0, n // 2)
                tmp[tuple(idx)] = out[tuple(idx)]
            else:
                shp[axis] = m
                tmp = np.zeros(shp, dtype=complex)
                lo = [slice(None)] * out.ndim
                lo[axis] = slice(0, n // 2)
                tmp[tuple(lo)] = out[tuple(lo)]
                hi_in = [slice(None)] * out.ndim
                hi_in[axis] = slice(n // 2 + 1, n)
                hi_out = [slice(None)] * out.ndim
                hi_out[axis] = slice(m - n // 2 + 1, m)
                tmp[tuple(hi_out)] = out[tuple(hi_in)]
            out = tmp
        return out

    def truncate(self, padded: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`pad`: keep the resolved modes, zero the Nyquist ones."""
        out = padded
        for ax in range(self.dim):
            n = self.resolution[ax]
            m = self.padded_resolution[ax]
            axis = ax - self.dim
            shp = list(out.shape)
            if ax == self.dim - 1:
                shp[axis] = n // 2 + 1
                tmp = np.zeros(shp, dtype=complex)
                idx = [slice(None)] * out.ndim
                idx[axis] = slice(0, n // 2)
                tmp[tuple(idx)] = out[tuple(idx)]
            else:
                shp[axis] = n
                tmp = np.zeros(shp, dtype=complex)
                lo = [slice(None)] * out.ndim
                lo[axis] = slice(0, n // 2)
                tmp[tuple(lo)] = out[tuple(lo)]
                hi_in = [slice(None)] * out.ndim
                hi_in[axis] = slice(m - n // 2 + 1, m)
                hi_out = [slice(None)] * out.ndim
                hi_out[axis] = slice(n // 2 + 1, n)
                tmp[tuple(hi_out)] = out[tuple(hi_in)]
            out = tmp
        return out

    def to_padded_physical(self, spectrum: np.ndarray) -> np.ndarray:
        return sfft.irfftn(
            self.pad(spectrum), s=self.padded_resolution, axes=self.axes, norm="forward"
        )

    def from_padded_physical(self, values: np.ndarray) -> np.ndarray:
        return self.truncate(sfft.rfftn(values, axes=self.axes, norm="forward"))

    def dealiased_product(self, a_hat: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
        """Spectrum of ``a*b`` from spectra, with 3/2 zero padding."""
        return self.from_padded_physical(
            self.to_padded_physical(a_hat) * self.to_padded_physical(b_hat)
        )


def _check_finite(values: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(values)):
        raise InvalidFieldError(f"{what} contains NaN or Inf samples")


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples on a :class:`Grid`; scalar (``grid.shape``) or vector
    (``(dim,) + grid.shape``). Values are copied and made read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape and vals.shape != (self.grid.dim,) + self.grid.shape:
            raise InvalidFieldError(
                f"values of shape {vals.shape} do not fit grid {self.grid.shape}"
            )
        _check_finite(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> Field:
        """Sample ``fn(x1, ..., xn)`` on the grid."""
        return cls(grid, np.broadcast_to(fn(*grid.coordinates), grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: float = 0.0) -> Field:
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum: np.ndarray) -> Field:
        return cls(grid, grid.ifft(spectrum))

    @property
    def is_vector(self) -> bool:
        return self.values.shape != self.grid.shape

    @cached_property
    def spectrum(self) -> np.ndarray:
        return self.grid.fft(self.values)

    def component(self, i: int) -> Field:
        if not self.is_vector:
            raise InvalidFieldError("component() needs a vector field")
        return Field(self.grid, self.values[i])

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def sup_abs(self) -> float:
        return float(np.abs(self.values).max())

    # -- arithmetic (pointwise, no dealiasing) --------------------------------
    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __pow__(self, p):
        return Field(self.grid, self.values**p)

    def __repr__(self) -> str:
        kind = "vector" if self.is_vector else "scalar"
        return f"Field({kind}, grid={self.grid.resolution}, sup={self.sup_abs():.3g})"


@dataclass(frozen=True)
class MultiplierSymbol:
    """Fourier multiplier ``m``; ``evaluator`` receives the per-axis physical
    wavevector arrays ``k_i = 2*pi*xi_i/L_i`` and returns ``m(k)``."""

    evaluator: Callable[..., np.ndarray]
    real_output: bool = True

    @classmethod
    def identity(cls) -> MultiplierSymbol:
        return cls(lambda *k: np.ones_like(k[0], dtype=float))

    @classmethod
    def abs_wavenumber(cls) -> MultiplierSymbol:
        return cls(lambda *k: np.sqrt(sum(ki**2 for ki in k)))

    @classmethod
    def derivative(cls, axis: int = 0) -> MultiplierSymbol:
        return cls(lambda *k: 1j * k[axis])

    @classmethod
    def bessel_potential(cls, s: float) -> MultiplierSymbol:
        """``(1 + |k|^2)^{s/2}``, the symbol of ``(I - Delta)^{s/2}``."""
        return cls(lambda *k: (1.0 + sum(ki**2 for ki in k)) ** (s / 2.0))

    def on_grid(self, grid: Grid) -> np.ndarray:
        """Symbol values on the rfft layout after the real-output contract check.

        On self-conjugate (Nyquist) modes only the Hermitian part of ``m`` is
        kept, which is what a real-to-real operator can represent there.
        """
        full = [np.fft.fftfreq(n, 1.0 / n) for n in grid.resolution]
        mesh = np.meshgrid(*full, indexing="ij")
        kfull = [2.0 * np.pi * xi / L for xi, L in zip(mesh, grid.period)]
        mfull = np.asarray(self.evaluator(*kfull), dtype=complex) * np.ones(grid.shape)
        if not np.all(np.isfinite(mfull)):
            raise SymbolContractError("symbol is not finite on every resolved mode")
        if self.real_output:
            neg = mfull
            for ax in range(grid.dim):
                neg = np.roll(np.flip(neg, axis=ax), 1, axis=ax)
            selfconj = np.ones(grid.shape, dtype=bool)
            for ax, n in enumerate(grid.resolution):
                xi = np.abs(mesh[ax])
                selfconj &= (xi == 0) | (xi == n // 2)
            scale = max(1.0, float(np.abs(mfull).max()))
            defect = np.abs(neg - np.conj(mfull))
            if np.any(defect[~selfconj] > 1e-12 * scale):
                raise SymbolContractError(
                    "symbol violates m(-xi) = conj(m(xi)); output would not be real"
                )
            mfull = np.where(selfconj, mfull.real, mfull)
        last = grid.resolution[-1] // 2 + 1
        return mfull[..., :last]


def _scalar(f: Field, what: str) -> None:
    if not isinstance(f, Field):
        raise InvalidFieldError(f"{what} must be a Field")
    _check_finite(f.values, what)


def apply_fourier_multiplier(f: Field, m: MultiplierSymbol) -> Field:
    """Return the field with coefficients ``m(xi) * c(xi)``. No dealiasing."""
    _scalar(f, "input")
    if not m.real_output:
        raise SymbolContractError("complex-output multipliers are not representable as Field")
    sym = m.on_grid(f.grid)
    return Field(f.grid, f.grid.ifft(f.spectrum * sym))


def gradient(f: Field) -> Field:
    """Spectral gradient; exact for band-limited fields."""
    _scalar(f, "input")
    if f.is_vector:
        raise InvalidFieldError("gradient of a vector field is not supported")
    g = f.grid
    comps = [g.ifft(f.spectrum * s) for s in g.derivative_symbols]
    return Field(g, np.stack(comps))


def divergence(F: Field) -> Field:
    """Spectral divergence of a vector field."""
    _scalar(F, "input")
    if not F.is_vector:
        raise InvalidFieldError("divergence needs a vector field")
    g = F.grid
    spec = sum(F.spectrum[i] * s for i, s in enumerate(g.derivative_symbols))
    return Field(g, g.ifft(spec))


def integrate(f: Field) -> float | np.ndarray:
    """Rectangle-rule quadrature, ``|T^n|`` times the sample mean."""
    _scalar(f, "input")
    axes = tuple(range(-f.grid.dim, 0))
    res = f.grid.volume * f.values.mean(axis=axes)
    return float(res) if np.ndim(res) == 0 else res


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(integrate(f * f))))


def product(f: Field, g: Field, dealias: bool = True) -> Field:
    """Pointwise product; with ``dealias`` the 3/2-padded spectral product."""
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")
    if not dealias:
        return f * g
    grid = f.grid
    return Field(grid, grid.ifft(grid.dealiased_product(f.spectrum, g.spectrum)))


def translate(f: Field, shift: Sequence[float]) -> Field:
    """Spectral translation ``f(x - shift)``; exact permutation for grid shifts."""
    grid = f.grid
    shift = np.atleast_1d(np.asarray(shift, dtype=float))
    steps = shift / np.asarray(grid.spacing)
    if np.allclose(steps, np.round(steps), atol=1e-12, rtol=0):
        axes = tuple(range(-grid.dim, 0))
        return Field(grid, np.roll(f.values, tuple(int(s) for s in np.round(steps)), axis=axes))
    phase = np.exp(-1j * sum(k * s for k, s in zip(grid.wavevector, shift)))
    phase = np.where(grid.nyquist_mask, phase.real, phase)
    return Field(grid, grid.ifft(f.spectrum * phase))


def high_mode_norm(f: Field, cutoff_fraction: float = 0.25) -> float:
    """L2 norm of the modes with ``max_i |xi_i| > cutoff_fraction * N_i``."""
    grid = f.grid
    mask = np.zeros(grid.spectral_shape, dtype=bool)
    for xi, n in zip(grid.integer_wavevector, grid.resolution):
        mask |= np.abs(xi) * np.ones(grid.spectral_shape) > cutoff_fraction * n
    # rfft layout: interior modes of the last axis stand for a conjugate pair
    weight = np.full(grid.spectral_shape, 2.0)
    weight[..., 0] = 1.0
    if grid.resolution[-1] % 2 == 0:
        weight[..., -1] = 1.0
    power = np.sum(weight * np.abs(f.spectrum) ** 2 * mask)
    return float(np.sqrt(grid.volume * power))
