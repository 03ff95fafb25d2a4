"""Kernels, evaluation grids and Fourier-domain evaluation of the estimators.

Fourier convention: ``g_hat(t) = integral exp(i t x) g(x) dx`` and
``g(x) = (2 pi)^-s integral exp(-i t x) g_hat(t) dt``.

All estimators are evaluated in the frequency domain: the empirical
characteristic function of the data is multiplied by ``K_hat(h t) / q_hat(t)``
on the DFT frequency lattice of an :class:`EvaluationGrid` and mapped back
with one inverse transform. For a grid with step ``delta`` and ``M`` points
the lattice step is ``2 pi / (M delta)`` and its cutoff ``pi / delta``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from math import comb, pi, sqrt
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from .errors import (
    DataRangeError,
    IllPosedModelError,
    InvalidArgumentError,
    InvalidDataError,
    NumericalGuardError,
)
from .noise import NoiseModel

#: Largest total number of grid points allowed in one evaluation grid.
MAX_GRID_POINTS = 2 ** 26
#: Default per-axis caps on the number of grid points, by dimension.
DEFAULT_MAX_POINTS = {1: 2 ** 14, 2: 512, 3: 64}
#: Threshold below which the kernel transform counts as negligible.
SPECTRAL_TOL = 1e-12


def _gauss_pdf(z):
    return np.exp(-0.5 * np.asarray(z, dtype=float) ** 2) / sqrt(2 * pi)


def _gauss_cf(t):
    return np.exp(-0.5 * np.asarray(t, dtype=float) ** 2)


BASES: dict[str, tuple[Callable, Callable]] = {"gaussian": (_gauss_pdf, _gauss_cf)}


@dataclass(frozen=True)
class KernelSpec:
    """Order-``l`` kernel ``u_l(z) = sum_j C(l,j) (-1)^(j+1) u(z/j) / j``.

    ``base`` names a symmetric Schwartz density with known Fourier transform.
    The transform of ``u_l`` is ``sum_j C(l,j) (-1)^(j+1) u_hat(j t)``.
    """

    order: int
    base: str = "gaussian"
    base_pdf: Callable = field(default=_gauss_pdf, compare=False, repr=False)
    base_cf: Callable = field(default=_gauss_cf, compare=False, repr=False)

    @property
    def coefficients(self) -> list[tuple[int, float]]:
        return [(j, comb(self.order, j) * (-1.0) ** (j + 1)) for j in range(1, self.order + 1)]

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return sum(c * self.base_pdf(z / j) / j for j, c in self.coefficients)

    def ft(self, t):
        t = np.asarray(t, dtype=float)
        return sum(c * self.base_cf(j * t) for j, c in self.coefficients)

    def ft_derivative(self, t, h: float = 1e-5):
        """Derivative of the transform (central difference; used only in constants)."""
        t = np.asarray(t, dtype=float)
        return (self.ft(t + h) - self.ft(t - h)) / (2 * h)

    def _last_above(self, fn, tol, scale) -> float:
        s = np.arange(0.0, 400.0, 0.005)
        vals = np.abs(fn(s))
        above = np.nonzero(vals >= tol * scale)[0]
        return float(s[above[-1]] + 0.005) if above.size else 0.0

    @cached_property
    def cutoff(self) -> float:
        """``c*``: beyond it ``|u_l_hat(t)| < 1e-12``."""
        return self._last_above(self.ft, SPECTRAL_TOL, 1.0)

    @cached_property
    def support_radius(self) -> float:
        """Beyond it ``|u_l(z)| < 1e-12 * max |u_l|``."""
        peak = float(np.max(np.abs(self(np.linspace(-3 * self.order, 3 * self.order, 2001)))))
        return self._last_above(self, SPECTRAL_TOL, peak)

    def tail_sup(self, s0: float) -> float:
        """``sup_{|s| >= s0} |u_l_hat(s)|`` (numerical scan)."""
        s = s0 + np.linspace(0.0, 40.0, 4001)
        return float(np.max(np.abs(self.ft(s))))

    @cached_property
    def l1_norm(self) -> float:
        R = self.support_radius
        val, _ = integrate.quad(lambda z: abs(float(self(z))), -R, R, limit=400,
                                points=np.linspace(-R, R, 41)[1:-1])
        return val


def build_kernel(base="gaussian", order: int = 2) -> KernelSpec:
    """Construct ``u_l`` from a base density.

    ``base`` is a name from :data:`BASES` or a ``(name, pdf, cf)`` triple.
    """
    if int(order) != order or order < 1:
        raise InvalidArgumentError("kernel order must be an integer >= 1")
    if isinstance(base, str):
        if base not in BASES:
            raise InvalidArgumentError(f"unknown kernel base {base!r}")
        pdf, cf = BASES[base]
        return KernelSpec(int(order), base, pdf, cf)
    name, pdf, cf = base
    return KernelSpec(int(order), name, pdf, cf)


# ---------------------------------------------------------------------------
# grids


def _next_pow2(x: float) -> int:
    return 1 << max(1, int(np.ceil(np.log2(max(x, 2.0)))))


@dataclass(frozen=True)
class Axis:
    start: float
    step: float
    size: int

    @property
    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.size)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.size - 1)

    @property
    def freqs(self) -> np.ndarray:
        """DFT frequency lattice in FFT order."""
        return 2 * pi * sfft.fftfreq(self.size, self.step)

    @property
    def freq_step(self) -> float:
        return 2 * pi / (self.size * self.step)

    @property
    def cutoff(self) -> float:
        return pi / self.step


@dataclass(frozen=True)
class EvaluationGrid:
    """Tensor grid of power-of-two axes with its matched frequency lattice."""

    axes: tuple[Axis, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if int(np.prod([a.size for a in self.axes])) > MAX_GRID_POINTS:
            raise NumericalGuardError(
                f"grid of shape {self.shape} exceeds {MAX_GRID_POINTS} points"
            )

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([a.step for a in self.axes]))

    def sub(self, I: Sequence[int]) -> "EvaluationGrid":
        return EvaluationGrid(tuple(self.axes[i] for i in I))

    def points(self) -> list[np.ndarray]:
        return [a.points for a in self.axes]

    def mesh(self) -> np.ndarray:
        """Coordinates as an array of shape ``shape + (d,)``."""
        return np.stack(np.meshgrid(*self.points(), indexing="ij"), axis=-1)

    def freq_mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[a.freqs for a in self.axes], indexing="ij", sparse=True)

    @classmethod
    def from_ranges(cls, lows, highs, sizes) -> "EvaluationGrid":
        """Grid with ``sizes[j]`` points from ``lows[j]`` to ``highs[j]``."""
        axes = []
        for lo, hi, m in zip(lows, highs, sizes):
            m = int(m)
            if m < 2 or m & (m - 1):
                raise InvalidArgumentError("grid sizes must be powers of two")
            axes.append(Axis(float(lo), (hi - lo) / (m - 1), m))
        return cls(tuple(axes))

    @classmethod
    def for_data(
        cls,
        Y,
        kernel: KernelSpec,
        h_min,
        h_max,
        noise: NoiseModel | None = None,
        points=None,
        max_points=None,
    ) -> "EvaluationGrid":
        """Grid covering the data plus the kernel reach, resolving ``h_min``.

        Per axis the step is ``pi h_min / c*`` so the frequency cutoff is at
        least ``c* / h_min``; the size is the next power of two. ``points``
        forces the size; ``max_points`` caps it (the step then grows and
        the cutoff shrinks, see :func:`spectral_residual`).
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        d = Y.shape[1]
        h_min = np.broadcast_to(np.asarray(h_min, dtype=float), (d,))
        h_max = np.broadcast_to(np.asarray(h_max, dtype=float), (d,))
        if points is not None:
            points = np.broadcast_to(np.asarray(points), (d,))
        if max_points is None:
            max_points = DEFAULT_MAX_POINTS.get(d, 32)
        max_points = np.broadcast_to(np.asarray(max_points), (d,))
        axes = []
        for j in range(d):
            lo, hi = float(Y[:, j].min()), float(Y[:, j].max())
            pad = kernel_reach(kernel, h_max[j], noise.components[j] if noise else None)
            span = hi - lo + 2 * pad
            if points is not None:
                m = int(points[j])
            else:
                step = pi * h_min[j] / kernel.cutoff
                m = min(_next_pow2(span / step + 1), int(max_points[j]))
            step = span / (m - 1)
            center = 0.5 * (lo + hi)
            axes.append(Axis(center - step * (m - 1) / 2, step, m))
        return cls(tuple(axes))

    @classmethod
    def for_kernel(cls, kernel: KernelSpec, h_I, noise: NoiseModel | None = None,
                   I: Sequence[int] | None = None, oversample: float = 1.0) -> "EvaluationGrid":
        """Grid centred on 0 (a grid node) resolving ``L_(h_I)`` fully."""
        h_I = np.atleast_1d(np.asarray(h_I, dtype=float))
        if I is None:
            I = range(len(h_I))
        axes = []
        for h, j in zip(h_I, I):
            step = pi * h / kernel.cutoff / oversample
            reach = kernel_reach(kernel, h, noise.components[j] if noise else None)
            m = _next_pow2(2 * reach / step + 2)
            axes.append(Axis(-step * (m // 2), step, m))
        return cls(tuple(axes))


def kernel_reach(kernel: KernelSpec, h: float, component=None) -> float:
    """Half-width outside which ``L_(h)`` is negligible along one axis.

    For integer noise shape ``1/q_hat`` is a polynomial and ``L_(h)`` is a
    finite combination of derivatives of ``K_h``; otherwise it has
    exponential tails at the noise scale.
    """
    reach = kernel.support_radius * h
    if component is not None and component.kind != "none" and float(component.k) != int(component.k):
        reach += 30.0 * component.theta
    return reach


# ---------------------------------------------------------------------------
# grid functions


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples of a function of ``x_I`` on a tensor grid.

    ``block`` lists the coordinates (0-based) the grid axes refer to;
    ``spectrum`` (optional) holds the continuous Fourier transform on the
    grid's frequency lattice in FFT order.
    """

    block: tuple[int, ...]
    grid: EvaluationGrid
    values: np.ndarray
    spectrum: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "block", tuple(int(i) for i in self.block))
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise InvalidArgumentError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise NumericalGuardError("grid function has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if len(self.block) != self.grid.d:
            raise InvalidArgumentError("block size does not match grid dimension")

    def interpolate(self, x) -> np.ndarray:
        """Multilinear interpolation at points ``x`` of shape (m, |I|)."""
        interp = RegularGridInterpolator(self.grid.points(), self.values,
                                         bounds_error=False, fill_value=0.0)
        return interp(np.atleast_2d(x))

    def with_values(self, values, **params) -> "GridFunction":
        return GridFunction(self.block, self.grid, values, None, {**self.params, **params})

    def positive_part(self) -> "GridFunction":
        """Clip at 0 and renormalize to unit mass (for display only)."""
        v = np.clip(self.values, 0.0, None)
        mass = v.sum() * self.grid.cell_volume
        return self.with_values(v / mass if mass > 0 else v, projected=True)

    def equals(self, other: "GridFunction") -> bool:
        return (
            self.block == other.block
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )


def _phase(grid: EvaluationGrid, sign: float) -> np.ndarray:
    out = np.ones((1,) * grid.d, dtype=complex)
    for a, axis in enumerate(grid.axes):
        shape = [1] * grid.d
        shape[a] = axis.size
        out = out * np.exp(sign * 1j * axis.freqs * axis.start).reshape(shape)
    return out


def to_space(grid: EvaluationGrid, spectrum, workers: int | None = None):
    """Inverse transform a spectrum on the lattice; returns (real values, max |imag|)."""
    a = np.asarray(spectrum) * _phase(grid, -1.0)
    vals = sfft.fftn(a, workers=workers) / np.prod([ax.size * ax.step for ax in grid.axes])
    return vals.real, float(np.max(np.abs(vals.imag))) if vals.size else 0.0


def to_frequency(grid: EvaluationGrid, values, workers: int | None = None) -> np.ndarray:
    """Riemann-sum Fourier transform of grid samples onto the lattice."""
    scale = np.prod([ax.size * ax.step for ax in grid.axes])
    return sfft.ifftn(np.asarray(values, dtype=complex), workers=workers) * scale * _phase(grid, 1.0)


def _ecf_1d_lattice(y: np.ndarray, axis: Axis, chunk: int = 4096) -> np.ndarray:
    """ECF on the full lattice of one axis, FFT order.

    Writes ``k = k0 + a b + c`` so that ``exp(i k dt y)`` splits into a
    coarse and a fine factor; the sum over observations is then a matrix
    product. The zero frequency is hit with both exponents exactly zero.
    """
    M = axis.size
    dt = axis.freq_step
    b = 1 << int(np.ceil(np.log2(np.sqrt(M))))
    b = min(b, M // 2) if M >= 4 else 1
    n_coarse = M // b
    k0 = -M // 2
    coarse = (k0 + b * np.arange(n_coarse)).astype(float)
    fine = np.arange(b).astype(float)
    acc = np.zeros((n_coarse, b), dtype=complex)
    for s in range(0, y.size, chunk):
        yy = y[s:s + chunk]
        A = np.exp(1j * dt * np.outer(yy, coarse))
        C = np.exp(1j * dt * np.outer(yy, fine))
        acc += A.T @ C
    natural = acc.reshape(M) / y.size
    return sfft.ifftshift(natural)


def empirical_cf(Y, I: Sequence[int], freqs, chunk: int = 4096) -> np.ndarray:
    """Empirical characteristic function ``n^-1 sum_k exp(i <t, Y_k,I>)``.

    ``freqs`` is either an :class:`EvaluationGrid` over the axes of ``I``
    (result on its lattice, FFT order) or a sequence of per-axis frequency
    arrays (result on their tensor product).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] < 1:
        raise InvalidDataError("need at least one observation")
    I = list(I)
    Yi = Y[:, I]
    n = Yi.shape[0]
    if isinstance(freqs, EvaluationGrid):
        if freqs.d != len(I):
            raise InvalidArgumentError("grid dimension does not match block")
        if len(I) == 1:
            return _ecf_1d_lattice(Yi[:, 0], freqs.axes[0], chunk)
        tlist = [ax.freqs for ax in freqs.axes]
    else:
        tlist = [np.asarray(t, dtype=float) for t in freqs]
        if len(tlist) != len(I):
            raise InvalidArgumentError("need one frequency array per coordinate")
    shape = tuple(t.size for t in tlist)
    out = np.zeros((int(np.prod(shape[:-1])), shape[-1]), dtype=complex)
    for s in range(0, n, chunk):
        rows = Yi[s:s + chunk]
        left = np.ones((rows.shape[0], 1), dtype=complex)
        for a in range(len(I) - 1):
            E = np.exp(1j * np.outer(rows[:, a], tlist[a]))
            left = (left[:, :, None] * E[:, None, :]).reshape(rows.shape[0], -1)
        last = np.exp(1j * np.outer(rows[:, -1], tlist[-1]))
        out += left.T @ last
    return out.reshape(shape) / n


def _multiplier(grid: EvaluationGrid, fn_per_axis) -> np.ndarray:
    out = np.ones((1,) * grid.d)
    for a, axis in enumerate(grid.axes):
        shape = [1] * grid.d
        shape[a] = axis.size
        out = out * np.asarray(fn_per_axis(a, axis.freqs)).reshape(shape)
    return out


def kernel_multiplier(K: KernelSpec, h_I, grid: EvaluationGrid) -> np.ndarray:
    h_I = np.atleast_1d(np.asarray(h_I, dtype=float))
    return _multiplier(grid, lambda a, t: K.ft(h_I[a] * t))


def inverse_noise_multiplier(q: NoiseModel, I: Sequence[int], grid: EvaluationGrid) -> np.ndarray:
    I = list(I)

    def per_axis(a, t):
        qh = q.cf_axis(I[a], t)
        if np.any(qh == 0) or not np.all(np.isfinite(qh)):
            raise IllPosedModelError(f"noise cf vanishes on the frequency grid of axis {I[a] + 1}")
        return 1.0 / qh

    return _multiplier(grid, per_axis)


def decon_kernel(K: KernelSpec, h_I, q: NoiseModel, grid: EvaluationGrid | None = None,
                 I: Sequence[int] | None = None) -> GridFunction:
    """Samples of the deconvolution kernel ``L_(h_I)`` on ``grid``."""
    h_I = np.atleast_1d(np.asarray(h_I, dtype=float))
    if I is None:
        I = tuple(range(len(h_I)))
    if grid is None:
        grid = EvaluationGrid.for_kernel(K, h_I, q, I)
    S = kernel_multiplier(K, h_I, grid) * inverse_noise_multiplier(q, I, grid)
    vals, imag = to_space(grid, S)
    return GridFunction(tuple(I), grid, vals, S, {"h": tuple(h_I), "imag_residual": imag})


def check_range(Y, I: Sequence[int], grid: EvaluationGrid) -> None:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    for a, j in enumerate(I):
        ax = grid.axes[a]
        col = Y[:, j]
        bad = (col < ax.start) | (col > ax.stop)
        if np.any(bad):
            worst = col[bad][np.argmax(np.abs(col[bad]))]
            raise DataRangeError(
                f"observation {worst:g} on coordinate {j + 1} outside grid "
                f"[{ax.start:g}, {ax.stop:g}]"
            )


def estimate_marginal(Y, I: Sequence[int], h_I, K: KernelSpec, q: NoiseModel,
                      grid: EvaluationGrid, ecf=None, workers: int | None = None) -> GridFunction:
    """Kernel deconvolution estimate of the marginal density on block ``I``.

    ``grid`` spans the axes of ``I`` only. ``ecf`` may carry a precomputed
    :func:`empirical_cf` on that grid.
    """
    I = tuple(I)
    h_I = np.atleast_1d(np.asarray(h_I, dtype=float))
    check_range(Y, I, grid)
    if ecf is None:
        ecf = empirical_cf(Y, I, grid)
    S = ecf * kernel_multiplier(K, h_I, grid) * inverse_noise_multiplier(q, I, grid)
    vals, imag = to_space(grid, S, workers)
    return GridFunction(I, grid, vals, S, {"h": tuple(h_I), "imag_residual": imag})


def smooth_estimate(est: GridFunction, eta_I, K: KernelSpec, workers: int | None = None) -> GridFunction:
    """``K_eta * est`` computed as a frequency-domain product."""
    eta_I = np.atleast_1d(np.asarray(eta_I, dtype=float))
    if eta_I.size != len(est.block):
        raise InvalidArgumentError("eta must have one entry per block coordinate")
    S0 = est.spectrum if est.spectrum is not None else to_frequency(est.grid, est.values, workers)
    S = S0 * kernel_multiplier(K, eta_I, est.grid)
    vals, imag = to_space(est.grid, S, workers)
    return GridFunction(est.block, est.grid, vals, S,
                        {**est.params, "eta": tuple(eta_I), "imag_residual": imag})


def lp_norm(f: GridFunction | np.ndarray, p: float, cell_volume: float | None = None) -> float:
    """Riemann-sum ``L_p`` norm; ``p = inf`` gives the max of ``|f|``."""
    if isinstance(f, GridFunction):
        vals, vol = f.values, f.grid.cell_volume
    else:
        vals, vol = np.asarray(f), cell_volume
    if p < 1:
        raise InvalidArgumentError("p must be >= 1")
    if vals.size == 0:
        return 0.0
    a = np.abs(vals)
    if np.isinf(p):
        return float(a.max())
    if p == 2:
        return float(np.sqrt(np.vdot(a, a).real * vol))
    if p == 1:
        return float(a.sum() * vol)
    return float((np.sum(a ** p) * vol) ** (1.0 / p))


def spectral_l2_norm(f: GridFunction) -> float:
    """``L_2`` norm computed from the spectrum (Plancherel)."""
    S = f.spectrum if f.spectrum is not None else to_frequency(f.grid, f.values)
    dt = np.prod([ax.freq_step for ax in f.grid.axes])
    return float(np.sqrt(np.sum(np.abs(S) ** 2) * dt / (2 * pi) ** f.grid.d))


def spectral_residual(K: KernelSpec, h_I, grid: EvaluationGrid) -> float:
    """Largest kernel transform magnitude beyond the lattice cutoff."""
    h_I = np.atleast_1d(np.asarray(h_I, dtype=float))
    return max(K.tail_sup(h * ax.cutoff) for h, ax in zip(h_I, grid.axes))


def edge_ratio(f: GridFunction) -> float:
    """Max of ``|f|`` on the grid boundary relative to its overall max."""
    a = np.abs(f.values)
    peak = a.max()
    if peak == 0:
        return 0.0
    edge = 0.0
    for ax in range(a.ndim):
        edge = max(edge, np.take(a, 0, axis=ax).max(), np.take(a, -1, axis=ax).max())
    return float(edge / peak)


def embed(f: GridFunction, d: int) -> np.ndarray:
    """View of ``f.values`` broadcastable against a full d-dimensional grid."""
    shape = [1] * d
    for a, j in enumerate(f.block):
        shape[j] = f.values.shape[a]
    return f.values.reshape(shape)


def product_values(factors: Sequence[GridFunction], d: int) -> np.ndarray:
    """Tensor product of block functions on the full grid (blocks must be disjoint)."""
    out = None
    for f in factors:
        e = embed(f, d)
        out = e if out is None else out * e
    return np.asarray(out)


def product_function(factors: Sequence[GridFunction], grid: EvaluationGrid, **params) -> GridFunction:
    d = grid.d
    return GridFunction(tuple(range(d)), grid, np.broadcast_to(product_values(factors, d), grid.shape).copy(), None, params)


# ---------------------------------------------------------------------------
# export


_MAGIC = b"LPDG"
_VERSION = 1


def save_grid_function(path, f: GridFunction) -> None:
    """Binary dump: header with axes and steps, then row-major float64 LE values."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, f.grid.d))
        fh.write(struct.pack(f"<{f.grid.d}i", *f.block))
        for ax in f.grid.axes:
            fh.write(struct.pack("<ddQ", ax.start, ax.step, ax.size))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))


def load_grid_function(path) -> GridFunction:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise InvalidDataError(f"{path}: not a grid dump")
    version, d = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise InvalidDataError(f"{path}: unsupported dump version {version}")
    off = 12
    block = struct.unpack_from(f"<{d}i", raw, off)
    off += 4 * d
    axes = []
    for _ in range(d):
        start, step, size = struct.unpack_from("<ddQ", raw, off)
        off += 24
        axes.append(Axis(start, step, int(size)))
    grid = EvaluationGrid(tuple(axes))
    vals = np.frombuffer(raw, dtype="<f8", offset=off).reshape(grid.shape)
    return GridFunction(block, grid, vals.astype(float))


def write_csv(path, f: GridFunction) -> None:
    """Coordinates and value, one grid node per row."""
    mesh = f.grid.mesh().reshape(-1, f.grid.d)
    data = np.column_stack([mesh, f.values.reshape(-1)])
    header = ",".join([f"x{j + 1}" for j in f.block] + ["value"])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
