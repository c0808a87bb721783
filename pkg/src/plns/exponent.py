"""Variable power-law exponent ``p(t, x)``.

Three kinds are supported: constant, analytic presets, and gridded data read
from snapshot files (multilinear in space, linear in time). Points are passed
as arrays of shape ``(d, ...)``; values come back with shape ``(...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InvalidInputError
from .grid import PeriodicGrid
from .snapshot import read_snapshot

THEOREM_LOWER = 7.0 / 5.0
DEFAULT_EXPONENT = 1.8
SAMPLING_REFINEMENT = 4


class ExponentField:
    """Interface shared by all exponent kinds."""

    kind = "abstract"

    def value(self, t, x):
        raise NotImplementedError

    def grad_x(self, t, x):
        """Spatial gradient, shape ``(d,) + x.shape[1:]``."""
        raise NotImplementedError

    def dt(self, t, x):
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False

    def on_grid(self, grid: PeriodicGrid, t: float) -> np.ndarray:
        return np.asarray(self.value(t, grid.coordinates()), dtype=float)

    def grad_on_grid(self, grid: PeriodicGrid, t: float) -> np.ndarray:
        return np.asarray(self.grad_x(t, grid.coordinates()), dtype=float)


@dataclass(frozen=True)
class ConstantExponent(ExponentField):
    constant: float = DEFAULT_EXPONENT
    kind = "constant"

    def value(self, t, x):
        return np.full(np.shape(x)[1:], float(self.constant))

    def grad_x(self, t, x):
        return np.zeros(np.shape(x))

    def dt(self, t, x):
        return np.zeros(np.shape(x)[1:])

    @property
    def is_constant(self) -> bool:
        return True


def _sine(t, x, base, amplitude, wavenumber, omega, axis, **_):
    phase = wavenumber * x[axis] - omega * t
    value = base + amplitude * np.sin(phase)
    grad = np.zeros(np.shape(x))
    grad[axis] = amplitude * wavenumber * np.cos(phase)
    return value, grad, -amplitude * omega * np.cos(phase)


def _product(t, x, base, amplitude, wavenumber, omega, **_):
    cosines = np.cos(wavenumber * np.asarray(x))
    prod = np.prod(cosines, axis=0)
    tfac = math.cos(omega * t)
    grad = np.empty(np.shape(x))
    for a in range(grad.shape[0]):
        others = np.prod(np.delete(cosines, a, axis=0), axis=0) if grad.shape[0] > 1 else 1.0
        grad[a] = -amplitude * wavenumber * np.sin(wavenumber * x[a]) * others * tfac
    return base + amplitude * prod * tfac, grad, -amplitude * omega * prod * math.sin(omega * t)


def _bump(t, x, base, amplitude, omega, axis, kappa, **_):
    phase = x[axis] - omega * t
    shape = np.exp(kappa * (np.cos(phase) - 1.0))
    grad = np.zeros(np.shape(x))
    grad[axis] = -amplitude * kappa * np.sin(phase) * shape
    return base + amplitude * shape, grad, amplitude * kappa * omega * np.sin(phase) * shape


PRESETS = {
    # base + amplitude * sin(wavenumber * x_axis - omega * t)
    "sine": _sine,
    # base + amplitude * prod_a cos(wavenumber * x_a) * cos(omega * t)
    "product": _product,
    # base + amplitude * exp(kappa * (cos(x_axis - omega * t) - 1)), a travelling periodic bump
    "bump": _bump,
}

PRESET_DEFAULTS = {"base": DEFAULT_EXPONENT, "amplitude": 0.1, "wavenumber": 1.0, "omega": 0.0, "axis": 0, "kappa": 1.0}


@dataclass(frozen=True)
class PresetExponent(ExponentField):
    preset: str
    params: dict = field(default_factory=dict)
    kind = "analytic-preset"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise InvalidInputError(f"unknown exponent preset {self.preset!r}; choose from {sorted(PRESETS)}")
        unknown = set(self.params) - set(PRESET_DEFAULTS)
        if unknown:
            raise InvalidInputError(f"unknown exponent preset parameters {sorted(unknown)}")

    def _eval(self, t, x):
        kw = {**PRESET_DEFAULTS, **self.params}
        kw["axis"] = int(kw["axis"])
        x = np.asarray(x, dtype=float)
        if not 0 <= kw["axis"] < x.shape[0]:
            raise InvalidInputError(f"preset axis {kw['axis']} out of range for {x.shape[0]}-d points")
        return PRESETS[self.preset](float(t), x, **kw)

    def value(self, t, x):
        return self._eval(t, x)[0]

    def grad_x(self, t, x):
        return self._eval(t, x)[1]

    def dt(self, t, x):
        return self._eval(t, x)[2]


class GriddedExponent(ExponentField):
    """Exponent sampled on a periodic grid at one or more times.

    Interpolation is multilinear and periodic in space and linear in time;
    outside the sampled time range the nearest frame is used.
    """

    kind = "gridded"

    def __init__(self, grid: PeriodicGrid, times, frames):
        times = np.asarray(times, dtype=float).ravel()
        frames = np.asarray(frames, dtype=float)
        if frames.shape != (times.size,) + grid.shape:
            raise InvalidInputError(f"gridded exponent frames have shape {frames.shape}, expected {(times.size,) + grid.shape}")
        if times.size == 0:
            raise InvalidInputError("gridded exponent needs at least one frame")
        order = np.argsort(times, kind="stable")
        if np.any(np.diff(times[order]) <= 0):
            raise InvalidInputError("gridded exponent frame times must be distinct")
        self.grid = grid
        self.times = times[order]
        self.frames = frames[order]

    @classmethod
    def from_files(cls, paths) -> GriddedExponent:
        snaps = [read_snapshot(p) for p in paths]
        first = snaps[0]
        for s in snaps:
            if (s.dim, s.n, s.components) != (first.dim, first.n, 1):
                raise InvalidInputError("gridded exponent files must be scalar snapshots on one common grid")
        return cls(first.grid(), [s.t for s in snaps], [s.data[0] for s in snaps])

    def _time_weights(self, t):
        if self.times.size == 1 or t <= self.times[0]:
            return 0, 0, 0.0, 0.0
        if t >= self.times[-1]:
            last = self.times.size - 1
            return last, last, 0.0, 0.0
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        span = self.times[k + 1] - self.times[k]
        return k, k + 1, (t - self.times[k]) / span, 1.0 / span

    def _spatial(self, frame, x, derivative_axis=None):
        g = self.grid
        x = np.asarray(x, dtype=float)
        s = x / g.h
        base = np.floor(s)
        w = s - base
        idx = base.astype(int) % g.n
        out = np.zeros(x.shape[1:])
        for corner in product((0, 1), repeat=g.dim):
            weight = np.ones(x.shape[1:])
            for a, c in enumerate(corner):
                if a == derivative_axis:
                    weight = weight * ((1.0 if c else -1.0) / g.h)
                else:
                    weight = weight * (w[a] if c else 1.0 - w[a])
            index = tuple((idx[a] + c) % g.n for a, c in enumerate(corner))
            out += weight * frame[index]
        return out

    def _interp(self, t, x, derivative_axis=None):
        k0, k1, lam, _ = self._time_weights(float(t))
        v0 = self._spatial(self.frames[k0], x, derivative_axis)
        if k1 == k0:
            return v0
        return (1.0 - lam) * v0 + lam * self._spatial(self.frames[k1], x, derivative_axis)

    def value(self, t, x):
        return self._interp(t, x)

    def grad_x(self, t, x):
        return np.stack([self._interp(t, x, a) for a in range(self.grid.dim)])

    def dt(self, t, x):
        k0, k1, _, inv_span = self._time_weights(float(t))
        if k1 == k0:
            return np.zeros(np.shape(x)[1:])
        return inv_span * (self._spatial(self.frames[k1], x) - self._spatial(self.frames[k0], x))


@dataclass(frozen=True)
class SampledBounds:
    p_minus: float
    p_plus: float
    argmin: tuple  # (t, x-tuple)
    argmax: tuple
    tolerance: float  # documented sampling tolerance
    lipschitz_bound: float


def _sampling(grid, times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0:
        raise InvalidInputError("exponent sampling set is empty (no sample times)")
    if grid is None:
        raise InvalidInputError("exponent sampling set is empty (no grid)")
    return grid.refined(SAMPLING_REFINEMENT), times


def sample_bounds(p: ExponentField, grid: PeriodicGrid, times=(0.0,)) -> SampledBounds:
    """Sample ``p`` on ``grid`` refined 4x at each time in ``times``.

    The reported tolerance bounds how far the true extrema can lie outside the
    sampled ones: half the fine diagonal spacing times the sampled gradient
    bound plus half the largest time gap times the sampled time-derivative bound.
    """
    fine, times = _sampling(grid, times)
    if p.is_constant:
        c = float(p.value(0.0, np.zeros((grid.dim, 1)))[0])
        point = (float(times[0]), (0.0,) * grid.dim)
        return SampledBounds(c, c, point, point, 0.0, 0.0)
    x = fine.coordinates()
    lo, hi = math.inf, -math.inf
    argmin = argmax = None
    grad_max = dt_max = lip = 0.0
    for t in times:
        v = np.asarray(p.value(t, x))
        g = np.sqrt(np.sum(np.asarray(p.grad_x(t, x)) ** 2, axis=0))
        dtv = np.abs(np.asarray(p.dt(t, x)))
        grad_max = max(grad_max, float(g.max()))
        dt_max = max(dt_max, float(dtv.max()))
        lip = max(lip, float((g + dtv).max()))
        i, j = int(np.argmin(v)), int(np.argmax(v))
        if v.flat[i] < lo:
            lo = float(v.flat[i])
            argmin = (float(t), tuple(float(c) for c in x.reshape(grid.dim, -1)[:, i]))
        if v.flat[j] > hi:
            hi = float(v.flat[j])
            argmax = (float(t), tuple(float(c) for c in x.reshape(grid.dim, -1)[:, j]))
    gap = float(np.max(np.diff(times))) if times.size > 1 else 0.0
    tol = 0.5 * fine.h * math.sqrt(grid.dim) * grad_max + 0.5 * gap * dt_max
    return SampledBounds(lo, hi, argmin, argmax, tol, lip)


def extrema(p: ExponentField, grid: PeriodicGrid | None = None, times=(0.0,)) -> tuple[float, float]:
    """``(p_minus, p_plus)`` over the sampling set; exact for constant fields."""
    if p.is_constant:
        if np.size(times) == 0:
            raise InvalidInputError("exponent sampling set is empty (no sample times)")
        c = float(p.constant)
        return c, c
    b = sample_bounds(p, grid, times)
    return b.p_minus, b.p_plus


def lipschitz_bound(p: ExponentField, grid: PeriodicGrid, times=(0.0,)) -> float:
    """Sampled bound on ``|grad p| + |dp/dt|``. Recorded only; nothing consumes it."""
    return sample_bounds(p, grid, times).lipschitz_bound


@dataclass(frozen=True)
class Violation:
    bound: str
    value: float
    point: tuple


@dataclass(frozen=True)
class ValidationReport:
    mode: str
    p_minus: float
    p_plus: float
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def describe(self) -> str:
        if self.ok:
            return f"ok ({self.mode}): p- = {self.p_minus:.6g}, p+ = {self.p_plus:.6g}"
        return "; ".join(f"{v.bound} (value {v.value:.6g} at t={v.point[0]:.6g}, x={v.point[1]})" for v in self.violations)


def validate(p: ExponentField, grid: PeriodicGrid | None = None, times=(0.0,), mode: str = "potential") -> ValidationReport:
    """Check ``1 < p- <= p+ <= 2``; ``mode="theorem"`` also requires ``p- > 7/5``."""
    if mode not in ("potential", "theorem"):
        raise InvalidInputError(f"unknown validation mode {mode!r}")
    if p.is_constant:
        lo = hi = float(p.constant)
        dim = grid.dim if grid is not None else 1
        at_min = at_max = (float(np.atleast_1d(times)[0]) if np.size(times) else 0.0, (0.0,) * dim)
    else:
        b = sample_bounds(p, grid, times)
        lo, hi, at_min, at_max = b.p_minus, b.p_plus, b.argmin, b.argmax
    violations = []
    if not lo > 1.0:
        violations.append(Violation("p⁻ ≤ 1", lo, at_min))
    if hi > 2.0:
        violations.append(Violation("p⁺ > 2", hi, at_max))
    if mode == "theorem" and not lo > THEOREM_LOWER:
        violations.append(Violation("p⁻ ≤ 7/5", lo, at_min))
    return ValidationReport(mode, lo, hi, tuple(violations))
