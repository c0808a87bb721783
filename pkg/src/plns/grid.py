"""Periodic grids on the torus ``[0, 2*pi)^d`` and the discrete calculus on them.

Field arrays keep their component axes first and the ``d`` grid axes last:

* scalar field: ``(n,) * d``
* vector field: ``(d,) + (n,) * d``
* tensor field: ``(d, d) + (n,) * d`` with ``T[i, j]`` the ``(i, j)`` entry

Two derivative schemes are available. ``"centered"`` (the default) uses
second-order centered differences; the operator is antisymmetric on periodic
grids, so discrete integration by parts holds to roundoff. ``"spectral"``
differentiates with the FFT and is exact for band-limited fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError

SCHEMES = ("centered", "spectral")


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid with ``n`` points per axis on the ``dim``-torus."""

    dim: int
    n: int
    scheme: str = "centered"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidInputError(f"grid dimension must be 1, 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2:
            raise InvalidInputError(f"points per axis must be even and >= 4, got {self.n}")
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown derivative scheme {self.scheme!r}")

    @property
    def h(self) -> float:
        return 2.0 * math.pi / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def measure(self) -> float:
        return (2.0 * math.pi) ** self.dim

    def with_scheme(self, scheme: str) -> PeriodicGrid:
        return replace(self, scheme=scheme)

    def refined(self, factor: int) -> PeriodicGrid:
        return replace(self, n=self.n * factor)

    def coordinates(self, shift=0.0) -> np.ndarray:
        """Point coordinates, shape ``(d,) + shape``.

        ``shift`` is measured in cells and may be a scalar or one value per axis.
        """
        shifts = np.broadcast_to(np.asarray(shift, dtype=float), (self.dim,))
        axes = [(np.arange(self.n) + s) * self.h for s in shifts]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def face_coordinates(self, axis: int) -> np.ndarray:
        """Coordinates of the faces ``x_i + h/2 e_axis``."""
        shift = np.zeros(self.dim)
        shift[axis] = 0.5
        return self.coordinates(shift)

    def _array_axis(self, f: np.ndarray, axis: int) -> int:
        if not 0 <= axis < self.dim:
            raise InvalidInputError(f"axis {axis} out of range for a {self.dim}-d grid")
        if f.shape[f.ndim - self.dim:] != self.shape:
            raise InvalidInputError(
                f"field with shape {f.shape} does not live on a grid of shape {self.shape}"
            )
        return f.ndim - self.dim + axis

    def diff(self, f: np.ndarray, axis: int) -> np.ndarray:
        """First derivative along spatial ``axis``."""
        ax = self._array_axis(f, axis)
        if self.scheme == "centered":
            return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * self.h)
        k = np.arange(self.n // 2 + 1, dtype=float)
        k[-1] = 0.0  # odd derivative of the Nyquist mode is not representable
        return _spectral_apply(f, ax, 1j * k, self.n)

    def diff2(self, f: np.ndarray, axis: int) -> np.ndarray:
        """Second derivative along ``axis`` (compact three-point stencil or spectral)."""
        ax = self._array_axis(f, axis)
        if self.scheme == "centered":
            return (np.roll(f, -1, axis=ax) - 2.0 * f + np.roll(f, 1, axis=ax)) / self.h**2
        k = np.arange(self.n // 2 + 1, dtype=float)
        return _spectral_apply(f, ax, -(k**2), self.n)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Append a derivative axis after the component axes.

        For a vector field ``u`` the result ``G`` has ``G[i, j] = d_j u_i``.
        """
        return np.stack([self.diff(f, a) for a in range(self.dim)], axis=f.ndim - self.dim)

    def integrate(self, f: np.ndarray) -> np.ndarray | float:
        """Quadrature over the torus; component axes are kept."""
        grid_axes = tuple(range(f.ndim - self.dim, f.ndim))
        out = self.cell_volume * np.sum(f, axis=grid_axes)
        return float(out) if np.ndim(out) == 0 else out

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """L2 inner product summed over all components."""
        return float(self.cell_volume * np.sum(a * b))

    def pointwise_norm(self, f: np.ndarray) -> np.ndarray:
        """Euclidean / Frobenius magnitude over the component axes."""
        comp = f.ndim - self.dim
        if comp == 0:
            return np.abs(f)
        return np.sqrt(np.sum(f * f, axis=tuple(range(comp))))


def _spectral_apply(f, ax, multiplier, n):
    fh = np.fft.rfft(f, axis=ax)
    shape = [1] * f.ndim
    shape[ax] = multiplier.size
    return np.fft.irfft(fh * multiplier.reshape(shape), n=n, axis=ax)


def sym_gradient(grid: PeriodicGrid, u: np.ndarray) -> np.ndarray:
    """Strain rate ``Du = (grad u + grad u^T) / 2``, symmetric by construction."""
    g = grid.gradient(u)
    return 0.5 * (g + np.swapaxes(g, 0, 1))


def divergence(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    """Contract the last component axis with the derivative.

    Vector field -> scalar field, tensor field ``T`` -> vector ``sum_j d_j T_ij``.
    """
    comp = f.ndim - grid.dim
    if comp < 1 or f.shape[comp - 1] != grid.dim:
        raise InvalidInputError("divergence needs a vector or tensor field")
    parts = [grid.diff(np.take(f, j, axis=comp - 1), j) for j in range(grid.dim)]
    return np.sum(parts, axis=0)


def laplacian(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    return np.sum([grid.diff2(f, a) for a in range(grid.dim)], axis=0)


def lq_norm(grid: PeriodicGrid, f: np.ndarray, q: float) -> float:
    """Discrete ``L^q`` norm ``(h^d sum |f|^q)^(1/q)``; ``q = inf`` is the grid max."""
    q = _check_q(q)
    mag = grid.pointwise_norm(np.asarray(f, dtype=float))
    if math.isinf(q):
        return float(np.max(mag))
    return float((grid.cell_volume * np.sum(mag**q)) ** (1.0 / q))


def wkq_norm(grid: PeriodicGrid, f: np.ndarray, k: int, q: float) -> float:
    """``W^{k,q}`` norm built from ``L^q`` norms of ``f, grad f, ..., grad^k f``."""
    q = _check_q(q)
    norms = []
    g = np.asarray(f, dtype=float)
    for _ in range(k + 1):
        norms.append(lq_norm(grid, g, q))
        g = grid.gradient(g)
    if math.isinf(q):
        return max(norms)
    return float(sum(v**q for v in norms) ** (1.0 / q))


def w1q_norm(grid: PeriodicGrid, f: np.ndarray, q: float) -> float:
    return wkq_norm(grid, f, 1, q)


def dtilde(grid: PeriodicGrid, u: np.ndarray) -> np.ndarray:
    """Shifted strain magnitude ``(1 + |Du|^2)^(1/2)``; at least 1 everywhere."""
    du = sym_gradient(grid, u)
    return np.sqrt(1.0 + np.sum(du * du, axis=(0, 1)))


def gn_ratio(grid, u, j, k, q, p, r, theta) -> float:
    """Empirical Gagliardo-Nirenberg constant.

    Returns ``||grad^j u||_q / (||grad^k u||_p^theta ||u||_r^(1-theta))`` or NaN when
    the denominator vanishes. The exponents must satisfy
    ``1/q = j/d + theta (1/p - k/d) + (1 - theta)/r`` to within 1e-12.
    """
    if not 0 <= j < k:
        raise InvalidInputError(f"need 0 <= j < k, got j={j}, k={k}")
    d = grid.dim
    residual = _inv(q) - (j / d + theta * (_inv(p) - k / d) + (1.0 - theta) * _inv(r))
    if abs(residual) > 1e-12:
        raise InvalidInputError(f"Gagliardo-Nirenberg exponent relation violated, residual {residual:.3e}")
    derivs = [np.asarray(u, dtype=float)]
    for _ in range(k):
        derivs.append(grid.gradient(derivs[-1]))
    num = lq_norm(grid, derivs[j], q)
    den = lq_norm(grid, derivs[k], p) ** theta * lq_norm(grid, derivs[0], r) ** (1.0 - theta)
    if den == 0.0:
        return math.nan
    return num / den


def korn_ratio(grid: PeriodicGrid, u: np.ndarray, q: float = 2.0) -> float:
    """``||grad u||_q / ||Du||_q`` (NaN for rigid / constant fields)."""
    den = lq_norm(grid, sym_gradient(grid, u), q)
    if den == 0.0:
        return math.nan
    return lq_norm(grid, grid.gradient(u), q) / den


def random_band_limited(grid, components, kmax, rng, amplitude=1.0):
    """Random real field whose Fourier support is ``|k_i| <= kmax``, scaled to ``max|f| = amplitude``.

    ``components`` is a tuple of leading component dimensions (``()`` for scalars).
    """
    if not 1 <= kmax < grid.n // 2:
        raise InvalidInputError(f"kmax must lie in [1, n/2), got {kmax}")
    components = tuple(components)
    spec_shape = components + grid.shape[:-1] + (grid.n // 2 + 1,)
    coeffs = rng.standard_normal(spec_shape) + 1j * rng.standard_normal(spec_shape)
    mask = np.ones(spec_shape[len(components):], dtype=bool)
    for a in range(grid.dim):
        k = np.fft.fftfreq(grid.n, 1.0 / grid.n) if a < grid.dim - 1 else np.arange(grid.n // 2 + 1)
        shape = [1] * grid.dim
        shape[a] = k.size
        mask &= (np.abs(k) <= kmax).reshape(shape)
    coeffs = coeffs * mask
    axes = tuple(range(len(components), len(components) + grid.dim))
    f = np.fft.irfftn(coeffs, s=grid.shape, axes=axes)
    peak = np.max(np.abs(f))
    return f * (amplitude / peak) if peak > 0 else f


def _check_q(q):
    q = float(q)
    if not q >= 1.0:
        raise InvalidInputError(f"norm exponent must be >= 1, got {q}")
    return q


def _inv(x):
    return 0.0 if math.isinf(x) else 1.0 / x
