"""Faedo-Galerkin approximation of the compressible power-law system on the torus.

The density is advanced by a conservative finite-volume transport scheme on the
grid; the velocity lives in the span of ``N`` vector Fourier modes. One step is
a Strang splitting:

1. transport ``rho`` over ``dt/2`` holding the Galerkin momentum ``M[rho] c`` fixed,
2. integrate ``M[rho] dc/dt = N[rho, c]`` over ``dt`` with ``rho`` frozen,
3. transport over ``dt/2`` again, holding the momentum fixed.

``N`` is the weak right-hand side (forcing, pressure, convection and stress all
tested against basis modes), so no derivative ever falls on the stress.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
import scipy.linalg

from .errors import CFLError, DensityFloorError, InvalidInputError, NumericalBreakdownError
from .exponent import ConstantExponent, ExponentField, THEOREM_LOWER, sample_bounds, validate
from .grid import PeriodicGrid, random_band_limited
from .potential import STANDARD, Potential, check_exponent, stress
from .snapshot import read_snapshot

log = logging.getLogger(__name__)

INTEGRATORS = ("explicit-rk2", "semi-implicit")
TRANSPORT_SCHEMES = ("upwind", "muscl")
COURANT_LIMIT = {"upwind": 0.9, "muscl": 0.5}
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAXITER = 50


# --------------------------------------------------------------------------- data


@dataclass(frozen=True)
class FieldSpec:
    """Recipe for an initial or forcing field.

    kinds: ``zero``, ``constant`` (``value`` per component), ``sine``
    (``value + amplitude sin(wavenumber x_c - omega t)`` for component ``c``,
    using axis ``c mod d``), ``random`` (band-limited, ``|k_i| <= wavenumber``,
    peak ``amplitude``, seeded) and ``file`` (snapshot).
    """

    kind: str = "zero"
    value: tuple = (0.0,)
    amplitude: float = 0.0
    wavenumber: int = 1
    omega: float = 0.0
    seed: int = 0
    file: str | None = None

    KINDS = ("zero", "constant", "sine", "random", "file")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown field kind {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "file" and not self.file:
            raise InvalidInputError("field kind 'file' needs a file path")

    @property
    def time_dependent(self) -> bool:
        return self.kind == "sine" and self.omega != 0.0

    def evaluate(self, grid: PeriodicGrid, components: int | None, t: float = 0.0) -> np.ndarray:
        """Field values; ``components=None`` gives a scalar field."""
        ncomp = 1 if components is None else components
        shape = (ncomp,) + grid.shape
        base = np.broadcast_to(np.asarray(self.value, dtype=float), (ncomp,))
        if self.kind == "zero":
            out = np.zeros(shape)
        elif self.kind == "constant":
            out = np.broadcast_to(base.reshape((ncomp,) + (1,) * grid.dim), shape).copy()
        elif self.kind == "sine":
            x = grid.coordinates()
            out = np.stack([
                base[c] + self.amplitude * np.sin(self.wavenumber * x[c % grid.dim] - self.omega * t)
                for c in range(ncomp)
            ])
        elif self.kind == "random":
            rng = np.random.default_rng(self.seed)
            out = base.reshape((ncomp,) + (1,) * grid.dim) + random_band_limited(
                grid, (ncomp,), int(self.wavenumber), rng, self.amplitude
            )
        else:
            snap = read_snapshot(self.file)
            if (snap.dim, snap.n) != (grid.dim, grid.n) or snap.components != ncomp:
                raise InvalidInputError(
                    f"{self.file}: snapshot has d={snap.dim}, n={snap.n}, {snap.components} components; "
                    f"expected d={grid.dim}, n={grid.n}, {ncomp} components"
                )
            out = snap.data.copy()
        return out[0] if components is None else out


@dataclass(frozen=True)
class SimConfig:
    """Physical and numerical parameters of one simulation."""

    dim: int
    n: int
    dt: float
    t_end: float
    modes: int | None = None
    gamma: float = 1.5
    delta: float = 1e-3
    exponent: ExponentField = field(default_factory=lambda: ConstantExponent(1.8))
    rho0: FieldSpec = field(default_factory=lambda: FieldSpec("constant", (1.0,)))
    u0: FieldSpec = field(default_factory=FieldSpec)
    m0: FieldSpec | None = None
    forcing: FieldSpec = field(default_factory=FieldSpec)
    integrator: str = "explicit-rk2"
    transport: str = "upwind"
    mode: str = "theorem"
    output_cadence: int = 0
    blowup1_max: float = 1e6
    dtilde_q: tuple = (2.0, 2.4, 3.0)
    potential: str = "standard"

    @property
    def basis_size(self) -> int:
        if self.modes is not None:
            return self.modes
        return min(8 * self.dim, available_modes(self.dim, self.n))

    def validate(self) -> None:
        if self.dim not in (1, 2, 3):
            raise InvalidInputError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2:
            raise InvalidInputError(f"n must be even and >= 4, got {self.n}")
        if not self.dt > 0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise InvalidInputError(f"T_end must be positive, got {self.t_end}")
        if not self.delta > 0:
            raise InvalidInputError(f"delta must be positive, got {self.delta}")
        if self.mode not in ("theorem", "potential"):
            raise InvalidInputError(f"mode must be 'theorem' or 'potential', got {self.mode!r}")
        if self.mode == "theorem" and self.gamma < 1.5:
            raise InvalidInputError(f"gamma below 3/2 (got {self.gamma}) is not admissible in theorem mode")
        if not self.gamma > 1:
            raise InvalidInputError(f"gamma must exceed 1, got {self.gamma}")
        if self.integrator not in INTEGRATORS:
            raise InvalidInputError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.transport not in TRANSPORT_SCHEMES:
            raise InvalidInputError(f"transport must be one of {TRANSPORT_SCHEMES}, got {self.transport!r}")
        if self.output_cadence < 0:
            raise InvalidInputError("output_cadence must be >= 0")
        if not self.blowup1_max > 0:
            raise InvalidInputError("blowup1_max must be positive")
        if any(q < 1 for q in self.dtilde_q):
            raise InvalidInputError("dtilde_q entries must be >= 1")
        if self.potential != "standard":
            raise InvalidInputError(f"unknown potential {self.potential!r}")
        grid = PeriodicGrid(self.dim, self.n)
        check_basis_size(grid, self.basis_size)
        times = np.linspace(0.0, self.t_end, 9)
        report = validate(self.exponent, grid, times, self.mode)
        if not report.ok:
            raise InvalidInputError(f"exponent rejected in {self.mode} mode: {report.describe()}")


@dataclass(frozen=True)
class GalerkinBasis:
    """Real vector Fourier modes ``e_c cos(k.x)`` / ``e_c sin(k.x)`` sampled on a grid.

    Arrays are flattened over grid points (``P = n^d``):

    * ``values``    ``(N, d, P)``      mode values
    * ``gradients`` ``(N, d, d, P)``   ``[r, i, j] = d_j phi^r_i`` (exact)
    * ``faces``     ``(d, N, P)``      component ``a`` of each mode at ``x + h/2 e_a``
    """

    grid: PeriodicGrid
    wavevectors: np.ndarray   # (N, d) integer
    parity: tuple             # "const" | "cos" | "sin" per mode
    component: np.ndarray     # (N,)
    values: np.ndarray
    gradients: np.ndarray
    faces: np.ndarray
    norms2: np.ndarray        # exact squared L2 norms

    @property
    def size(self) -> int:
        return len(self.parity)

    @property
    def divergences(self) -> np.ndarray:
        """``div phi^r`` per point, shape ``(N, P)``."""
        return np.einsum("riip->rp", self.gradients)

    def velocity(self, c) -> np.ndarray:
        g = self.grid
        return np.tensordot(c, self.values, axes=1).reshape((g.dim,) + g.shape)

    def velocity_gradient(self, c) -> np.ndarray:
        g = self.grid
        return np.tensordot(c, self.gradients, axes=1).reshape((g.dim, g.dim) + g.shape)

    def face_velocity(self, c) -> np.ndarray:
        g = self.grid
        return np.einsum("r,arp->ap", c, self.faces).reshape((g.dim,) + g.shape)

    def project(self, v) -> np.ndarray:
        """``<v, phi^r>`` for every mode."""
        g = self.grid
        return g.cell_volume * np.tensordot(self.values, np.reshape(v, (g.dim, -1)), axes=([1, 2], [0, 1]))

    def gram(self) -> np.ndarray:
        flat = self.values.reshape(self.size, -1)
        return self.grid.cell_volume * flat @ flat.T


def available_modes(dim: int, n: int) -> int:
    """Modes with every ``|k_i| <= n/4``."""
    return dim * (2 * (n // 4) + 1) ** dim


def check_basis_size(grid: PeriodicGrid, N: int) -> None:
    if N < 1:
        raise InvalidInputError(f"basis size must be positive, got {N}")
    if N > grid.dim * (grid.n // 2) ** grid.dim:
        raise InvalidInputError(f"basis size {N} exceeds d*(n/2)^d = {grid.dim * (grid.n // 2) ** grid.dim}")
    if N > available_modes(grid.dim, grid.n):
        raise InvalidInputError(
            f"basis size {N} needs wavenumbers above n/4; at most {available_modes(grid.dim, grid.n)} modes fit this grid"
        )


def _canonical_wavevectors(dim, kmax):
    ks = []
    for k in product(range(-kmax, kmax + 1), repeat=dim):
        nz = [v for v in k if v != 0]
        if nz and nz[0] > 0:
            ks.append(k)
    ks.sort(key=lambda k: (sum(v * v for v in k), tuple(-v for v in k)))
    return ks


def build_basis(grid: PeriodicGrid, N: int) -> GalerkinBasis:
    """First ``N`` vector Fourier modes ordered by ``|k|``; the first ``d`` are constants."""
    check_basis_size(grid, N)
    d = grid.dim
    labels = [((0,) * d, "const", c) for c in range(d)]
    for k in _canonical_wavevectors(d, grid.n // 4):
        if len(labels) >= N:
            break
        labels += [(k, "cos", c) for c in range(d)] + [(k, "sin", c) for c in range(d)]
    labels = labels[:N]
    x = grid.coordinates().reshape(d, -1)
    P = x.shape[1]
    values = np.zeros((N, d, P))
    gradients = np.zeros((N, d, d, P))
    faces = np.zeros((d, N, P))
    norms2 = np.empty(N)
    face_x = [grid.face_coordinates(a).reshape(d, -1) for a in range(d)]
    for r, (k, parity, c) in enumerate(labels):
        kv = np.asarray(k, dtype=float)
        phase = kv @ x
        if parity == "const":
            values[r, c] = 1.0
            norms2[r] = grid.measure
        elif parity == "cos":
            values[r, c] = np.cos(phase)
            gradients[r, c] = -kv[:, None] * np.sin(phase)
            norms2[r] = grid.measure / 2
        else:
            values[r, c] = np.sin(phase)
            gradients[r, c] = kv[:, None] * np.cos(phase)
            norms2[r] = grid.measure / 2
        fphase = kv @ face_x[c]
        faces[c, r] = {"const": np.ones(P), "cos": np.cos(fphase), "sin": np.sin(fphase)}[parity]
    return GalerkinBasis(
        grid=grid,
        wavevectors=np.array([lab[0] for lab in labels], dtype=int),
        parity=tuple(lab[1] for lab in labels),
        component=np.array([lab[2] for lab in labels], dtype=int),
        values=values,
        gradients=gradients,
        faces=faces,
        norms2=norms2,
    )


@dataclass(frozen=True)
class GalerkinState:
    t: float
    rho: np.ndarray       # (n,)*d, >= delta
    coeffs: np.ndarray    # (N,)
    velocity: np.ndarray  # cached sum_r c_r phi^r, (d,) + (n,)*d

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rho)) and np.all(np.isfinite(self.coeffs)))


def make_state(basis: GalerkinBasis, t, rho, coeffs) -> GalerkinState:
    coeffs = np.asarray(coeffs, dtype=float)
    return GalerkinState(float(t), np.asarray(rho, dtype=float), coeffs, basis.velocity(coeffs))


# ------------------------------------------------------------------ operators


def mass_operator(rho, basis: GalerkinBasis, delta: float = 0.0) -> np.ndarray:
    """``M_rs = int rho phi^r . phi^s`` by grid quadrature.

    Raises DensityFloorError when ``min rho < delta``.
    """
    rho = np.asarray(rho, dtype=float)
    rmin = float(rho.min())
    if not rmin >= delta:
        raise DensityFloorError(f"density {rmin:.6g} below floor {delta:.6g}", min_density=rmin)
    flat = basis.values.reshape(basis.size, -1)
    weighted = flat * np.tile(rho.reshape(-1), basis.grid.dim)
    M = basis.grid.cell_volume * weighted @ flat.T
    return 0.5 * (M + M.T)


def _exponent_values(grid, p, t):
    if isinstance(p, ExponentField):
        return p.on_grid(grid, t)
    return np.broadcast_to(np.asarray(p, dtype=float), grid.shape)


def _pressure(rho, gamma):
    # the mean pressure integrates to zero against every divergence on the torus
    pr = rho**gamma
    return pr - pr.mean()


def rhs_operator(state: GalerkinState, basis: GalerkinBasis, p, f, gamma: float,
                 potential: Potential = STANDARD) -> np.ndarray:
    """Weak right-hand side tested against every basis mode ``eta``::

        int rho f.eta + int rho^gamma div eta + int [rho u (x) u - S(Du)] : grad eta

    ``p`` is an ExponentField (evaluated at ``state.t``) or grid values; ``f`` a
    vector field or None.
    """
    g = basis.grid
    d, P, N = g.dim, g.size, basis.size
    rho = state.rho.reshape(P)
    u = state.velocity.reshape(d, P)
    G = np.tensordot(state.coeffs, basis.gradients, axes=1)
    Du = 0.5 * (G + G.transpose(1, 0, 2))
    pv = check_exponent(_exponent_values(g, p, state.t)).reshape(P)
    Q = rho * u[:, None, :] * u[None, :, :] - stress(Du, pv, potential)
    out = basis.gradients.reshape(N, -1) @ Q.reshape(-1)
    out += basis.divergences @ _pressure(rho, gamma)
    if f is not None:
        out += basis.values.reshape(N, -1) @ (rho * np.reshape(f, (d, P))).reshape(-1)
    return g.cell_volume * out


def advective_rhs(state: GalerkinState, basis: GalerkinBasis, p, f, gamma: float,
                  potential: Potential = STANDARD) -> np.ndarray:
    """Right-hand side of the non-conservative form ``M[rho] dc/dt = ...``.

    Replaces the convective flux term with ``-int rho (u.grad)u . eta``; the two
    forms differ by ``dM/dt c`` under the continuity equation.
    """
    g = basis.grid
    d, P, N = g.dim, g.size, basis.size
    rho = state.rho.reshape(P)
    u = state.velocity.reshape(d, P)
    G = np.tensordot(state.coeffs, basis.gradients, axes=1)
    Du = 0.5 * (G + G.transpose(1, 0, 2))
    pv = check_exponent(_exponent_values(g, p, state.t)).reshape(P)
    accel = np.einsum("ijp,jp->ip", G, u)
    force = -rho * accel
    if f is not None:
        force = force + rho * np.reshape(f, (d, P))
    out = basis.values.reshape(N, -1) @ force.reshape(-1)
    out -= basis.gradients.reshape(N, -1) @ stress(Du, pv, potential).reshape(-1)
    out += basis.divergences @ _pressure(rho, gamma)
    return g.cell_volume * out


@dataclass(frozen=True)
class TransportResult:
    rho: np.ndarray
    floor_violated: bool
    min_density: float
    courant: float


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def transport_step(grid: PeriodicGrid, rho, u, dt: float, delta: float = 0.0,
                   face_velocity=None, scheme: str = "upwind") -> TransportResult:
    """Finite-volume update of ``rho_t + div(rho u) = 0`` over one step.

    ``face_velocity[a]`` is the ``a``-component at ``x + h/2 e_a``; when omitted
    it is the average of the two neighbouring nodes. The Courant number is the
    largest outflow fraction of any cell, ``dt/h * sum_a (v+_{i+1/2} - v-_{i-1/2})``;
    it must not exceed 0.9 (upwind) or 0.5 (MUSCL) so the update stays positive.
    MUSCL uses minmod slopes with the two-stage SSP Runge-Kutta update.
    """
    if scheme not in TRANSPORT_SCHEMES:
        raise InvalidInputError(f"unknown transport scheme {scheme!r}")
    rho = np.asarray(rho, dtype=float)
    d = grid.dim
    if face_velocity is None:
        u = np.asarray(u, dtype=float)
        face_velocity = np.stack([0.5 * (u[a] + np.roll(u[a], -1, axis=a)) for a in range(d)])
    lam = dt / grid.h
    outflow = np.zeros(grid.shape)
    for a in range(d):
        v = face_velocity[a]
        outflow += np.maximum(v, 0.0) - np.minimum(np.roll(v, 1, axis=a), 0.0)
    courant = lam * float(outflow.max())
    if courant > COURANT_LIMIT[scheme]:
        raise CFLError(f"Courant number {courant:.4g} exceeds {COURANT_LIMIT[scheme]} for {scheme}", courant)

    def flux_divergence(r):
        net = np.zeros(grid.shape)
        for a in range(d):
            v = face_velocity[a]
            if scheme == "upwind":
                left, right = r, np.roll(r, -1, axis=a)
            else:
                slope = _minmod(np.roll(r, -1, axis=a) - r, r - np.roll(r, 1, axis=a))
                left = r + 0.5 * slope
                right = np.roll(r - 0.5 * slope, -1, axis=a)
            flux = np.maximum(v, 0.0) * left + np.minimum(v, 0.0) * right
            net += flux - np.roll(flux, 1, axis=a)
        return net

    new = rho - lam * flux_divergence(rho)
    if scheme == "muscl":
        # two-stage SSP Runge-Kutta: a convex combination of Euler steps
        new = 0.5 * (rho + new - lam * flux_divergence(new))
    rmin = float(new.min())
    return TransportResult(new, bool(rmin < delta), rmin, courant)


# ------------------------------------------------------------------ the model


class GalerkinModel:
    """Discrete model assembled from a SimConfig: grid, basis, data and stepper."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        # band-limited velocities differentiate exactly with the spectral scheme
        self.grid = PeriodicGrid(config.dim, config.n, scheme="spectral")
        self.basis = build_basis(self.grid, config.basis_size)
        self.exponent = config.exponent
        self.potential: Potential = STANDARD
        self.gamma = config.gamma
        self.delta = config.delta
        bounds = sample_bounds(self.exponent, self.grid, np.linspace(0.0, config.t_end, 9))
        self.p_minus = bounds.p_minus
        self.p_plus = bounds.p_plus
        self._gram_min = float(np.linalg.eigvalsh(self.basis.gram())[0])
        self._forcing_cache = None
        self._exponent_cache = {}

    # data --------------------------------------------------------------
    def exponent_on_grid(self, t: float) -> np.ndarray:
        if self.exponent.is_constant:
            t = 0.0
        key = float(t)
        if key not in self._exponent_cache:
            if len(self._exponent_cache) > 8:
                self._exponent_cache.clear()
            self._exponent_cache[key] = check_exponent(self.exponent.on_grid(self.grid, key))
        return self._exponent_cache[key]

    def forcing_on_grid(self, t: float) -> np.ndarray | None:
        spec = self.config.forcing
        if spec.kind == "zero":
            return None
        if spec.time_dependent:
            return spec.evaluate(self.grid, self.grid.dim, t)
        if self._forcing_cache is None:
            self._forcing_cache = spec.evaluate(self.grid, self.grid.dim, 0.0)
        return self._forcing_cache

    def make_state(self, t, rho, coeffs) -> GalerkinState:
        return make_state(self.basis, t, rho, coeffs)

    def initial_state(self) -> GalerkinState:
        cfg = self.config
        rho0 = cfg.rho0.evaluate(self.grid, None)
        if cfg.m0 is not None:
            m0 = cfg.m0.evaluate(self.grid, self.grid.dim)
            c0 = self._solve(self.mass_operator(rho0), self.basis.project(m0))
        else:
            u0 = cfg.u0.evaluate(self.grid, self.grid.dim)
            c0 = self.basis.project(u0) / self.basis.norms2
        return self.make_state(0.0, rho0, c0)

    # operators ---------------------------------------------------------
    def mass_operator(self, rho) -> np.ndarray:
        return mass_operator(rho, self.basis, self.delta)

    def rhs(self, state: GalerkinState) -> np.ndarray:
        return rhs_operator(state, self.basis, self.exponent_on_grid(state.t),
                            self.forcing_on_grid(state.t), self.gamma, self.potential)

    def velocity_rate(self, state: GalerkinState) -> np.ndarray:
        """``dc/dt`` of the semi-discrete model at ``state`` (density evolving too)."""
        M = self.mass_operator(state.rho)
        b = advective_rhs(state, self.basis, self.exponent_on_grid(state.t),
                          self.forcing_on_grid(state.t), self.gamma, self.potential)
        return self._solve(M, b)

    def _factor(self, M):
        lam_min = float(np.linalg.eigvalsh(M)[0])
        floor = 0.5 * self.delta * self._gram_min
        if not lam_min >= floor:
            raise NumericalBreakdownError(
                f"mass operator smallest eigenvalue {lam_min:.3e} below {floor:.3e}",
                {"lambda_min": lam_min, "threshold": floor, "condition": float(np.linalg.cond(M))},
            )
        try:
            return scipy.linalg.cho_factor(M)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdownError(f"mass operator factorisation failed: {exc}",
                                          {"lambda_min": lam_min}) from None

    def _solve(self, M, b):
        return scipy.linalg.cho_solve(self._factor(M), b)

    # stepping ----------------------------------------------------------
    def _transport(self, rho, coeffs, dt):
        return transport_step(self.grid, rho, None, dt, self.delta,
                              face_velocity=self.basis.face_velocity(coeffs), scheme=self.config.transport)

    def _coefficient_ode(self, rho, factor, c, t0, dt):
        def rate(cc, t):
            st = GalerkinState(t, rho, cc, self.basis.velocity(cc))
            return scipy.linalg.cho_solve(factor, self.rhs(st))

        if self.config.integrator == "explicit-rk2":
            k1 = rate(c, t0)
            k2 = rate(c + dt * k1, t0 + dt)
            return c + 0.5 * dt * (k1 + k2)
        # implicit midpoint solved by fixed-point iteration
        new = c + dt * rate(c, t0)
        for _ in range(FIXED_POINT_MAXITER):
            nxt = c + dt * rate(0.5 * (c + new), t0 + 0.5 * dt)
            inc = float(np.max(np.abs(nxt - new)))
            new = nxt
            if inc < FIXED_POINT_TOL:
                break
        else:
            log.warning("fixed-point iteration stopped at %d iterations (increment %.3e)", FIXED_POINT_MAXITER, inc)
        return new

    def step(self, state: GalerkinState, dt: float) -> GalerkinState:
        """One Strang step. Raises CFLError, DensityFloorError or NumericalBreakdownError."""
        if not dt > 0:
            raise InvalidInputError(f"time step must be positive, got {dt}")
        t0 = state.t
        momentum = self.mass_operator(state.rho) @ state.coeffs

        half = self._transport(state.rho, state.coeffs, 0.5 * dt)
        if half.floor_violated:
            raise DensityFloorError(
                f"density {half.min_density:.6g} fell below floor {self.delta:.6g} at t={t0 + 0.5 * dt:.6g}",
                state=self.make_state(t0 + 0.5 * dt, half.rho, state.coeffs), min_density=half.min_density,
            )
        M1 = self.mass_operator(half.rho)
        f1 = self._factor(M1)
        c1 = scipy.linalg.cho_solve(f1, momentum)
        c2 = self._coefficient_ode(half.rho, f1, c1, t0, dt)
        momentum = M1 @ c2

        full = self._transport(half.rho, c2, 0.5 * dt)
        if full.floor_violated:
            raise DensityFloorError(
                f"density {full.min_density:.6g} fell below floor {self.delta:.6g} at t={t0 + dt:.6g}",
                state=self.make_state(t0 + dt, full.rho, c2), min_density=full.min_density,
            )
        c3 = self._solve(self.mass_operator(full.rho), momentum)
        return self.make_state(t0 + dt, full.rho, c3)

    def stable_dt(self, state: GalerkinState) -> float:
        """CFL-style bound ``h / (max_x sum_a |u_a| + 1)``."""
        speed = float(np.max(np.sum(np.abs(state.velocity), axis=0)))
        return self.grid.h / (speed + 1.0)


def step(model: GalerkinModel, state: GalerkinState, dt: float) -> GalerkinState:
    return model.step(state, dt)


# ------------------------------------------------------------------ driver

STOP_COMPLETED = "completed"
STOP_FLOOR = "density-floor"
STOP_OVERFLOW = "indicator-overflow"
STOP_NAN = "nan"
STOP_BREAKDOWN = "numerical-breakdown"
MAX_HALVINGS = 30


@dataclass
class RunResult:
    stop_reason: str
    final_time: float
    steps: int
    states: list = field(default_factory=list)    # snapshots at output cadence (+ final)
    records: list = field(default_factory=list)   # one DiagnosticsRecord per accepted step
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.stop_reason == STOP_COMPLETED


def run(config: SimConfig, on_record=None, on_snapshot=None, keep_states: bool = True) -> RunResult:
    """Advance to ``t_end`` or stop early; diagnostics are emitted every step.

    ``on_record(record)`` and ``on_snapshot(index, state)`` are called as data is
    produced, so partial output survives an early stop.
    """
    from .diagnostics import TrajectoryMonitor

    model = GalerkinModel(config)
    monitor = TrajectoryMonitor(model)
    result = RunResult(STOP_COMPLETED, 0.0, 0)

    def emit_record(st, prev=None):
        rec = monitor.record(st, prev)
        result.records.append(rec)
        if on_record is not None:
            on_record(rec)
        return rec

    snap_index = 0
    last_snapshot = None

    def emit_snapshot(st):
        nonlocal snap_index, last_snapshot
        last_snapshot = st
        if keep_states:
            result.states.append(st)
        if on_snapshot is not None:
            on_snapshot(snap_index, st)
        snap_index += 1

    state = model.initial_state()
    emit_record(state)
    emit_snapshot(state)
    t_end = config.t_end
    steps = 0
    while state.t < t_end * (1.0 - 1e-12):
        dt = min(config.dt, model.stable_dt(state), t_end - state.t)
        new = None
        try:
            for _ in range(MAX_HALVINGS):
                try:
                    new = model.step(state, dt)
                    break
                except CFLError as exc:
                    log.debug("CFL violated (%s); halving dt=%.3e", exc, dt)
                    dt *= 0.5
            else:
                raise NumericalBreakdownError(f"no admissible time step after {MAX_HALVINGS} halvings")
        except DensityFloorError as exc:
            result.stop_reason, result.message = STOP_FLOOR, str(exc)
            if exc.state is not None and exc.state.is_finite():
                emit_record(exc.state, state)
                state = exc.state
            break
        except NumericalBreakdownError as exc:
            result.stop_reason, result.message = STOP_BREAKDOWN, f"{exc} {exc.info}"
            break
        if not new.is_finite():
            result.stop_reason, result.message = STOP_NAN, f"non-finite state after step {steps + 1}"
            break
        steps += 1
        rec = emit_record(new, state)
        state = new
        if not math.isfinite(rec.blowup1) or not math.isfinite(rec.blowup2):
            result.stop_reason, result.message = STOP_NAN, "non-finite blow-up indicator"
            break
        if rec.blowup1 > config.blowup1_max:
            result.stop_reason = STOP_OVERFLOW
            result.message = f"blowup1 = {rec.blowup1:.6g} exceeds {config.blowup1_max:.6g}"
            break
        if config.output_cadence and steps % config.output_cadence == 0:
            emit_snapshot(state)
    if last_snapshot is not state:
        emit_snapshot(state)
    result.final_time = state.t
    result.steps = steps
    return result
