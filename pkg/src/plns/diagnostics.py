"""Monitored quantities: energy budget, Hessian functionals, blow-up indicators.

The functionals contract the stress Hessian ``H(Dw)`` against strain-rate
derivatives::

    I_Phi(u)    = sum_r int H(Du)[d_r Du, d_r Du]
    J_Phi(u)    = int H(Du)[D(du/dt), D(du/dt)]
    G_Phi(w, v) = int H(Dw)[Dv, Dv]            (v a velocity)
                = sum_r int H(Dw)[d_r v, d_r v]  (v a symmetric tensor field)

``i_phi`` and ``j_phi`` form the full Hessian; ``g_phi`` uses the closed-form
contraction, so the identities ``I = G(u, Du)`` and ``J = G(u, du/dt)`` compare two
independent code paths.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DensityFloorError, InvalidInputError, NumericalBreakdownError
from .exponent import ExponentField
from .grid import PeriodicGrid, dtilde, gn_ratio as _gn_ratio, korn_ratio, lq_norm, sym_gradient, w1q_norm, wkq_norm
from .potential import STANDARD, Potential, check_exponent, frobenius_sq, hessian_contraction, stress_hessian

log = logging.getLogger(__name__)


def _p_values(grid, p, t):
    if isinstance(p, ExponentField):
        return check_exponent(p.on_grid(grid, t))
    return check_exponent(np.broadcast_to(np.asarray(p, dtype=float), grid.shape))


def _vector(grid, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.dim,) + grid.shape:
        raise InvalidInputError(f"expected a vector field of shape {(grid.dim,) + grid.shape}, got {u.shape}")
    return u


# ------------------------------------------------------------ energy budget


def energy_terms(grid: PeriodicGrid, rho, u, p, f, gamma: float, t: float = 0.0, potential: Potential = STANDARD):
    """``(mass, kinetic, internal, dissipation_rate, work_rate)`` by quadrature."""
    rho = np.asarray(rho, dtype=float)
    u = _vector(grid, u)
    Du = sym_gradient(grid, u)
    R2 = frobenius_sq(Du)
    pv = _p_values(grid, p, t)
    mass = math.fsum((grid.cell_volume * rho).ravel())
    kinetic = 0.5 * grid.integrate(rho * np.sum(u * u, axis=0))
    internal = grid.integrate(rho**gamma) / (gamma - 1.0)
    dissipation = grid.integrate(potential.shear(R2, pv) * R2)
    work = 0.0 if f is None else grid.integrate(rho * np.sum(np.asarray(f) * u, axis=0))
    return mass, kinetic, internal, dissipation, work


def energy_balance(grid: PeriodicGrid, state, prev_state, p, f, gamma: float, dt: float | None = None,
                   f_prev=None, potential: Potential = STANDARD) -> float:
    """Discrete energy-identity residual between two consecutive states.

    ``(E1 - E0)/dt + (D0 + D1)/2 - (W0 + W1)/2`` with
    ``E = int rho|u|^2/2 + int rho^gamma/(gamma-1)``. Non-positive up to
    scheme error when the scheme is dissipative.
    """
    if np.shape(state.rho) != grid.shape or np.shape(prev_state.rho) != grid.shape:
        raise InvalidInputError("states do not live on the given grid")
    span = state.t - prev_state.t
    if dt is None:
        dt = span
    if not dt > 0:
        raise InvalidInputError(f"time step must be positive, got {dt}")
    if span > 0 and abs(span - dt) > 1e-9 * max(1.0, abs(state.t)):
        raise InvalidInputError(f"dt={dt} does not match state times {prev_state.t} -> {state.t}")
    _, k1, i1, d1, w1 = energy_terms(grid, state.rho, state.velocity, p, f, gamma, state.t, potential)
    _, k0, i0, d0, w0 = energy_terms(grid, prev_state.rho, prev_state.velocity, p,
                                     f if f_prev is None else f_prev, gamma, prev_state.t, potential)
    return ((k1 + i1) - (k0 + i0)) / dt + 0.5 * (d0 + d1) - 0.5 * (w0 + w1)


# ------------------------------------------------------------ Hessian functionals


def i_phi(grid: PeriodicGrid, u, p, t: float = 0.0, potential: Potential = STANDARD) -> float:
    Du = sym_gradient(grid, _vector(grid, u))
    H = stress_hessian(Du, _p_values(grid, p, t), potential)
    dDu = grid.gradient(Du)
    total = 0.0
    for r in range(grid.dim):
        C = dDu[:, :, r]
        total += grid.integrate(np.einsum("abjk...,ab...,jk...->...", H, C, C))
    return float(total)


def j_phi(grid: PeriodicGrid, u, du_dt, p, t: float = 0.0, potential: Potential = STANDARD) -> float:
    Du = sym_gradient(grid, _vector(grid, u))
    H = stress_hessian(Du, _p_values(grid, p, t), potential)
    C = sym_gradient(grid, _vector(grid, du_dt))
    return float(grid.integrate(np.einsum("abjk...,ab...,jk...->...", H, C, C)))


def g_phi(grid: PeriodicGrid, w, v, p, t: float = 0.0, potential: Potential = STANDARD) -> float:
    """Generic functional; ``v`` is a velocity (``(d,)+grid``) or a tensor field (``(d,d)+grid``)."""
    B = sym_gradient(grid, _vector(grid, w))
    pv = _p_values(grid, p, t)
    v = np.asarray(v, dtype=float)
    comp = v.ndim - grid.dim
    if comp == 1:
        return float(grid.integrate(hessian_contraction(B, sym_gradient(grid, v), pv, potential)))
    if comp == 2:
        return float(sum(grid.integrate(hessian_contraction(B, grid.diff(v, r), pv, potential))
                         for r in range(grid.dim)))
    raise InvalidInputError(f"g_phi needs a vector or tensor field, got shape {v.shape}")


@dataclass(frozen=True)
class LowerBoundReport:
    """Functionals divided by their weighted strain-rate norms; ``None`` = skipped."""

    i_ratio: float | None
    j_ratio: float | None
    g_ratio: float | None
    gamma1: float

    @property
    def passed(self) -> bool:
        return all(r is None or r >= self.gamma1 * (1 - 1e-12) for r in (self.i_ratio, self.j_ratio, self.g_ratio))


def _ratio(num, den):
    return None if den <= 0.0 else num / den


def lower_bound_ratios(grid: PeriodicGrid, u, du_dt, p, t: float = 0.0, p_minus: float | None = None,
                       potential: Potential = STANDARD) -> LowerBoundReport:
    """Ratios ``I / int Dt^(p-2)|grad Du|^2``, ``J / int Dt^(p-2)|D du_dt|^2`` and
    ``G(u, du_dt) / int (1+|Du|^2)^((p-2)/2)|D du_dt|^2`` (``Dt = (1+|Du|^2)^(1/2)``).

    Each should be at least ``p_minus - 1``.
    """
    pv = _p_values(grid, p, t)
    if p_minus is None:
        p_minus = float(np.min(pv))
    weight = dtilde(grid, u) ** (pv - 2.0)
    gDu = grid.gradient(sym_gradient(grid, u))
    Dv = sym_gradient(grid, _vector(grid, du_dt))
    den_i = grid.integrate(weight * np.sum(gDu * gDu, axis=(0, 1, 2)))
    den_j = grid.integrate(weight * frobenius_sq(Dv))
    return LowerBoundReport(
        i_ratio=_ratio(i_phi(grid, u, pv, t, potential), den_i),
        j_ratio=_ratio(j_phi(grid, u, du_dt, pv, t, potential), den_j),
        g_ratio=_ratio(g_phi(grid, u, du_dt, pv, t, potential), den_j),
        gamma1=p_minus - 1.0,
    )


def gij_ratio(grid: PeriodicGrid, w, v, p, p_minus: float, q: float, t: float = 0.0,
              potential: Potential = STANDARD) -> float:
    """``||Dv||_q / (G(w, v)^(1/2) ||Dt(w)^((2-p_minus)/2)||_s)``, ``s = 2q/(2-q)``.

    Bounded by ``(p_minus - 1)^(-1/2)``; NaN when the denominator vanishes.
    """
    if not 1.0 < q <= 2.0:
        raise InvalidInputError(f"q must lie in (1, 2], got {q}")
    s = math.inf if q == 2.0 else 2.0 * q / (2.0 - q)
    G = g_phi(grid, w, v, p, t, potential)
    den = math.sqrt(max(G, 0.0)) * lq_norm(grid, dtilde(grid, w) ** ((2.0 - p_minus) / 2.0), s)
    num = lq_norm(grid, sym_gradient(grid, v), q)
    return math.nan if den == 0.0 else num / den


def ine_ratio(grid: PeriodicGrid, u, i_value: float, p_minus: float) -> float:
    """``||u||_{W^{2,3p/(p+1)}}^p / (I + 1)`` with ``p = p_minus``."""
    q = 3.0 * p_minus / (p_minus + 1.0)
    return wkq_norm(grid, u, 2, q) ** p_minus / (i_value + 1.0)


# ------------------------------------------------------------ other monitored ratios


def poincare_ratio(grid: PeriodicGrid, rho, v) -> float:
    """``||v||_2^2 / (||grad v||_2^2 + (int rho|v|)^2)``; NaN when ``v = 0``."""
    rho = np.asarray(rho, dtype=float)
    if not grid.integrate(rho) > 0:
        raise InvalidInputError("poincare_ratio needs positive total mass")
    v = np.asarray(v, dtype=float)
    num = lq_norm(grid, v, 2) ** 2
    weighted = grid.integrate(rho * grid.pointwise_norm(v))
    den = lq_norm(grid, grid.gradient(v), 2) ** 2 + weighted**2
    return math.nan if den == 0.0 else num / den


GN_DEFAULT = {"j": 0, "k": 1, "q": 4.0, "p": 2.0, "r": 2.0}


def gn_ratio_default(grid: PeriodicGrid, u) -> float:
    """Empirical Gagliardo-Nirenberg constant for ``||u||_4 <= C ||grad u||_2^(d/4) ||u||_2^(1-d/4)``."""
    return _gn_ratio(grid, u, theta=grid.dim / 4.0, **GN_DEFAULT)


# ------------------------------------------------------------ blow-up and Gronwall


class BlowupMonitor:
    """Running indicators ``sup ||rho||_inf + sup ||grad u||_3`` and ``int ||grad u||_inf^4``.

    Both are non-decreasing exactly: sups only grow and the trapezoid sum only
    adds non-negative terms.
    """

    def __init__(self):
        self.rho_sup = 0.0
        self.grad_sup = 0.0
        self.integral = 0.0
        self._last = None

    def update(self, t: float, rho_linf: float, grad_u_l3: float, grad_u_linf: float) -> tuple[float, float]:
        g4 = grad_u_linf**4
        if self._last is not None:
            t0, g0 = self._last
            if t < t0:
                raise InvalidInputError(f"times must be non-decreasing, got {t} after {t0}")
            self.integral += 0.5 * (g0 + g4) * (t - t0)
        self._last = (t, g4)
        self.rho_sup = max(self.rho_sup, rho_linf)
        self.grad_sup = max(self.grad_sup, grad_u_l3)
        return self.rho_sup + self.grad_sup, self.integral


def blowup_indicators(times, rho_linf, grad_u_l3, grad_u_linf) -> tuple[np.ndarray, np.ndarray]:
    """Indicators after each prefix of a recorded trajectory."""
    if len(times) == 0:
        raise InvalidInputError("need at least one recorded step")
    mon = BlowupMonitor()
    out = [mon.update(*row) for row in zip(times, rho_linf, grad_u_l3, grad_u_linf)]
    b1, b2 = zip(*out)
    return np.array(b1), np.array(b2)


@dataclass(frozen=True)
class GronwallBound:
    t: np.ndarray
    H: np.ndarray
    bound: np.ndarray     # +inf beyond the horizon
    horizon: float        # largest grid time with alpha c0 H^alpha t < 1 (inf if H == 0)


def gronwall_bound(f0: float, c0: float, alpha: float, h, t_grid) -> GronwallBound:
    """Local Gronwall bound for ``f' <= h + c0 f^(1+alpha)``.

    ``f(t) <= H(t) (1 - alpha c0 H(t)^alpha t)^(-1/alpha)`` with
    ``H(t) = f0 + int_{t_0}^t h`` (trapezoid on the grid).
    """
    t = np.asarray(t_grid, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), t.shape)
    if t.ndim != 1 or t.size == 0:
        raise InvalidInputError("t_grid must be a non-empty 1-d array")
    if f0 < 0 or np.any(h < 0) or np.any(t < 0):
        raise InvalidInputError("f0, h and t must be non-negative")
    if not (c0 > 0 and alpha > 0):
        raise InvalidInputError("c0 and alpha must be positive")
    if np.any(np.diff(t) < 0):
        raise InvalidInputError("t_grid must be non-decreasing")
    increments = 0.5 * (h[1:] + h[:-1]) * np.diff(t)
    H = f0 + np.concatenate([[0.0], np.cumsum(increments)])
    if not np.any(H > 0):
        return GronwallBound(t, H, np.zeros_like(t), math.inf)
    z = alpha * c0 * H**alpha * t
    valid = z < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(valid, H * (1.0 - np.where(valid, z, 0.0)) ** (-1.0 / alpha), math.inf)
    # z is non-decreasing in t, so the valid set is a prefix of the grid
    horizon = float(t[valid][-1]) if np.any(valid) else -math.inf
    return GronwallBound(t, H, bound, horizon)


# ------------------------------------------------------------ density envelope


@dataclass(frozen=True)
class EnvelopeCheck:
    lower: np.ndarray
    upper: np.ndarray
    rho_min: np.ndarray
    rho_max: np.ndarray
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(np.all(self.rho_min >= self.lower * (1 - self.tolerance))
                    and np.all(self.rho_max <= self.upper * (1 + self.tolerance)))


def density_envelope(times, div_u_linf, rho_min, rho_max, tolerance: float) -> EnvelopeCheck:
    """``inf rho0 e^{-int ||div u||_inf} <= rho <= sup rho0 e^{int ||div u||_inf}`` (trapezoid in time)."""
    t = np.asarray(times, dtype=float)
    g = np.asarray(div_u_linf, dtype=float)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))])
    rho_min = np.asarray(rho_min, dtype=float)
    rho_max = np.asarray(rho_max, dtype=float)
    return EnvelopeCheck(rho_min[0] * np.exp(-integral), rho_max[0] * np.exp(integral), rho_min, rho_max, tolerance)


# ------------------------------------------------------------ per-step record


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    kinetic: float
    internal: float
    dissipation_rate: float
    work_rate: float
    i_phi: float
    j_phi: float
    dtilde_lq: dict
    grad_u_l3: float
    rho_linf: float
    blowup1: float
    blowup2: float
    gn_ratio: float
    poincare_ratio: float
    # auxiliary quantities
    rho_min: float
    div_u_linf: float
    grad_u_linf: float
    energy_residual: float
    sqrt_rho_dtu_l2: float
    rho_w1_3pminus: float
    korn_ratio: float
    gij_ratio: float
    ine_ratio: float

    @property
    def energy(self) -> float:
        return self.kinetic + self.internal

    def columns(self) -> list[str]:
        out = []
        for fld in fields(self):
            if fld.name == "dtilde_lq":
                out += [f"dtilde_l{q:g}" for q in self.dtilde_lq]
            else:
                out.append(fld.name)
        return out

    def values(self) -> list[float]:
        out = []
        for fld in fields(self):
            v = getattr(self, fld.name)
            out += list(v.values()) if fld.name == "dtilde_lq" else [v]
        return out

    def as_dict(self) -> dict:
        return dict(zip(self.columns(), self.values()))


class TrajectoryMonitor:
    """Builds a DiagnosticsRecord for each state of a Galerkin trajectory.

    ``model`` must provide ``grid``, ``basis``, ``gamma``, ``p_minus``,
    ``exponent_on_grid(t)``, ``forcing_on_grid(t)``, ``velocity_rate(state)``
    and ``config.dtilde_q``.
    """

    def __init__(self, model):
        self.model = model
        self.grid = model.grid
        self.density_grid = model.grid.with_scheme("centered")
        self.blowup = BlowupMonitor()
        self._prev_terms = None

    def _time_derivative(self, state):
        try:
            rate = self.model.velocity_rate(state)
        except (DensityFloorError, NumericalBreakdownError) as exc:
            log.debug("no velocity rate at t=%g: %s", state.t, exc)
            return None
        return self.model.basis.velocity(rate)

    def record(self, state, prev=None) -> DiagnosticsRecord:
        m, g = self.model, self.grid
        u, rho = state.velocity, state.rho
        pv = m.exponent_on_grid(state.t)
        f = m.forcing_on_grid(state.t)
        mass, kin, internal, diss, work = energy_terms(g, rho, u, pv, f, m.gamma, state.t, m.potential)

        if prev is not None and self._prev_terms is not None and state.t > self._prev_terms[0]:
            t0, e0, d0, w0 = self._prev_terms
            residual = ((kin + internal) - e0) / (state.t - t0) + 0.5 * (d0 + diss) - 0.5 * (w0 + work)
        else:
            residual = math.nan
        self._prev_terms = (state.t, kin + internal, diss, work)

        G = g.gradient(u)
        grad_mag = g.pointwise_norm(G)
        grad_u_l3 = lq_norm(g, G, 3)
        grad_u_linf = float(np.max(grad_mag))
        rho_linf = float(np.max(np.abs(rho)))
        b1, b2 = self.blowup.update(state.t, rho_linf, grad_u_l3, grad_u_linf)

        i_value = i_phi(g, u, pv, state.t, m.potential)
        du_dt = self._time_derivative(state)
        if du_dt is None:
            j_value = sqrt_rho_dtu = gij = math.nan
        else:
            j_value = j_phi(g, u, du_dt, pv, state.t, m.potential)
            sqrt_rho_dtu = math.sqrt(max(g.integrate(rho * np.sum(du_dt * du_dt, axis=0)), 0.0))
            q = 3.0 * m.p_minus / (m.p_minus + 1.0)
            gij = gij_ratio(g, u, du_dt, pv, m.p_minus, q, state.t, m.potential)

        Dt = dtilde(g, u)
        return DiagnosticsRecord(
            t=state.t,
            mass=mass,
            kinetic=kin,
            internal=internal,
            dissipation_rate=diss,
            work_rate=work,
            i_phi=i_value,
            j_phi=j_value,
            dtilde_lq={q: lq_norm(g, Dt, q) for q in m.config.dtilde_q},
            grad_u_l3=grad_u_l3,
            rho_linf=rho_linf,
            blowup1=b1,
            blowup2=b2,
            gn_ratio=gn_ratio_default(g, u),
            poincare_ratio=poincare_ratio(g, rho, u),
            rho_min=float(np.min(rho)),
            div_u_linf=float(np.max(np.abs(np.trace(G)))),
            grad_u_linf=grad_u_linf,
            energy_residual=residual,
            sqrt_rho_dtu_l2=sqrt_rho_dtu,
            rho_w1_3pminus=w1q_norm(self.density_grid, rho, 3.0 * m.p_minus),
            korn_ratio=korn_ratio(g, u),
            gij_ratio=gij,
            ine_ratio=ine_ratio(g, u, i_value, m.p_minus),
        )
