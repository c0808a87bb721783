"""The p(t,x)-potential, its stress, Hessian and the inequalities they satisfy.

Tensor arguments keep the two matrix axes first, ``B.shape == (d, d, ...)``,
so the same functions act on a single matrix or pointwise on a tensor field.
Only the symmetric part of ``B`` enters; ``|B|`` is the Frobenius norm.

The standard potential is ``F(R) = ((1 + R^2)^(p/2) - 1) / p``. Its derivative
``F'(R) = (1 + R^2)^((p-2)/2) R`` reproduces the power-law stress
``S(B) = (1 + |B|^2)^((p-2)/2) B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .exponent import ExponentField
from .grid import PeriodicGrid, divergence, laplacian, sym_gradient


class Potential:
    """Extension point: a radial potential ``Phi(B) = F(|B^sym|)``.

    Subclasses provide ``F``, ``dF`` and ``d2F``. The coefficient helpers have
    generic fallbacks but should be overridden with forms that stay regular at
    ``R = 0``.
    """

    name = "abstract"

    def F(self, R, p):
        raise NotImplementedError

    def dF(self, R, p):
        raise NotImplementedError

    def d2F(self, R, p):
        raise NotImplementedError

    def shear(self, R2, p):
        """``F'(R) / R``, so that ``S(B) = shear * B``."""
        R = np.sqrt(R2)
        safe = np.where(R > 0, R, 1.0)
        return np.where(R > 0, self.dF(safe, p) / safe, self.d2F(np.zeros_like(R), p))

    def rank_one(self, R2, p):
        """``(F''(R) - F'(R)/R) / R^2``, the coefficient of ``B (x) B`` in the Hessian."""
        R = np.sqrt(R2)
        safe = np.where(R > 0, R, 1.0)
        val = (self.d2F(safe, p) - self.dF(safe, p) / safe) / safe**2
        return np.where(R > 0, val, 0.0)

    def shear_dp(self, R2, p):
        """Derivative of ``shear`` with respect to the exponent ``p``."""
        raise NotImplementedError

    def F_dp(self, R, p):
        """Derivative of ``F`` with respect to the exponent ``p``."""
        raise NotImplementedError


class StandardPotential(Potential):
    name = "standard"

    def F(self, R, p):
        return ((1.0 + R * R) ** (p / 2.0) - 1.0) / p

    def dF(self, R, p):
        return (1.0 + R * R) ** ((p - 2.0) / 2.0) * R

    def d2F(self, R, p):
        R2 = R * R
        return (1.0 + R2) ** ((p - 4.0) / 2.0) * (1.0 + (p - 1.0) * R2)

    def shear(self, R2, p):
        return (1.0 + R2) ** ((p - 2.0) / 2.0)

    def rank_one(self, R2, p):
        return -(2.0 - p) * (1.0 + R2) ** ((p - 4.0) / 2.0)

    def shear_dp(self, R2, p):
        return 0.5 * np.log1p(R2) * (1.0 + R2) ** ((p - 2.0) / 2.0)

    def F_dp(self, R, p):
        A = (1.0 + R * R) ** (p / 2.0)
        return (A * 0.5 * np.log1p(R * R) * p - (A - 1.0)) / p**2


STANDARD = StandardPotential()
POTENTIALS = {"standard": STANDARD}


def check_exponent(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 1.0)) or np.any(p > 2.0):
        raise InvalidInputError(f"exponent must lie in (1, 2], got range [{p.min()}, {p.max()}]")
    return p


def sym_part(B):
    B = np.asarray(B, dtype=float)
    return 0.5 * (B + np.swapaxes(B, 0, 1))


def frobenius_sq(B):
    B = np.asarray(B, dtype=float)
    return np.sum(B * B, axis=(0, 1))


def double_dot(A, B):
    return np.sum(np.asarray(A) * np.asarray(B), axis=(0, 1))


def delta_sym(d: int) -> np.ndarray:
    """``delta^sym_{jk,lm} = (delta_jl delta_km + delta_jm delta_kl) / 2``."""
    eye = np.eye(d)
    return 0.5 * (np.einsum("jl,km->jklm", eye, eye) + np.einsum("jm,kl->jklm", eye, eye))


def potential_value(B, p, potential: Potential = STANDARD):
    p = check_exponent(p)
    return potential.F(np.sqrt(frobenius_sq(sym_part(B))), p)


def stress(B, p, potential: Potential = STANDARD):
    """``S(B) = F'(|B^sym|) B^sym / |B^sym|``; ``S(0) = 0`` exactly."""
    p = check_exponent(p)
    Bs = sym_part(B)
    return potential.shear(frobenius_sq(Bs), p) * Bs


def stress_hessian(B, p, potential: Potential = STANDARD):
    """Hessian ``d^2 Phi / dB_jk dB_lm`` with shape ``(d, d, d, d) + B.shape[2:]``.

    Written as ``shear * delta^sym + rank_one * B (x) B`` so it stays regular
    as ``B^sym -> 0``, where it tends to ``F''(0) delta^sym``.
    """
    p = check_exponent(p)
    Bs = sym_part(B)
    d = Bs.shape[0]
    R2 = frobenius_sq(Bs)
    BB = np.einsum("jk...,lm...->jklm...", Bs, Bs)
    ds = delta_sym(d).reshape((d, d, d, d) + (1,) * np.ndim(R2))
    return potential.shear(R2, p) * ds + potential.rank_one(R2, p) * BB


def hessian_contraction(B, C, p, potential: Potential = STANDARD):
    """``sum H_{jk,lm}(B) C_jk C_lm`` without forming the Hessian.

    Uses ``H = shear * delta^sym + rank_one * B (x) B``.
    """
    p = check_exponent(p)
    Bs, Cs = sym_part(B), sym_part(C)
    R2 = frobenius_sq(Bs)
    return potential.shear(R2, p) * frobenius_sq(Cs) + potential.rank_one(R2, p) * double_dot(Bs, Cs) ** 2


def hessian_norms(H):
    """Operator norm (on symmetric matrices) and Frobenius norm of a Hessian array."""
    d = H.shape[0]
    rest = H.shape[4:]
    mats = np.moveaxis(H.reshape((d * d, d * d) + rest), (0, 1), (-2, -1))
    eig = np.linalg.eigvalsh(mats)
    op = np.max(np.abs(eig), axis=-1)
    frob = np.sqrt(np.sum(H * H, axis=(0, 1, 2, 3)))
    return op, frob


@dataclass(frozen=True)
class StressInequalityReport:
    """Ratio of each structural stress inequality's left side to its constant-free right side.

    ``None`` marks a skipped ratio (degenerate denominator).
    """

    stress_at_zero_exact: bool
    monotonicity: float | None      # (S(B)-S(C)):(B-C) / [(1+|B|^2+|C|^2)^((p-2)/2) |B-C|^2]
    coercivity: float | None        # S(B):B / [(1+|B|^2)^((p-2)/2) |B|^2]
    lipschitz: float | None         # |S(B)-S(C)| / [(1+|B|^2+|C|^2)^((p-2)/2) |B-C|]
    growth: float | None            # |S(B)| / [(1+|B|^2)^((p-2)/2) |B|]


def stress_inequality_ratios(B, C, p, potential: Potential = STANDARD):
    """Vectorised inequality ratios; skipped entries are NaN. Returns a dict of arrays."""
    p = check_exponent(p)
    Bs, Cs = sym_part(B), sym_part(C)
    SB, SC = stress(Bs, p, potential), stress(Cs, p, potential)
    nB2, nC2 = frobenius_sq(Bs), frobenius_sq(Cs)
    diff2 = frobenius_sq(Bs - Cs)
    wBC = (1.0 + nB2 + nC2) ** ((p - 2.0) / 2.0)
    wB = (1.0 + nB2) ** ((p - 2.0) / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mono = np.where(diff2 > 0, double_dot(SB - SC, Bs - Cs) / (wBC * diff2), np.nan)
        coer = np.where(nB2 > 0, double_dot(SB, Bs) / (wB * nB2), np.nan)
        lip = np.where(diff2 > 0, np.sqrt(frobenius_sq(SB - SC)) / (wBC * np.sqrt(diff2)), np.nan)
        grow = np.where(nB2 > 0, np.sqrt(frobenius_sq(SB)) / (wB * np.sqrt(nB2)), np.nan)
    d = Bs.shape[0]
    zero_exact = bool(np.all(stress(np.zeros((d, d)), float(np.ravel(p)[0]), potential) == 0.0))
    return {"stress_at_zero": zero_exact, "monotonicity": mono, "coercivity": coer, "lipschitz": lip, "growth": grow}


def check_stress_inequalities(B, C, p, potential: Potential = STANDARD) -> StressInequalityReport:
    r = stress_inequality_ratios(B, C, p, potential)

    def scalar(x):
        x = float(x)
        return None if math.isnan(x) else x

    return StressInequalityReport(
        r["stress_at_zero"], scalar(r["monotonicity"]), scalar(r["coercivity"]), scalar(r["lipschitz"]), scalar(r["growth"])
    )


@dataclass(frozen=True)
class GrowthReport:
    dS_dt: np.ndarray          # time derivative of the stress through p(t, x)
    dS_dx: np.ndarray          # spatial derivatives, shape (d_space,) + B.shape
    ratio_t: float | None      # |dS_dt| / [(1+|B|^2)^((p-1)/2) ln(1+|B|)]
    ratio_x: float | None
    zero_derivatives_vanish: bool


def growth_bound_check(B, p, grad_p, dt_p, potential: Potential = STANDARD) -> GrowthReport:
    """Explicit (t, x) derivatives of the stress induced by ``p(t, x)`` and their growth ratios.

    The ratios are empirical values of the constant in the logarithmic growth
    bound; they are ``None`` at ``B = 0`` where the right side vanishes.
    """
    p = float(check_exponent(p))
    Bs = sym_part(B)
    R2 = float(frobenius_sq(Bs))
    dS_dp = potential.shear_dp(R2, p) * Bs
    grad_p = np.atleast_1d(np.asarray(grad_p, dtype=float))
    dS_dt = float(dt_p) * dS_dp
    dS_dx = grad_p[:, None, None] * dS_dp[None]
    R = math.sqrt(R2)
    # d_t F(t,x,0) and d_j F(t,x,0) both factor through dF/dp at R = 0
    zero_ok = bool(potential.F_dp(0.0, p) == 0.0)
    if R == 0.0:
        return GrowthReport(dS_dt, dS_dx, None, None, zero_ok)
    rhs = (1.0 + R2) ** ((p - 1.0) / 2.0) * math.log1p(R)
    return GrowthReport(
        dS_dt,
        dS_dx,
        float(np.sqrt(np.sum(dS_dt**2)) / rhs),
        float(np.sqrt(np.sum(dS_dx**2)) / rhs),
        zero_ok,
    )


def _exponent_on_grid(grid, p, t):
    if isinstance(p, ExponentField):
        return p.on_grid(grid, t)
    return np.broadcast_to(np.asarray(p, dtype=float), grid.shape)


def divergence_expansion_terms(grid: PeriodicGrid, u, p, t=0.0):
    """The three terms of ``div S(Du) = L1 + L2 + L3`` for the standard stress.

    * ``L1 = (1/2) (1+|Du|^2)^((p-2)/2) (Lap u + grad div u)``
    * ``L2 = (p-2)/2 (1+|Du|^2)^((p-4)/2) Du grad(|Du|^2)``
    * ``L3 = (1/2) (1+|Du|^2)^((p-2)/2) ln(1+|Du|^2) Du grad p``
    """
    pv = check_exponent(_exponent_on_grid(grid, p, t))
    u = np.asarray(u, dtype=float)
    Du = sym_gradient(grid, u)
    R2 = frobenius_sq(Du)
    a = (1.0 + R2) ** ((pv - 2.0) / 2.0)
    L1 = 0.5 * a * (laplacian(grid, u) + grid.gradient(divergence(grid, u)))
    gR2 = grid.gradient(R2)
    L2 = 0.5 * (pv - 2.0) * (1.0 + R2) ** ((pv - 4.0) / 2.0) * np.einsum("ij...,j...->i...", Du, gR2)
    gp = grid.gradient(np.ascontiguousarray(pv))
    L3 = 0.5 * a * np.log1p(R2) * np.einsum("ij...,j...->i...", Du, gp)
    return L1, L2, L3


def stress_divergence_expansion(grid: PeriodicGrid, u, p, t=0.0):
    L1, L2, L3 = divergence_expansion_terms(grid, u, p, t)
    return L1 + L2 + L3


def direct_stress_divergence(grid: PeriodicGrid, u, p, t=0.0):
    """``div S(Du)`` computed by differentiating the pointwise stress."""
    pv = _exponent_on_grid(grid, p, t)
    return divergence(grid, stress(sym_gradient(grid, np.asarray(u, dtype=float)), pv))
