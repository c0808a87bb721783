"""Seeded verification suites behind ``plns check``.

Each suite returns CheckRow items: the worst value of a monitored quantity over
all samples, the bound it is held to, and the offending sample as JSON.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import g_phi, gij_ratio, gronwall_bound, i_phi, j_phi, lower_bound_ratios
from .errors import InvalidInputError
from .exponent import PresetExponent
from .grid import PeriodicGrid, random_band_limited, sym_gradient
from .potential import (
    frobenius_sq,
    hessian_contraction,
    hessian_norms,
    stress,
    stress_hessian,
    stress_inequality_ratios,
    sym_part,
)
from .snapshot import format_float

FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckRow:
    suite: str
    check: str
    samples: int
    worst: float
    bound: float
    relation: str        # "<=" or ">="
    worst_sample: dict

    @property
    def passed(self) -> bool:
        if math.isnan(self.worst):
            return False
        return self.worst <= self.bound if self.relation == "<=" else self.worst >= self.bound


CSV_HEADER = ["suite", "check", "samples", "worst", "relation", "bound", "passed", "worst_sample"]


def write_rows(rows, out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([
            r.suite, r.check, r.samples, format_float(r.worst), r.relation, format_float(r.bound),
            "pass" if r.passed else "FAIL", json.dumps(r.worst_sample, sort_keys=True),
        ])


def _tolist(x):
    return np.asarray(x, dtype=float).tolist()


def _worst(suite, name, values, bound, relation, describe):
    values = np.asarray(values, dtype=float)
    finite = np.where(np.isnan(values), -np.inf if relation == "<=" else np.inf, values)
    idx = int(np.argmax(finite) if relation == "<=" else np.argmin(finite))
    worst = float(values[idx]) if values.size else math.nan
    return CheckRow(suite, name, int(np.count_nonzero(~np.isnan(values))), worst, bound, relation, describe(idx))


# ------------------------------------------------------------------ potential


def _random_matrices(rng, count, d, log_scale=(-3.0, 3.0)):
    scale = 10.0 ** rng.uniform(*log_scale, size=count)
    return rng.standard_normal((d, d, count)) * scale


def potential_suite(samples: int = 10_000, seed: int = 0, p_range=(1.0, 2.0), dim: int = 3,
                    hessian_samples: int = 1000) -> list[CheckRow]:
    """Structural stress inequalities and Hessian checks on random matrices."""
    lo, hi = p_range
    if not 1.0 <= lo < hi <= 2.0:
        raise InvalidInputError(f"p range must satisfy 1 <= a < b <= 2, got {p_range}")
    rng = np.random.default_rng(seed)
    B = _random_matrices(rng, samples, dim)
    C = _random_matrices(rng, samples, dim)
    # a few samples with C = 0 or B = C exercise the degenerate branches
    C[..., : samples // 50] = 0.0
    p = rng.uniform(lo, hi, size=samples)
    p = np.where(p <= 1.0, np.nextafter(1.0, 2.0), p)
    r = stress_inequality_ratios(B, C, p)

    def sample(i):
        return {"p": float(p[i]), "B": _tolist(B[..., i]), "C": _tolist(C[..., i])}

    suite = "potential"
    rows = [
        CheckRow(suite, "stress_at_zero", samples, 0.0 if r["stress_at_zero"] else 1.0, 0.0, "<=", {}),
        _worst(suite, "monotonicity/(p-1)", r["monotonicity"] / (p - 1.0), 1.0 - 1e-10, ">=", sample),
        _worst(suite, "coercivity/(p-1)", r["coercivity"] / (p - 1.0), 1.0 - 1e-10, ">=", sample),
        _worst(suite, "lipschitz", r["lipschitz"], 2.0 + 1e-10, "<=", sample),
        _worst(suite, "growth", r["growth"], 2.0 + 1e-10, "<=", sample),
    ]

    m = min(hessian_samples, samples)
    Bh = _random_matrices(rng, m, dim, (-2.0, 2.0))
    Ch = _random_matrices(rng, m, dim, (-2.0, 2.0))
    ph = p[:m]
    H = stress_hessian(Bh, ph)
    fd = np.empty_like(H)
    for l in range(dim):
        for k in range(dim):
            E = np.zeros((dim, dim, 1))
            E[l, k] = FD_STEP
            fd[:, :, l, k] = (stress(Bh + E, ph) - stress(Bh - E, ph)) / (2.0 * FD_STEP)
    fd_err = np.sqrt(np.sum((H - fd) ** 2, axis=(0, 1, 2, 3)) / np.sum(H * H, axis=(0, 1, 2, 3)))
    R2 = frobenius_sq(sym_part(Bh))
    a = (1.0 + R2) ** ((ph - 2.0) / 2.0)
    closed = hessian_contraction(Bh, Ch, ph)
    full = np.einsum("abjk...,ab...,jk...->...", H, sym_part(Ch), sym_part(Ch))
    op, _ = hessian_norms(H)

    def hsample(i):
        return {"p": float(ph[i]), "B": _tolist(Bh[..., i]), "C": _tolist(Ch[..., i])}

    rows += [
        _worst(suite, "hessian_fd_relative_error", fd_err, 1e-6, "<=", hsample),
        _worst(suite, "hessian_contraction/lower_bound",
               closed / ((ph - 1.0) * a * frobenius_sq(sym_part(Ch))), 1.0 - 1e-12, ">=", hsample),
        _worst(suite, "hessian_paths_relative_difference", np.abs(closed - full) / np.abs(full), 1e-12, "<=", hsample),
        _worst(suite, "hessian_operator_norm/weight", op / a, 1.0 + 1e-12, "<=", hsample),
    ]
    return rows


# ------------------------------------------------------------------ functionals


def _random_exponent(rng):
    base = rng.uniform(1.3, 1.95)
    amp = rng.uniform(0.0, min(base - 1.2, 2.0 - base))
    return PresetExponent("sine", {"base": base, "amplitude": amp, "wavenumber": float(rng.integers(1, 3))})


def inequality_suite(samples: int = 100, seed: int = 0, dim: int = 2, n: int = 16, kmax: int = 3) -> list[CheckRow]:
    """Functional identities, lower-bound ratios and the GIJ ratio on random band-limited fields."""
    rng = np.random.default_rng(seed)
    grid = PeriodicGrid(dim, n, scheme="spectral")
    cols = {k: [] for k in ("i_identity", "j_identity", "i_ratio", "j_ratio", "g_ratio", "gij", "min_functional")}
    meta = []
    for _ in range(samples):
        amp_u = 10.0 ** rng.uniform(-1.0, 1.0)
        u = random_band_limited(grid, (dim,), kmax, rng, amp_u)
        v = random_band_limited(grid, (dim,), kmax, rng, 10.0 ** rng.uniform(-1.0, 1.0))
        p = _random_exponent(rng)
        pv = p.on_grid(grid, 0.0)
        p_minus = float(pv.min())
        I = i_phi(grid, u, pv)
        J = j_phi(grid, u, v, pv)
        Gi = g_phi(grid, u, sym_gradient(grid, u), pv)
        Gj = g_phi(grid, u, v, pv)
        rep = lower_bound_ratios(grid, u, v, pv, p_minus=p_minus)
        q = 3.0 * p_minus / (p_minus + 1.0)
        cols["i_identity"].append(abs(I - Gi) / max(abs(I), 1e-300))
        cols["j_identity"].append(abs(J - Gj) / max(abs(J), 1e-300))
        for key, val in (("i_ratio", rep.i_ratio), ("j_ratio", rep.j_ratio), ("g_ratio", rep.g_ratio)):
            cols[key].append(math.nan if val is None else val / rep.gamma1)
        cols["gij"].append(gij_ratio(grid, u, v, pv, p_minus, q) * math.sqrt(p_minus - 1.0))
        cols["min_functional"].append(min(I, J, Gi, Gj))
        meta.append({"params": p.params, "amplitude_u": amp_u, "p_minus": p_minus})

    def sample(i):
        return meta[i]

    s = "inequalities"
    return [
        _worst(s, "i_phi_vs_g_phi_relative", cols["i_identity"], 1e-12, "<=", sample),
        _worst(s, "j_phi_vs_g_phi_relative", cols["j_identity"], 1e-12, "<=", sample),
        _worst(s, "i_ratio/(p_minus-1)", cols["i_ratio"], 1.0 - 1e-12, ">=", sample),
        _worst(s, "j_ratio/(p_minus-1)", cols["j_ratio"], 1.0 - 1e-12, ">=", sample),
        _worst(s, "g_ratio/(p_minus-1)", cols["g_ratio"], 1.0 - 1e-12, ">=", sample),
        _worst(s, "gij_ratio*sqrt(p_minus-1)", cols["gij"], 1.0 + 1e-12, "<=", sample),
        _worst(s, "min_functional", cols["min_functional"], -1e-10, ">=", sample),
    ]


# ------------------------------------------------------------------ Gronwall


def _rk4(h_of_t, c0, alpha, f0, t):
    f = np.empty_like(t)
    f[0] = f0

    def rhs(s, y):
        return h_of_t(s) + c0 * max(y, 0.0) ** (1.0 + alpha)

    for i in range(t.size - 1):
        s, dt, y = t[i], t[i + 1] - t[i], f[i]
        k1 = rhs(s, y)
        k2 = rhs(s + dt / 2, y + dt / 2 * k1)
        k3 = rhs(s + dt / 2, y + dt / 2 * k2)
        k4 = rhs(s + dt, y + dt * k3)
        f[i + 1] = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return f


def gronwall_instance(rng, dt: float = 1e-4, t_end: float = 1.0):
    """Random ``(c0, alpha, f0, h)`` with ``h`` piecewise constant on 1-4 pieces."""
    c0 = float(rng.uniform(0.1, 2.0))
    alpha = float(rng.uniform(0.5, 2.0))
    f0 = float(rng.uniform(0.0, 1.0))
    pieces = int(rng.integers(1, 5))
    breaks = np.sort(rng.uniform(0.0, t_end, size=pieces - 1))
    levels = rng.uniform(0.0, 2.0, size=pieces)
    t = np.linspace(0.0, t_end, int(round(t_end / dt)) + 1)
    h = levels[np.searchsorted(breaks, t, side="right")]
    return c0, alpha, f0, t, h


def gronwall_suite(instances: int = 20, seed: int = 0, dt: float = 1e-4) -> list[CheckRow]:
    """Bound versus an RK4 solution of ``f' = h + c0 f^(1+alpha)`` below the horizon.

    The ODE sees ``h`` as the linear interpolant of its grid samples, the same
    function the bound integrates by the trapezoid rule.
    """
    rng = np.random.default_rng(seed)
    slack, meta = [], []
    for _ in range(instances):
        c0, alpha, f0, t, h = gronwall_instance(rng, dt)
        gb = gronwall_bound(f0, c0, alpha, h, t)
        below = (t > 0) & (t <= gb.horizon)
        f = _rk4(lambda s: float(np.interp(s, t, h)), c0, alpha, f0, t[: np.count_nonzero(t <= gb.horizon)])
        f = np.concatenate([f, np.full(t.size - f.size, np.inf)])
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(gb.bound[below] > 0, (gb.bound[below] - f[below]) / gb.bound[below], 0.0)
        i = int(np.argmin(rel))
        slack.append(float(rel[i]))
        meta.append({"c0": c0, "alpha": alpha, "f0": f0, "h_levels": sorted(set(h.tolist())),
                     "horizon": gb.horizon, "t": float(t[below][i])})

    probes = np.array([0.1, 0.5, 0.9])
    exact = gronwall_bound(1.0, 1.0, 1.0, np.zeros(probes.size + 1), np.concatenate([[0.0], probes]))
    errs = [abs(float(b) - 1.0 / (1.0 - tp)) for b, tp in zip(exact.bound[1:], probes)]
    j = int(np.argmax(errs))
    return [
        _worst("gronwall", "relative_slack_below_horizon", slack, -1e-6, ">=", lambda i: meta[i]),
        CheckRow("gronwall", "closed_form_error", len(probes), errs[j], 1e-9, "<=", {"t": float(probes[j])}),
    ]


SUITES = {"potential": potential_suite, "inequalities": inequality_suite, "gronwall": gronwall_suite}
