"""Acceptance criteria, one test per criterion, each with its runtime budget."""

import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import newtonian_rhs, observed_orders
from plns.checks import gronwall_instance
from plns.cli import main
from plns.diagnostics import blowup_indicators, density_envelope, g_phi, gronwall_bound, i_phi, j_phi, lower_bound_ratios
from plns.exponent import ConstantExponent, PresetExponent
from plns.galerkin import FieldSpec, GalerkinModel, SimConfig, make_state, rhs_operator, run, transport_step
from plns.grid import PeriodicGrid, random_band_limited, sym_gradient
from plns.potential import (
    frobenius_sq,
    hessian_contraction,
    stress,
    stress_divergence_expansion,
    direct_stress_divergence,
    stress_hessian,
    stress_inequality_ratios,
    sym_part,
)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


def _matrices(rng, count, d, lo=-3.0, hi=3.0):
    return rng.standard_normal((d, d, count)) * 10.0 ** rng.uniform(lo, hi, size=count)


def test_criterion_01_stress_law_properties():
    with Budget(10):
        rng = np.random.default_rng(2024)
        count = 10_000
        B, C = _matrices(rng, count, 3), _matrices(rng, count, 3)
        p = rng.uniform(1.0, 2.0, size=count)
        p[p == 1.0] = 1.5
        r = stress_inequality_ratios(B, C, p)
        assert r["stress_at_zero"]
        assert np.all(stress(np.zeros((3, 3, count)), p) == 0.0)
        for key in ("monotonicity", "coercivity"):
            assert np.all(r[key] >= (p - 1.0) * (1.0 - 1e-10)), key
        for key in ("lipschitz", "growth"):
            assert np.all(r[key] <= 2.0 + 1e-10), key


def test_criterion_02_hessian_consistency():
    with Budget(10):
        rng = np.random.default_rng(99)
        count, d, step = 1000, 3, 1e-5
        B, C = _matrices(rng, count, d, -2, 2), _matrices(rng, count, d, -2, 2)
        p = rng.uniform(1.0 + 1e-9, 2.0, size=count)
        H = stress_hessian(B, p)
        fd = np.empty_like(H)
        for l in range(d):
            for m in range(d):
                E = np.zeros((d, d, 1))
                E[l, m] = step
                fd[:, :, l, m] = (stress(B + E, p) - stress(B - E, p)) / (2 * step)
        rel = np.sqrt(np.sum((H - fd) ** 2, axis=(0, 1, 2, 3)) / np.sum(H**2, axis=(0, 1, 2, 3)))
        assert rel.max() <= 1e-6
        weight = (1.0 + frobenius_sq(sym_part(B))) ** ((p - 2.0) / 2.0)
        lower = (p - 1.0) * weight * frobenius_sq(sym_part(C))
        assert np.all(hessian_contraction(B, C, p) >= lower * (1 - 1e-12))


def _manufactured(grid):
    x = grid.coordinates()
    if grid.dim == 1:
        return np.array([np.sin(x[0]) + 0.5 * np.cos(2 * x[0])])
    return np.stack([np.sin(x[0]) * np.cos(x[1]), 0.5 * np.cos(x[0] + 2 * x[1])])


def test_criterion_03_divergence_expansion_order():
    with Budget(30):
        p = PresetExponent("product", {"base": 1.6, "amplitude": 0.2})
        for d in (1, 2):
            errors = []
            for n in (32, 64, 128):
                grid = PeriodicGrid(d, n)
                u = _manufactured(grid)
                diff = stress_divergence_expansion(grid, u, p) - direct_stress_divergence(grid, u, p)
                errors.append(np.max(np.abs(diff)))
            coarse, fine = observed_orders(errors)
            print(f"d={d} orders {coarse:.3f} {fine:.3f}")
            assert fine >= 1.9
            assert coarse >= 1.5


def test_criterion_04_mass_conservation():
    with Budget(30):
        rng = np.random.default_rng(4)
        grid = PeriodicGrid(2, 32)
        rho = 1.0 + random_band_limited(grid, (), 3, rng, 0.3)
        u = random_band_limited(grid, (2,), 3, rng, 1.0)
        dt = 0.4 * grid.h / np.max(np.sum(np.abs(u), axis=0))
        mass0 = math.fsum((grid.cell_volume * rho).ravel())
        for _ in range(10_000):
            rho = transport_step(grid, rho, u, dt).rho
        mass = math.fsum((grid.cell_volume * rho).ravel())
        assert abs(mass - mass0) / mass0 <= 1e-12
        assert rho.min() > 0


@pytest.fixture(scope="module")
def energy_run():
    cfg = SimConfig(dim=1, n=128, dt=1e-3, t_end=1.0, modes=16, gamma=1.5, exponent=ConstantExponent(1.8),
                    rho0=FieldSpec("sine", (1.0,), amplitude=0.1),
                    u0=FieldSpec("sine", (0.0,), amplitude=0.05, wavenumber=2))
    start = time.perf_counter()
    result = run(cfg, keep_states=False)
    return cfg, result, time.perf_counter() - start


def test_criterion_05_energy_inequality(energy_run):
    cfg, result, elapsed = energy_run
    assert elapsed < 60
    assert result.completed
    recs = result.records
    E = np.array([r.energy for r in recs])
    t = np.array([r.t for r in recs])
    D = np.array([r.dissipation_rate for r in recs])
    assert np.all(E[1:] <= E[:-1] + 1e-10)
    dissipated = np.concatenate([[0.0], np.cumsum(0.5 * (D[1:] + D[:-1]) * np.diff(t))])
    h = 2 * math.pi / cfg.n
    assert np.all(E + dissipated <= E[0] * (1 + 5 * (cfg.dt + h)))


def test_criterion_06_density_envelope(energy_run):
    cfg, result, _ = energy_run
    recs = result.records
    h = 2 * math.pi / cfg.n
    env = density_envelope([r.t for r in recs], [r.div_u_linf for r in recs],
                           [r.rho_min for r in recs], [r.rho_linf for r in recs], 10 * (cfg.dt + h))
    assert env.ok


def test_criterion_07_newtonian_reduction():
    with Budget(10):
        rng = np.random.default_rng(7)
        cfg = SimConfig(dim=2, n=16, dt=1e-3, t_end=1.0, modes=26, gamma=2.0, exponent=ConstantExponent(2.0))
        model = GalerkinModel(cfg)
        basis, grid = model.basis, model.grid
        labels = list(zip(map(tuple, basis.wavevectors), basis.parity, basis.component))
        x = grid.coordinates()
        for _ in range(100):
            rho = 1.0 + random_band_limited(grid, (), 3, rng, 0.5)
            c = rng.standard_normal(basis.size) * 10.0 ** rng.uniform(-1, 1)
            f = rng.standard_normal((2,) + grid.shape)
            state = make_state(basis, 0.0, rho, c)
            got = rhs_operator(state, basis, 2.0, f, 2.0)
            ref = newtonian_rhs(labels, x, grid.h, rho, state.velocity, f, 2.0)
            assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def _rk4(h_of_t, c0, alpha, f0, t):
    f = [f0]
    for a, b in zip(t[:-1], t[1:]):
        dt, y = b - a, f[-1]

        def g(s, z):
            return h_of_t(s) + c0 * z ** (1 + alpha)

        k1 = g(a, y)
        k2 = g(a + dt / 2, y + dt / 2 * k1)
        k3 = g(a + dt / 2, y + dt / 2 * k2)
        k4 = g(b, y + dt * k3)
        f.append(y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    return np.array(f)


def test_criterion_08_gronwall_suite():
    with Budget(10):
        rng = np.random.default_rng(8)
        for _ in range(20):
            c0, alpha, f0, t, h = gronwall_instance(rng)
            gb = gronwall_bound(f0, c0, alpha, h, t)
            keep = t <= gb.horizon
            f = _rk4(lambda s: float(np.interp(s, t, h)), c0, alpha, f0, t[keep])
            bound = gb.bound[keep]
            slack = np.where(bound > 0, (bound - f) / np.where(bound > 0, bound, 1.0), 0.0)
            assert slack.min() >= -1e-6
        probes = np.array([0.0, 0.1, 0.5, 0.9])
        gb = gronwall_bound(1.0, 1.0, 1.0, np.zeros(4), probes)
        assert np.allclose(gb.bound[1:], 1.0 / (1.0 - probes[1:]), rtol=0, atol=1e-9)


def test_criterion_09_functional_identities():
    with Budget(20):
        rng = np.random.default_rng(9)
        p = PresetExponent("sine", {"base": 1.7, "amplitude": 0.2, "wavenumber": 1})
        cfg = SimConfig(dim=2, n=16, dt=1e-3, t_end=1.0, modes=40, exponent=p)
        model = GalerkinModel(cfg)
        basis, grid = model.basis, model.grid
        pv = model.exponent_on_grid(0.0)
        p_minus = float(pv.min())
        for _ in range(100):
            rho = 1.0 + random_band_limited(grid, (), 3, rng, 0.5)
            state = make_state(basis, 0.0, rho, rng.standard_normal(basis.size) * 10.0 ** rng.uniform(-1, 1))
            u = state.velocity
            du_dt = basis.velocity(model.velocity_rate(state))
            I, J = i_phi(grid, u, pv), j_phi(grid, u, du_dt, pv)
            assert abs(I - g_phi(grid, u, sym_gradient(grid, u), pv)) <= 1e-12 * abs(I)
            assert abs(J - g_phi(grid, u, du_dt, pv)) <= 1e-12 * abs(J)
            rep = lower_bound_ratios(grid, u, du_dt, pv, p_minus=p_minus)
            for ratio in (rep.i_ratio, rep.j_ratio, rep.g_ratio):
                assert ratio is not None and ratio >= (p_minus - 1.0) * (1 - 1e-12)


trajectories = st.integers(1, 40).flatmap(lambda k: st.tuples(
    st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k),
    st.lists(st.floats(0.0, 1e3), min_size=k, max_size=k),
    st.lists(st.floats(0.0, 1e3), min_size=k, max_size=k),
    st.lists(st.floats(0.0, 1e2), min_size=k, max_size=k),
))


@settings(max_examples=100, deadline=None)
@given(trajectories)
def test_criterion_10_blowup_monotone(traj):
    steps, rho, g3, ginf = traj
    times = np.cumsum(steps)
    b1, b2 = blowup_indicators(times, rho, g3, ginf)
    assert np.all(np.diff(b1) >= 0) and np.all(np.diff(b2) >= 0)


def test_criterion_10_blowup_stress_run(tmp_path, stress_config_text):
    with Budget(60):
        cfg = tmp_path / "stress.cfg"
        cfg.write_text(stress_config_text)
        code = main(["run", str(cfg), "--output-dir", str(tmp_path / "out")])
        assert code == 2
        summary = json.loads((tmp_path / "out" / "run.json").read_text())
        assert summary["stop_reason"] in ("density-floor", "indicator-overflow")
        with open(tmp_path / "out" / "diagnostics.csv") as fh:
            rows = list(csv.DictReader(fh))
        b1 = np.array([float(r["blowup1"]) for r in rows[-10:]])
        assert len(rows) >= 10 and np.all(np.diff(b1) > 0)


def test_criterion_11_determinism(tmp_path, small_run_text):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(small_run_text)
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
        outputs.append(out)
    assert (outputs[0] / "diagnostics.csv").read_bytes() == (outputs[1] / "diagnostics.csv").read_bytes()
    snaps = sorted(p.name for p in outputs[0].glob("snapshot_*.plns"))
    assert snaps and all((outputs[0] / s).read_bytes() == (outputs[1] / s).read_bytes() for s in snaps)
    for suite in ("potential", "inequalities", "gronwall"):
        reports = []
        for k in range(2):
            path = tmp_path / f"{suite}{k}.csv"
            assert main(["check", suite, "--seed", "7", "--output", str(path)]) == 0
            reports.append(Path(path).read_bytes())
        assert reports[0] == reports[1], suite
