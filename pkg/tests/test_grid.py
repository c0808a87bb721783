import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plns.errors import InvalidInputError
from plns.grid import (
    PeriodicGrid,
    divergence,
    dtilde,
    gn_ratio,
    korn_ratio,
    lq_norm,
    random_band_limited,
    sym_gradient,
    w1q_norm,
)
from plns.snapshot import Snapshot, export_csv, read_snapshot, write_snapshot


def test_grid_rejects_bad_parameters():
    for args in ((4, 16), (2, 7), (2, 2)):
        with pytest.raises(InvalidInputError):
            PeriodicGrid(*args)
    with pytest.raises(InvalidInputError):
        PeriodicGrid(2, 16, "upwind")


def test_centered_strain_and_divergence_are_second_order():
    for n in (32, 64):
        g = PeriodicGrid(2, n)
        x = g.coordinates()
        u = np.stack([np.sin(x[0]), np.zeros(g.shape)])
        Du = sym_gradient(g, u)
        exact = np.zeros_like(Du)
        exact[0, 0] = np.cos(x[0])
        assert np.max(np.abs(Du - exact)) <= 0.7 * g.h**2
        assert np.max(np.abs(divergence(g, u) - np.cos(x[0]))) <= 0.7 * g.h**2
        assert np.array_equal(Du, np.swapaxes(Du, 0, 1))


def test_spectral_derivative_is_exact_for_trig_fields():
    g = PeriodicGrid(3, 16, "spectral")
    x = g.coordinates()
    f = np.sin(2 * x[0]) * np.cos(3 * x[2])
    G = g.gradient(f)
    assert np.allclose(G[0], 2 * np.cos(2 * x[0]) * np.cos(3 * x[2]), atol=1e-12)
    assert np.allclose(G[1], 0.0, atol=1e-12)
    assert np.allclose(G[2], -3 * np.sin(2 * x[0]) * np.sin(3 * x[2]), atol=1e-12)


def test_norm_examples():
    g = PeriodicGrid(1, 64)
    x = g.coordinates()[0]
    assert lq_norm(g, np.ones(g.shape), 2) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)
    assert lq_norm(g, np.sin(x), 2) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert lq_norm(g, np.sin(x), math.inf) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        lq_norm(g, x, 0.5)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_dtilde_of_zero_field(dim):
    g = PeriodicGrid(dim, 8)
    d = dtilde(g, np.zeros((dim,) + g.shape))
    assert np.all(d == 1.0)
    for q in (2.0, 2.4, 3.0):
        assert lq_norm(g, d, q) == pytest.approx((2 * math.pi) ** (dim / q), rel=1e-13)


def test_gagliardo_nirenberg_example():
    g = PeriodicGrid(1, 64, "spectral")
    u = np.sin(g.coordinates()[0])
    assert gn_ratio(g, u, 0, 1, math.inf, 2, 2, 0.5) == pytest.approx(math.pi**-0.5, rel=1e-12)
    assert math.isnan(gn_ratio(g, np.zeros(g.shape), 0, 1, math.inf, 2, 2, 0.5))
    with pytest.raises(InvalidInputError):
        gn_ratio(g, u, 0, 1, 4, 2, 2, 0.5)
    with pytest.raises(InvalidInputError):
        gn_ratio(g, u, 1, 1, 2, 2, 2, 0.0)


def test_korn_ratio():
    g = PeriodicGrid(2, 16, "spectral")
    x = g.coordinates()
    shear = np.stack([np.sin(x[1]), np.zeros(g.shape)])
    # grad u has one entry, Du splits it into two halves
    assert korn_ratio(g, shear) == pytest.approx(math.sqrt(2), rel=1e-12)
    assert math.isnan(korn_ratio(g, np.ones((2,) + g.shape)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_discrete_integration_by_parts(seed, dim):
    g = PeriodicGrid(dim, 16)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(g.shape)
    v = rng.standard_normal((dim,) + g.shape)
    lhs = g.integrate(f * divergence(g, v))
    rhs = -sum(g.integrate(g.diff(f, a) * v[a]) for a in range(dim))
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(lhs)) * g.size)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5).filter(lambda s: abs(s) > 1e-3))
def test_norms_are_absolutely_homogeneous(seed, scale):
    g = PeriodicGrid(2, 16, "spectral")
    u = random_band_limited(g, (2,), 3, np.random.default_rng(seed))
    for q in (2, 3, math.inf):
        assert lq_norm(g, scale * u, q) == pytest.approx(abs(scale) * lq_norm(g, u, q), rel=1e-12)
    assert w1q_norm(g, scale * u, 2.4) == pytest.approx(abs(scale) * w1q_norm(g, u, 2.4), rel=1e-12)


def test_random_band_limited_spectrum():
    g = PeriodicGrid(2, 32)
    f = random_band_limited(g, (), 3, np.random.default_rng(0), amplitude=0.5)
    assert np.max(np.abs(f)) == pytest.approx(0.5)
    spec = np.abs(np.fft.fftn(f))
    k = np.abs(np.fft.fftfreq(32, 1 / 32))
    outside = (k[:, None] > 3) | (k[None, :] > 3)
    assert np.max(spec[outside]) < 1e-10
    with pytest.raises(InvalidInputError):
        random_band_limited(g, (), 16, np.random.default_rng(0))


def test_snapshot_roundtrip_is_bit_exact(tmp_path):
    g = PeriodicGrid(2, 8)
    field = np.random.default_rng(2).standard_normal((3,) + g.shape) * 1e-300
    field[0, 0, 0] = math.pi
    path = tmp_path / "s.plns"
    write_snapshot(path, g, field, 0.1 + 0.2)
    snap = read_snapshot(path)
    assert snap.t == 0.1 + 0.2
    assert (snap.dim, snap.n, snap.components) == (2, 8, 3)
    assert np.array_equal(snap.data, field)
    write_snapshot(tmp_path / "t.plns", g, snap.data, snap.t)
    assert (tmp_path / "t.plns").read_bytes() == path.read_bytes()


def test_snapshot_rejects_corrupt_files(tmp_path):
    g = PeriodicGrid(1, 8)
    path = tmp_path / "s.plns"
    write_snapshot(path, g, np.zeros(g.shape), 0.0)
    raw = path.read_bytes()
    (tmp_path / "short.plns").write_bytes(raw[:-8])
    (tmp_path / "magic.plns").write_bytes(raw.replace(b"PLNS1", b"PLNS2", 1))
    (tmp_path / "nohdr.plns").write_bytes(b"PLNS1 1 8 1 0")
    for name in ("short", "magic", "nohdr"):
        with pytest.raises(InvalidInputError):
            read_snapshot(tmp_path / f"{name}.plns")
    with pytest.raises(InvalidInputError):
        write_snapshot(path, g, np.zeros(9), 0.0)


def test_export_csv():
    g = PeriodicGrid(1, 4)
    field = np.stack([np.arange(4.0), -np.arange(4.0)])
    buf = io.StringIO()
    export_csv(Snapshot(1, 4, 0.0, field), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x1,c0,c1"
    assert len(lines) == 5
    assert lines[2] == f"{g.h!r},1,-1"
