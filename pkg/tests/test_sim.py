import io
import json
import math

import numpy as np
import pytest

from dampguide import sim
from dampguide.errors import CflViolation, ConfigError, DegenerateWindow

# int |grad u0|^2 for the default Gaussian datum, by adaptive quadrature of its separable factors
GAUSSIAN_ENERGY = 4.921784726621309


def small(**kw):
    base = dict(L=40.0, Nx=800, Ny=16, T=20.0)
    base.update(kw)
    return sim.SimConfig(**base)


def test_default_time_step_respects_cfl():
    cfg = sim.SimConfig()
    assert cfg.dt == pytest.approx(0.4 * min(cfg.dx, cfg.dy))


def test_cfl_violation_is_a_config_error():
    with pytest.raises(CflViolation) as info:
        small(dt=1.0)
    assert isinstance(info.value, ConfigError)
    assert info.value.field == "dt"


def test_truncation_rule():
    with pytest.raises(ConfigError) as info:
        small(L=20.0)
    assert info.value.field == "L"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        sim.SimConfig.from_dict({"L": 40.0, "T": 20.0, "speed": 2})


def test_config_json_round_trip(tmp_path):
    cfg = small(delta=1.5, initial={"width": 0.7})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert sim.SimConfig.from_json(path) == cfg


def test_zero_data_stays_zero():
    cfg = small(T=2.0)
    z = np.zeros((cfg.Nx + 1, cfg.Ny + 1), dtype=complex)
    state = sim.initial_state(cfg, z, z)
    for _ in range(20):
        state = sim.step(state, cfg)
    assert not state.u.any() and not state.v.any()


def test_blowup_detected():
    cfg = small(T=2.0)
    u0 = np.full((cfg.Nx + 1, cfg.Ny + 1), 2e12, dtype=complex)
    with pytest.raises(sim.NumericalBlowup):
        sim.step(sim.initial_state(cfg, u0), cfg)


def _standing_mode_drift(Nx, Ny):
    cfg = small(a=0.0, Nx=Nx, Ny=Ny, T=10.0, check_support=False)
    X, Y = np.meshgrid(cfg.x, cfg.y, indexing="ij")
    u0 = np.cos(np.pi * Y / cfg.ell) * np.exp(-(X / 4) ** 2)
    tr = sim.run(cfg, u0=u0)
    assert sim.energy_balance_residual(tr) == pytest.approx(
        np.ptp(tr.E_total) / tr.E_total[0], rel=1e-12)
    return np.abs(tr.E_total - tr.E_total[0]).max() / tr.E_total[0]


def test_undamped_energy_drift_is_second_order():
    # the sampled energy uses the averaged half-step velocity: an O(dt^2) oscillation
    coarse = _standing_mode_drift(800, 24)
    fine = _standing_mode_drift(1600, 48)
    assert coarse < 5e-4
    assert coarse / fine > 3.5


def test_damped_energy_decreases():
    tr = sim.run(small(T=10.0))
    dE = np.diff(tr.E_total)
    assert np.all(dE <= 1e-12 * tr.E_total[0])
    assert np.all(dE[tr.times[1:] > 2.0] < 0)
    assert tr.boundary_dissipation[-1] > 0


def test_energy_balance_short_run():
    tr = sim.run(small())
    assert sim.energy_balance_residual(tr) < 5e-3


def test_support_stays_inside_light_cone():
    cfg = small(Nx=3200, T=30.0, initial={"width": 0.7})
    assert sim.run(cfg).support_leak <= 1e-10


def test_patch_energy():
    cfg = small()
    u = np.zeros((cfg.Nx + 1, cfg.Ny + 1), dtype=complex)
    v = np.ones_like(u)
    assert sim.total_energy(u, v, cfg) == pytest.approx(2 * cfg.L * cfg.ell)


def test_local_energy_without_weight_is_total():
    cfg = small()
    u, v = cfg.initial.fields(cfg.x, cfg.y, cfg.ell)
    v = 0.3 * u
    assert sim.local_energy(u, v, cfg, 0.0) == pytest.approx(sim.total_energy(u, v, cfg))
    assert sim.local_energy(u, v, cfg, 2.5) < sim.total_energy(u, v, cfg)


def test_gaussian_energy_against_quadrature():
    cfg = small(Nx=3200, Ny=64)
    u0, _ = cfg.initial.fields(cfg.x, cfg.y, cfg.ell)
    assert sim.gradient_energy(u0, cfg) == pytest.approx(GAUSSIAN_ENERGY, rel=2e-4)


def test_section_and_boundary_averages():
    cfg = small()
    X, Y = np.meshgrid(cfg.x, cfg.y, indexing="ij")
    f = np.exp(-X ** 2)
    const = np.full_like(X, 3.0)
    assert np.allclose(sim.section_average(const, cfg), 3.0)
    assert np.allclose(sim.boundary_average(const), 3.0)
    assert np.abs(sim.section_average(f * np.cos(np.pi * Y / cfg.ell), cfg)).max() < 1e-14
    lin = f * Y / cfg.ell
    assert np.allclose(sim.section_average(lin, cfg), f[:, 0] / 2)
    assert np.allclose(sim.boundary_average(lin), f[:, 0] / 2)


def test_transverse_projection_keeps_low_modes():
    cfg = small(Ny=32)
    X, Y = np.meshgrid(cfg.x, cfg.y, indexing="ij")
    low = np.cos(3 * np.pi * Y / cfg.ell) * np.exp(-X ** 2)
    high = np.cos(30 * np.pi * Y / cfg.ell) * np.exp(-X ** 2)
    assert np.allclose(sim.transverse_projection(low, cfg), low, atol=1e-12)
    assert np.abs(sim.transverse_projection(high, cfg)).max() < 1e-12
    p = sim.transverse_projection(low + high, cfg)
    assert np.allclose(sim.transverse_projection(p, cfg), p, atol=1e-12)


def test_heat_kernel_value():
    assert sim.heat_kernel(1.0, 0.0, 1.0) == pytest.approx((4 * math.pi) ** -0.5)


def test_heat_reference_methods_agree():
    cfg = small(Nx=1600)
    w0 = np.exp(-cfg.x ** 2)
    for t in (1.0, 5.0):
        a = sim.heat_reference(cfg, w0, t, "fourier")
        b = sim.heat_reference(cfg, w0, t, "quadrature")
        assert np.abs(a[0] - b[0]).max() < 1e-8
        assert np.abs(a[2] - b[2]).max() < 1e-8
    with pytest.raises(ValueError):
        sim.heat_reference(cfg, w0, 0.0)


def test_heat_reference_narrow_bump_asymptotics():
    cfg = small(Nx=1600)
    w0 = np.exp(-(cfg.x / 0.2) ** 2)
    mass = np.sum(w0) * cfg.dx
    t = 15.0
    v = sim.heat_reference(cfg, w0, t)[0]
    a_ups = cfg.a * cfg.upsilon
    expect = math.sqrt(a_ups / (4 * math.pi * t)) * mass
    assert v[cfg.Nx // 2].real == pytest.approx(expect, rel=1e-3)


def test_decay_fit_identity():
    t = np.linspace(1.0, 200.0, 400)
    fit = sim.decay_fit(t, t ** -1.5, (20.0, 120.0))
    assert fit.slope == pytest.approx(-1.5, abs=1e-6)
    assert fit.residual < 1e-10
    with pytest.raises(DegenerateWindow):
        sim.decay_fit(t[:5], t[:5] ** -1.5, (0.0, 10.0))


def test_snapshot_round_trip():
    u = (np.arange(12) + 1j * np.arange(12)[::-1]).reshape(3, 4)
    buf = io.BytesIO()
    sim.write_snapshot(buf, u, 2.5)
    buf.seek(0)
    v, t = sim.read_snapshot(buf)
    assert t == 2.5 and np.array_equal(u, v)


def test_runs_are_deterministic():
    cfg = small(T=8.0)
    a, b = io.StringIO(), io.StringIO()
    sim.run(cfg).write_csv(a)
    sim.run(cfg).write_csv(b)
    assert a.getvalue() == b.getvalue()
