"""Leapfrog simulation of the damped wave equation on a truncated strip.

Solves ``u_tt - Laplace u = 0`` on ``[-L, L] x (0, ell)`` with
``d_nu u + a u_t = 0`` on ``y = 0`` and ``y = ell``.  The x-edges carry
homogeneous Neumann conditions; finite speed of propagation keeps them out of
play as long as ``L >= R0 + T + 1``.

Layout: ``u`` lives on the nodes ``(x_i, y_j)`` at integer times, ``v = u_t`` at
half times.  Both directions use trapezoid weights, which make the discrete
Laplacian (ghost-point boundary rows included) self-adjoint.  On the damped
rows the ghost value uses the time-centred velocity, so the velocity update is
a pointwise implicit relation and the discrete energy identity holds exactly
for the staggered energy ``|v^{n+1/2}|^2 + Re D(u^{n+1}, u^n)``.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.fft as sfft

from ._kernels import leapfrog_step
from .errors import CflViolation, ConfigError, DegenerateWindow, NumericalBlowup
from .transverse import SectionGeometry

BLOWUP = 1e12
PHASES = {"1": 1.0 + 0j, "i": 1j}


def smooth_cutoff(s, s1: float, s2: float):
    """C-infinity profile equal to 1 for ``s <= s1`` and 0 for ``s >= s2``."""
    s = np.asarray(s, dtype=float)
    t = np.clip((s - s1) / (s2 - s1), 0.0, 1.0)

    def f(x):
        out = np.zeros_like(x)
        m = x > 0
        out[m] = np.exp(-1.0 / x[m])
        return out

    return f(1.0 - t) / (f(1.0 - t) + f(t))


def compact_bump(x, R0: float):
    """``exp(1 - 1/(1 - (x/R0)^2))`` inside ``|x| < R0``, zero outside."""
    x = np.asarray(x, dtype=float)
    r = (x / R0) ** 2
    out = np.zeros_like(x)
    m = r < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - r[m]))
    return out


@dataclass
class InitialData:
    """Separable data ``u0 = f(x) g(y)``, ``u1 = c1 f(x) g(y)``.

    ``f`` is a Gaussian of width ``width`` times a smooth cutoff that vanishes
    for ``|x| >= R0`` (``kind="gaussian"``), or the plain compact bump
    (``kind="bump"``).  ``g(y) = sum_k y_profile[k] cos(k pi y / ell)``.
    """

    kind: str = "gaussian"
    R0: float = 4.0
    width: float = 1.0
    amplitude: float = 1.0
    y_profile: list = field(default_factory=lambda: [1.0, 0.5])
    y_bump: float | None = None
    u1_factor: float = 0.0

    def x_profile(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            cut = smooth_cutoff(np.abs(x) / self.R0, 0.5, 1.0)
            return self.amplitude * np.exp(-(x / self.width) ** 2) * cut
        if self.kind == "bump":
            return self.amplitude * compact_bump(x, self.R0)
        raise ConfigError(f"unknown initial data kind {self.kind!r}", field="initial.kind")

    def y_shape(self, y, ell: float):
        y = np.asarray(y, dtype=float)
        if self.y_bump is not None:
            return compact_bump(y - 0.5 * ell, self.y_bump)
        g = np.zeros_like(y)
        for k, c in enumerate(self.y_profile):
            g = g + c * np.cos(k * math.pi * y / ell)
        return g

    def fields(self, x, y, ell):
        base = np.outer(self.x_profile(x), self.y_shape(y, ell)).astype(complex)
        return base, self.u1_factor * base


@dataclass
class SimConfig:
    a: float = 1.0
    ell: float = math.pi
    L: float = 160.0
    Nx: int = 3200
    Ny: int = 48
    dt: float | None = None
    T: float = 130.0
    delta: float = 2.5
    initial: InitialData = field(default_factory=InitialData)
    sample_dt: float = 0.25
    filter_band: tuple = (0.25, 1.0)
    phase_convention: str | None = None
    check_support: bool = True
    y_resolved: float = 0.5

    def __post_init__(self):
        if isinstance(self.initial, dict):
            self.initial = InitialData(**self.initial)
        self.filter_band = tuple(self.filter_band)
        if self.dt is None:
            self.dt = 0.4 * min(self.dx, self.dy)
        self.validate()

    @property
    def geom(self) -> SectionGeometry:
        return SectionGeometry(self.ell)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.Nx

    @property
    def dy(self) -> float:
        return self.ell / self.Ny

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.Nx + 1)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.ell, self.Ny + 1)

    @property
    def upsilon(self) -> float:
        return 2.0 / self.ell

    def validate(self):
        checks = [
            (self.a >= 0, "a", "damping must be nonnegative"),
            (self.ell > 0, "ell", "section length must be positive"),
            (self.Nx >= 4 and self.Ny >= 4, "Nx", "grid too coarse"),
            (self.T > 0, "T", "final time must be positive"),
            (self.delta >= 0, "delta", "weight exponent must be nonnegative"),
            (self.sample_dt > 0, "sample_dt", "sampling interval must be positive"),
            (0 < self.y_resolved <= 1, "y_resolved", "must lie in (0, 1]"),
            (self.filter_band[0] < self.filter_band[1], "filter_band", "need s1 < s2"),
            (self.phase_convention in (None, *PHASES), "phase_convention",
             f"must be one of {sorted(PHASES)} or null"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigError(msg, field=name)
        if self.L < self.initial.R0 + self.T + 1:
            raise ConfigError(
                f"L={self.L} < R0 + T + 1 = {self.initial.R0 + self.T + 1}", field="L")
        if not (0 < self.dt <= 0.5 * min(self.dx, self.dy) * (1 + 1e-12)):
            raise CflViolation(
                f"dt={self.dt:g} exceeds 0.5*min(dx,dy)={0.5 * min(self.dx, self.dy):g}")

    def refined(self, factor: int = 2) -> "SimConfig":
        """Same run with grid and time step refined by ``factor``."""
        return replace(self, Nx=self.Nx * factor, Ny=self.Ny * factor,
                       dt=self.dt / factor)

    # --- JSON round trip -------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_band"] = list(self.filter_band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}", field="config")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc), field="initial") from exc

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}", field="config") from exc
        return cls.from_dict(data)


@dataclass
class WaveState:
    u: np.ndarray  # u at time t
    v: np.ndarray  # u_t at time t - dt/2
    t: float
    steps: int = 0


def _weights(n: int, h: float) -> np.ndarray:
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def laplacian(u: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Undamped part of the discrete Laplacian (Neumann ghost rows everywhere)."""
    dx2, dy2 = cfg.dx ** 2, cfg.dy ** 2
    out = np.empty_like(u)
    # x second difference with mirrored ghosts
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx2
    out[0] = 2 * (u[1] - u[0]) / dx2
    out[-1] = 2 * (u[-2] - u[-1]) / dx2
    out[:, 1:-1] += (u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) / dy2
    out[:, 0] += 2 * (u[:, 1] - u[:, 0]) / dy2
    out[:, -1] += 2 * (u[:, -2] - u[:, -1]) / dy2
    return out


def initial_state(cfg: SimConfig, u0=None, u1=None) -> WaveState:
    """State at t=0 with ``v^{-1/2}`` from a second-order Taylor step."""
    if u0 is None:
        u0, u1 = cfg.initial.fields(cfg.x, cfg.y, cfg.ell)
    u0 = np.asarray(u0, dtype=complex)
    u1 = np.zeros_like(u0) if u1 is None else np.asarray(u1, dtype=complex)
    acc = laplacian(u0, cfg)
    acc[:, 0] -= 2 * cfg.a * u1[:, 0] / cfg.dy
    acc[:, -1] -= 2 * cfg.a * u1[:, -1] / cfg.dy
    return WaveState(u=u0.copy(), v=u1 - 0.5 * cfg.dt * acc, t=0.0)


def step(state: WaveState, cfg: SimConfig) -> WaveState:
    """One leapfrog update."""
    u = np.array(state.u, dtype=complex, order="C")
    v = np.array(state.v, dtype=complex, order="C")
    leapfrog_step(u, v, cfg.dt, cfg.dx, cfg.dy, cfg.a, _weights(cfg.Nx, cfg.dx))
    if not (np.isfinite(u).all() and np.abs(u).max() <= BLOWUP):
        raise NumericalBlowup(f"field exceeded {BLOWUP:g} at t={state.t + cfg.dt:g}")
    return WaveState(u=u, v=v, t=state.t + cfg.dt, steps=state.steps + 1)


# --- quadratures -------------------------------------------------------------


def gradient_energy(u, cfg: SimConfig, delta: float = 0.0, w=None) -> float:
    """Midpoint rule for ``int <x>^{-2 delta} |grad u|^2``.

    x-differences sit on x-midpoints (trapezoid in y), y-differences on
    y-midpoints (trapezoid in x).
    """
    x = cfg.x
    wy = _weights(cfg.Ny, cfg.dy)
    wx = _weights(cfg.Nx, cfg.dx)
    xm = 0.5 * (x[1:] + x[:-1])
    ex = np.abs(np.diff(u, axis=0)) ** 2 / cfg.dx
    ey = np.abs(np.diff(u, axis=1)) ** 2 / cfg.dy
    if delta:
        ex = ex * ((1 + xm * xm) ** (-delta))[:, None]
        ey = ey * ((1 + x * x) ** (-delta))[:, None]
    return float(np.sum(ex @ wy) + np.sum(wx @ ey))


def l2_energy(f, cfg: SimConfig, delta: float = 0.0) -> float:
    """Trapezoid rule for ``int <x>^{-2 delta} |f|^2``."""
    wy = _weights(cfg.Ny, cfg.dy)
    wx = _weights(cfg.Nx, cfg.dx)
    if delta:
        wx = wx * (1 + cfg.x ** 2) ** (-delta)
    return float(wx @ (np.abs(f) ** 2) @ wy)


def total_energy(u, v, cfg: SimConfig) -> float:
    return gradient_energy(u, cfg) + l2_energy(v, cfg)


def local_energy(u, v, cfg: SimConfig, delta: float) -> float:
    """``|<x>^{-delta} grad u|^2 + |<x>^{-delta} u_t|^2``."""
    return gradient_energy(u, cfg, delta) + l2_energy(v, cfg, delta)


def section_average(f, cfg: SimConfig) -> np.ndarray:
    """``(1/ell) int_0^ell f(x, y) dy`` (trapezoid)."""
    return (np.asarray(f) @ _weights(cfg.Ny, cfg.dy)) / cfg.ell


def boundary_average(f) -> np.ndarray:
    f = np.asarray(f)
    return 0.5 * (f[:, 0] + f[:, -1])


# --- x-Fourier tools (cosine basis matches the Neumann x-edges) ---------------


def x_wavenumbers(cfg: SimConfig) -> np.ndarray:
    return np.arange(cfg.Nx + 1) * math.pi / (2 * cfg.L)


def x_multiplier(f, mult, cfg: SimConfig):
    """Apply a Fourier multiplier in x (even extension, DCT-I)."""
    f = np.asarray(f, dtype=complex)
    shape = (-1,) + (1,) * (f.ndim - 1)
    m = np.asarray(mult).reshape(shape)
    re = sfft.idct(m * sfft.dct(f.real, type=1, axis=0), type=1, axis=0)
    im = sfft.idct(m * sfft.dct(f.imag, type=1, axis=0), type=1, axis=0)
    return re + 1j * im


def x_frequency_filter(u, v, cfg: SimConfig, band=None):
    """Apply ``1 - eta(xi^2)`` in x to both components."""
    s1, s2 = band if band is not None else cfg.filter_band
    keep = 1.0 - smooth_cutoff(x_wavenumbers(cfg) ** 2, s1, s2)
    return x_multiplier(u, keep, cfg), x_multiplier(v, keep, cfg)


def transverse_projection(f, cfg: SimConfig):
    """Keep the cosine modes ``k <= y_resolved * Ny`` in y.

    The top of the discrete transverse spectrum is unresolved: those grid
    modes sit near ``z = 2/dy``, barely move in x and are almost undamped,
    unlike any mode of the continuous problem.  Decay diagnostics are taken on
    the resolved band so that they measure the continuum dynamics.
    """
    if cfg.y_resolved >= 1:
        return f
    kmax = int(cfg.y_resolved * cfg.Ny)
    f = np.asarray(f, dtype=complex)
    c = sfft.dct(f.real, type=1, axis=1) + 1j * sfft.dct(f.imag, type=1, axis=1)
    c[:, kmax + 1:] = 0
    return sfft.idct(c.real, type=1, axis=1) + 1j * sfft.idct(c.imag, type=1, axis=1)


def heat_kernel(t, x, a_ups: float):
    """``(a Ups / 4 pi t)^{1/2} exp(-a Ups x^2 / 4t)`` (one longitudinal dimension)."""
    return np.sqrt(a_ups / (4 * math.pi * t)) * np.exp(-a_ups * np.asarray(x) ** 2 / (4 * t))


def heat_datum(cfg: SimConfig, u0, u1, phase: complex = 1.0):
    """``c (P_bdry u0 + P_sec u1 / (a Ups))`` as a function of x."""
    a_ups = cfg.a * cfg.upsilon
    return phase * (boundary_average(u0) + section_average(u1, cfg) / a_ups)


def heat_reference(cfg: SimConfig, w0, t: float, method: str = "fourier"):
    """Solution of ``a Ups v_t = v_xx`` at time ``t`` from ``w0`` (values on cfg.x).

    Returns ``(v, v_x, v_t)``.  ``method="quadrature"`` convolves with the
    kernel directly (trapezoid in x'); ``"fourier"`` uses the multiplier
    ``exp(-t xi^2 / (a Ups))``.
    """
    if t <= 0:
        raise ValueError("heat reference needs t > 0")
    a_ups = cfg.a * cfg.upsilon
    if method == "fourier":
        xi = x_wavenumbers(cfg)
        g = np.exp(-t * xi * xi / a_ups)
        v = x_multiplier(w0, g, cfg)
        vt = x_multiplier(w0, -xi * xi / a_ups * g, cfg)
    elif method == "quadrature":
        x = cfg.x
        wx = _weights(cfg.Nx, cfg.dx)
        d = x[:, None] - x[None, :]
        k = heat_kernel(t, d, a_ups)
        v = k @ (wx * w0)
        # v_t = v_xx / (a Ups) and K_xx = K (a Ups d^2/(4t^2) ... ) in closed form
        kxx = k * ((a_ups * d / (2 * t)) ** 2 - a_ups / (2 * t))
        vt = (kxx @ (wx * w0)) / a_ups
    else:
        raise ValueError(f"unknown method {method!r}")
    vx = np.gradient(v, cfg.dx)
    return v, vx, vt


# --- diagnostics ----------------------------------------------------------------


@dataclass
class EnergyTrace:
    times: np.ndarray
    E_total: np.ndarray
    E_loc: np.ndarray
    local_norm: np.ndarray
    heat_err: np.ndarray
    filtered_norm: np.ndarray
    boundary_dissipation: np.ndarray
    conserved: np.ndarray
    heat_err_by_phase: dict
    heat_err_y: np.ndarray
    heat_norm: np.ndarray
    phase_convention: str
    support_leak: float = 0.0
    # same diagnostics without the transverse projection
    local_norm_full: np.ndarray | None = None
    filtered_norm_full: np.ndarray | None = None
    heat_err_full: np.ndarray | None = None

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "E_total", "E_loc", "local_norm", "heat_err",
                    "filtered_norm", "cumulative_dissipation"])
        for row in zip(self.times, self.E_total, self.E_loc, self.local_norm,
                       self.heat_err, self.filtered_norm, self.boundary_dissipation):
            w.writerow([f"{val:.12e}" for val in row])


@dataclass
class DecayFit:
    slope: float
    intercept: float
    residual: float
    window: tuple


def decay_fit(times, values, window) -> DecayFit:
    """Least-squares slope of ``log q`` against ``log t`` over ``window``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    m = (times >= lo) & (times <= hi)
    if m.sum() < 8:
        raise DegenerateWindow(f"only {int(m.sum())} samples in window {window}")
    if np.any(values[m] <= 0):
        raise DegenerateWindow("quantity must be positive in the window")
    lt, lq = np.log(times[m]), np.log(values[m])
    slope, intercept = np.polyfit(lt, lq, 1)
    res = float(np.sqrt(np.mean((lq - (slope * lt + intercept)) ** 2)))
    return DecayFit(float(slope), float(intercept), res, (float(times[m][0]), float(times[m][-1])))


def fit_trace(trace: EnergyTrace, quantity: str, window=(20.0, 120.0)) -> DecayFit:
    if quantity not in ("local_norm", "heat_err", "filtered_norm"):
        raise ValueError(f"cannot fit {quantity!r}")
    return decay_fit(trace.times, getattr(trace, quantity), window)


def energy_balance_residual(trace: EnergyTrace) -> float:
    """``max |E(t2) - E(t1) + diss(t1, t2)| / E(0)`` over sampled pairs."""
    r = trace.E_total + trace.boundary_dissipation
    return float((r.max() - r.min()) / trace.E_total[0])


def _heat_errors(cfg, u, v, t, w0_by_phase, weights):
    """Weighted x- and t-derivative errors against each candidate heat profile."""
    out, ys, norms = {}, None, None
    for name, w0 in w0_by_phase.items():
        h, hx, ht = heat_reference(cfg, w0, t)
        dux = np.diff(u, axis=0) / cfg.dx
        hxm = np.diff(h) / cfg.dx
        ex = gradient_energy_x(dux - hxm[:, None], cfg, weights)
        et = l2_energy(v - ht[:, None], cfg, cfg.delta)
        out[name] = math.sqrt(ex) + math.sqrt(et)
        if ys is None:
            ys = math.sqrt(l2_energy_y_diff(u, cfg))
            norms = math.sqrt(gradient_energy_x(np.tile(hxm[:, None], (1, cfg.Ny + 1)),
                                                cfg, weights)) + math.sqrt(
                l2_energy(np.tile(ht[:, None], (1, cfg.Ny + 1)), cfg, cfg.delta))
    return out, ys, norms


def gradient_energy_x(dux, cfg, weights):
    """Weighted midpoint integral of ``|dux|^2`` given on x-midpoints."""
    wy = _weights(cfg.Ny, cfg.dy)
    return float((weights * cfg.dx) @ (np.abs(dux) ** 2) @ wy)


def l2_energy_y_diff(u, cfg):
    x = cfg.x
    wx = _weights(cfg.Nx, cfg.dx) * (1 + x * x) ** (-cfg.delta)
    return float(wx @ (np.abs(np.diff(u, axis=1)) ** 2).sum(axis=1) / cfg.dy)


def run(cfg: SimConfig, on_sample: Callable | None = None, u0=None, u1=None) -> EnergyTrace:
    """Integrate to ``cfg.T`` and record the diagnostics every ``sample_dt``."""
    state = initial_state(cfg, u0, u1)
    if u0 is None:
        u0c, u1c = cfg.initial.fields(cfg.x, cfg.y, cfg.ell)
    else:
        u0c = np.asarray(u0, dtype=complex)
        u1c = np.zeros_like(u0c) if u1 is None else np.asarray(u1, dtype=complex)
    phases = PHASES if cfg.phase_convention is None else {cfg.phase_convention: PHASES[cfg.phase_convention]}
    w0 = {k: heat_datum(cfg, u0c, u1c, c) for k, c in phases.items()} if cfg.a > 0 else {}
    nsteps = int(round(cfg.T / cfg.dt))
    every = max(1, int(round(cfg.sample_dt / cfg.dt)))
    xm = 0.5 * (cfg.x[1:] + cfg.x[:-1])
    xw_mid = (1 + xm * xm) ** (-cfg.delta)
    wx = _weights(cfg.Nx, cfg.dx)
    a_ups = cfg.a * cfg.upsilon
    rows = []
    by_phase = {k: [] for k in w0}
    by_phase_full = {k: [] for k in w0}
    qs = []
    diss = 0.0
    leak = 0.0
    R0 = cfg.initial.R0
    u = np.ascontiguousarray(state.u)
    v = np.ascontiguousarray(state.v)
    for n in range(nsteps + 1):
        sample = n % every == 0
        if sample:
            u_n, v_old = u.copy(), v.copy()
        bsum = leapfrog_step(u, v, cfg.dt, cfg.dx, cfg.dy, cfg.a, wx)
        d_n = 2 * cfg.a * cfg.dt * bsum
        if sample:
            t = n * cfg.dt
            vbar = 0.5 * (v_old + v)
            E = total_energy(u_n, vbar, cfg)
            q = np.sum(wx * (a_ups * boundary_average(u_n) + section_average(vbar, cfg)))
            full, res = {}, {}
            fields = {"full": (u_n, vbar)}
            if cfg.y_resolved < 1:
                fields["resolved"] = (transverse_projection(u_n, cfg),
                                      transverse_projection(vbar, cfg))
            for tag, (uu, vv) in fields.items():
                out = full if tag == "full" else res
                out["El"] = local_energy(uu, vv, cfg, cfg.delta)
                fu, fv = x_frequency_filter(uu, vv, cfg)
                out["Ef"] = local_energy(fu, fv, cfg, cfg.delta)
                if t > 0 and w0:
                    out["errs"], out["ey"], out["hn"] = _heat_errors(cfg, uu, vv, t, w0, xw_mid)
                else:
                    out["errs"], out["ey"], out["hn"] = ({k: math.nan for k in w0},
                                                         math.nan, math.nan)
            main = res or full
            for k in w0:
                by_phase[k].append(main["errs"][k])
                by_phase_full[k].append(full["errs"][k])
            rows.append((t, E, main["El"], math.sqrt(main["El"]), math.sqrt(main["Ef"]),
                         diss + 0.5 * d_n, main["ey"], main["hn"],
                         math.sqrt(full["El"]), math.sqrt(full["Ef"])))
            qs.append(complex(q))
            if cfg.check_support:
                outside = np.abs(cfg.x) > R0 + t + 2 * cfg.dx
                if outside.any():
                    peak = max(float(np.abs(u_n).max()), 1e-300)
                    leak = max(leak, float(np.abs(u_n[outside]).max()) / peak)
            if not (np.isfinite(u).all() and np.abs(u).max() <= BLOWUP):
                raise NumericalBlowup(f"field exceeded {BLOWUP:g} near t={t:g}")
            if on_sample is not None:
                on_sample(WaveState(u=u_n, v=v_old, t=t, steps=n), vbar)
        diss += d_n
    arr = np.array(rows)
    by_phase = {k: np.array(v) for k, v in by_phase.items()}
    by_phase_full = {k: np.array(v) for k, v in by_phase_full.items()}
    chosen = cfg.phase_convention or resolve_phase(arr[:, 0], by_phase)
    heat = by_phase.get(chosen, np.full(len(rows), math.nan))
    heat_full = by_phase_full.get(chosen, np.full(len(rows), math.nan))
    return EnergyTrace(
        times=arr[:, 0], E_total=arr[:, 1], E_loc=arr[:, 2], local_norm=arr[:, 3],
        heat_err=heat, filtered_norm=arr[:, 4], boundary_dissipation=arr[:, 5],
        conserved=np.array(qs), heat_err_by_phase=by_phase, heat_err_y=arr[:, 6],
        heat_norm=arr[:, 7], phase_convention=chosen, support_leak=leak,
        local_norm_full=arr[:, 8], filtered_norm_full=arr[:, 9], heat_err_full=heat_full,
    )


def resolve_phase(times, by_phase: dict, window=(20.0, 120.0)) -> str:
    """Candidate whose heat error decays fastest over ``window``."""
    if not by_phase:
        return "1"
    best, best_slope = None, math.inf
    for k, vals in by_phase.items():
        try:
            s = decay_fit(times, vals, window).slope
        except DegenerateWindow:
            s = math.inf
        if s < best_slope:
            best, best_slope = k, s
    return best or "1"


def write_snapshot(fh, u: np.ndarray, t: float) -> None:
    """Binary snapshot: ``b"WGS1"``, rows, cols (int64 LE), t (float64 LE), then
    row-major (re, im) float64 pairs."""
    u = np.ascontiguousarray(u, dtype="<c16")
    fh.write(b"WGS1")
    fh.write(struct.pack("<qqd", u.shape[0], u.shape[1], float(t)))
    fh.write(u.tobytes(order="C"))


def read_snapshot(fh):
    if fh.read(4) != b"WGS1":
        raise ValueError("not a WGS1 snapshot")
    nx, ny, t = struct.unpack("<qqd", fh.read(24))
    data = np.frombuffer(fh.read(16 * nx * ny), dtype="<c16").reshape(nx, ny)
    return data.copy(), t
