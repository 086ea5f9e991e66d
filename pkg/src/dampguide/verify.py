"""Acceptance checks shared by the command line and the test suite.

Every check returns a ``CheckResult``; suites group the checks by topic and
the expensive desk simulations are cached per configuration.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import discrete, resolvent, sim, transverse
from .transverse import LogWindow, Power, Proportional, SectionGeometry


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    value: str
    threshold: str
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.criterion:2d} {self.name}: {self.value} "
                f"(need {self.threshold}; {self.seconds:.1f}s)")


def _timed(criterion: int, name: str, fn: Callable[[], tuple[bool, str, str, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, value, threshold, detail = fn()
    return CheckResult(criterion, name, bool(ok), value, threshold,
                       time.perf_counter() - t0, detail)


# --- transverse spectrum ----------------------------------------------------

FD_ORACLE_N = 4000


def check_root_accuracy() -> CheckResult:
    def run():
        geom = SectionGeometry(math.pi)
        grid = discrete.Grid1D(FD_ORACLE_N, geom.ell)
        worst_res, worst_rel = 0.0, 0.0
        for alpha in (0.0, 0.5, 1.0, 5.0):
            for n in range(6):
                root = transverse.solve_root(geom, n, alpha)
                worst_res = max(worst_res, root.residual / max(1.0, alpha * alpha))
                mat = discrete.assemble(geom, alpha, 1.0, grid)
                lam_fd = discrete.eigenvalue_near(mat, root.lam)
                worst_rel = max(worst_rel, abs(lam_fd - root.lam) / max(1.0, abs(root.lam)))
        ok = worst_res <= 1e-10 and worst_rel <= 1e-3
        return ok, f"residual {worst_res:.1e}, FD rel {worst_rel:.1e}", "residual/max(1,alpha^2)<=1e-10, <=1e-3", ""
    return _timed(1, "transcendental roots vs FD oracle", run)


def check_strip_invariants(samples: int = 10_000, seed: int = 0) -> CheckResult:
    def run():
        geom = SectionGeometry(math.pi)
        rng = np.random.default_rng(seed)
        ns = rng.integers(0, 51, samples)
        alphas = 100.0 - rng.uniform(0.0, 100.0, samples)  # in (0, 100]
        bad = 0
        for n in range(51):
            grid = np.sort(alphas[ns == n])
            if grid.size == 0:
                continue
            roots = transverse.continuation_sweep(geom, n, np.concatenate([[0.0], grid]))[1:]
            for r in roots:
                th = r.theta
                if not (n * geom.nu < th.real < (n + 1) * geom.nu and th.imag < 0):
                    bad += 1
        return bad == 0, f"{bad} violations in {samples} roots", "0", ""
    return _timed(2, "strip and dissipativity", run)


def check_lambda0_slope() -> CheckResult:
    def run():
        worst = 0.0
        for ell in (1.0, math.pi, 2 * math.pi):
            geom = SectionGeometry(ell)
            s = transverse.lambda0_slope(geom, 0.01)
            worst = max(worst, abs(s + 1j * geom.upsilon) / geom.upsilon)
        return worst <= 0.05, f"max rel dev {worst:.2e}", "<=0.05", ""
    return _timed(3, "lambda_0 slope", run)


ASYMPTOTIC_REGIMES = (LogWindow(3.0), Proportional(0.5), Power(0.5, 1.0))
ASYMPTOTIC_NS = (100, 1000, 10_000)


def check_asymptotics(regimes=ASYMPTOTIC_REGIMES) -> CheckResult:
    def run():
        geom = SectionGeometry(math.pi)
        ok, parts = True, []
        for reg in regimes:
            errs = [transverse.asymptotic_probe(geom, reg, n).rel_error for n in ASYMPTOTIC_NS]
            good = all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] <= 0.05
            ok &= good
            parts.append(f"{reg}: " + ", ".join(f"{e:.3g}" for e in errs))
        return ok, "; ".join(parts), "decreasing, <=0.05 at n=1e4", ""
    return _timed(4, "large-index asymptotics", run)


# --- semiclassical gap ------------------------------------------------------


def check_gap(N: int = 1500, points: int = 17) -> CheckResult:
    def run():
        geom = SectionGeometry(math.pi)
        try:
            res = discrete.spectral_gap_scan(geom, [0.2, 0.1, 0.05], 0.25, points=points, N=N,
                                             keep_records=False)
        except discrete.NearSpectrum as exc:
            return False, f"NearSpectrum: {exc}", "no sentinel, ratio<=3", ""
        sup = ", ".join(f"M({h})={m:.4f}" for h, m in res.sup.items())
        return res.ratio <= 3.0, f"{sup}, ratio {res.ratio:.3f}", "no sentinel, ratio<=3", ""
    return _timed(5, "semiclassical gap", run)


# --- desk simulation --------------------------------------------------------

_DESK_CACHE: dict[str, sim.EnergyTrace] = {}


def desk_trace(cfg: sim.SimConfig) -> sim.EnergyTrace:
    """Run (or reuse) the simulation for ``cfg``."""
    key = json.dumps(cfg.to_dict(), sort_keys=True)
    if key not in _DESK_CACHE:
        cfg.validate()
        _DESK_CACHE[key] = sim.run(cfg)
    return _DESK_CACHE[key]


def check_energy_balance(cfg: sim.SimConfig | None = None) -> CheckResult:
    cfg = cfg or sim.SimConfig()

    def run():
        cfg.validate()
        fine = cfg.refined(2)
        fine.validate()
        r0 = sim.energy_balance_residual(desk_trace(cfg))
        r1 = sim.energy_balance_residual(desk_trace(fine))
        gain = r0 / r1 if r1 > 0 else math.inf
        return (r0 <= 5e-3 and gain >= 3.0, f"residual {r0:.2e}, refined {r1:.2e}, gain {gain:.2f}",
                "<=5e-3, gain>=3", "")
    return _timed(6, "energy balance", run)


def _slopes(cfg):
    tr = desk_trace(cfg)
    return {q: sim.fit_trace(tr, q).slope for q in ("local_norm", "heat_err", "filtered_norm")}, tr


def check_local_decay(cfg: sim.SimConfig | None = None) -> CheckResult:
    cfg = cfg or sim.SimConfig()

    def run():
        s, _ = _slopes(cfg)
        v = s["local_norm"]
        return -1.7 <= v <= -1.3, f"slope {v:.3f}", "in [-1.7,-1.3]", ""
    return _timed(7, "local energy decay", run)


def check_heat_comparison(cfg: sim.SimConfig | None = None) -> CheckResult:
    cfg = cfg or sim.SimConfig()

    def run():
        s, tr = _slopes(cfg)
        h, loc = s["heat_err"], s["local_norm"]
        ok = h <= -2.2 and loc - h >= 0.6
        return (ok, f"heat slope {h:.3f}, gap to local {loc - h:.3f}, phase c={tr.phase_convention}",
                "<=-2.2, gap>=0.6", "")
    return _timed(8, "heat comparison", run)


def check_filtered_decay(cfg: sim.SimConfig | None = None) -> CheckResult:
    cfg = cfg or sim.SimConfig()

    def run():
        s, _ = _slopes(cfg)
        v = s["filtered_norm"]
        return v <= -2.5, f"slope {v:.3f}", "<=-2.5", ""
    return _timed(9, "high-frequency filter", run)


# --- resolvent laws ---------------------------------------------------------


def resolvent_lab_problem(**kw) -> resolvent.GuideResolventProblem:
    """Problem used by the resolvent checks."""
    base = dict(geom=SectionGeometry(math.pi), a=1.0, z=0.5 + 0.1j, box=100.0, Nxi=512, Ny=48)
    base.update(kw)
    return resolvent.GuideResolventProblem(**base)


def check_resolvent_laws(seed: int = 0) -> CheckResult:
    def run():
        p = resolvent_lab_problem()
        alpha = p.a * p.z
        probes = resolvent.random_probes(p, 5, seed=seed)
        ident = resolvent.resolvent_identity_residual(p, alpha, p.z ** 2, (1.1 + 0.3j) ** 2, probes)
        a_mode = 0.3
        contour = resolvent.lambda0_contour(p.geom, a_mode)
        jm = resolvent.transverse_jordan(p, a_mode, contour)
        f = resolvent.gaussian_probe(p, y_profile=(1.0, 0.5, 0.2))
        lattice = [complex(x, y) for x in np.linspace(-0.3, 0.3, 5) for y in np.linspace(-0.3, 0.3, 5)]
        cons = max(resolvent.mode_consistency_residual(p, a_mode, jm, zeta, f) for zeta in lattice)
        J = resolvent.JordanModel.jordan_block(0.2 + 0.1j, 2)
        mu, zeta = 1.3, 0.4 + 0.7j
        u = np.array([0.3 - 1j, 2 + 0.5j])
        c = mu + 0.2 + 0.1j - zeta
        closed = np.array([u[0] / c - u[1] / c ** 2, u[1] / c])
        jerr = float(np.abs(resolvent.mode_resolvent(J, mu, zeta, u) - closed).max())
        ok = ident <= 1e-8 and cons <= 1e-8 and jerr <= 1e-12
        return (ok, f"identity {ident:.1e}, (H-zeta)R=P {cons:.1e}, Jordan {jerr:.1e}",
                "<=1e-8, <=1e-8, <=1e-12", "")
    return _timed(10, "resolvent laws", run)


def check_riesz_laws() -> CheckResult:
    def run():
        circle = resolvent.RieszContour.circle(0.0, 1.0)
        P = resolvent.riesz_projection(np.diag([0.1, 5.0]), circle)
        e_diag = max(np.abs(P @ P - P).max(), abs(np.trace(P) - 1))
        PJ = resolvent.riesz_projection(resolvent.JordanModel.jordan_block(0.2, 2), circle)
        e_jordan = max(np.abs(PJ @ PJ - PJ).max(), abs(np.trace(PJ) - 2))
        cross = riesz_cross_module_error()
        ok = e_diag <= 1e-8 and e_jordan <= 1e-8 and cross <= 1e-6
        return (ok, f"diag {e_diag:.1e}, Jordan {e_jordan:.1e}, vs biorthogonal {cross:.1e}",
                "<=1e-8, <=1e-8, <=1e-6", "")
    return _timed(11, "Riesz projection laws", run)


def riesz_cross_module_error(alpha: float = 0.3, N: int = 2000) -> float:
    """Discrete Riesz projection onto lambda_0 against the closed-form biorthogonal projector."""
    geom = SectionGeometry(math.pi)
    grid = discrete.Grid1D(N, geom.ell)
    mat = discrete.assemble(geom, alpha, 1.0, grid)
    y, w = grid.nodes, grid.weights
    probes = np.stack([np.exp(-(y - 1) ** 2), np.cos(y) + y ** 2, y * np.sin(3 * y)], axis=1)
    probes = probes.astype(complex)
    contour = resolvent.lambda0_contour(geom, alpha)
    Pv = mat.to_physical(resolvent.riesz_apply(mat, contour, mat.from_physical(probes)))
    mode = transverse.transverse_mode(geom, transverse.solve_root(geom, 0, alpha))
    ref = mode.projector_weights(y, w) @ probes
    num = (np.abs(Pv - ref) ** 2 * w[:, None]).sum(axis=0)
    den = (np.abs(ref) ** 2 * w[:, None]).sum(axis=0)
    return float(np.sqrt(num / den).max())


LOW_FREQ_RADII = (0.2, 0.1, 0.05, 0.025)


def low_freq_table(delta: float = 2.5) -> list[tuple[float, float]]:
    """``(|z|, error)`` along ``z = r e^{i pi / 4}`` for the desk Gaussian, constant in y."""
    p = resolvent_lab_problem(box=400.0, Nxi=2048)
    f = resolvent.gaussian_probe(p, width=1.0)
    return [(r, resolvent.low_freq_expansion_error(p.with_z(r * np.exp(0.25j * np.pi)), f, delta))
            for r in LOW_FREQ_RADII]


def check_low_freq() -> CheckResult:
    def run():
        tab = low_freq_table()
        ratios = [b[1] / a[1] for a, b in zip(tab, tab[1:])]
        ok = all(q <= 0.75 for q in ratios)
        return ok, "ratios " + ", ".join(f"{q:.3f}" for q in ratios), "each <=0.75", ""
    return _timed(12, "low-frequency expansion", run)


def check_frequency_sweeps(seed: int = 0) -> CheckResult:
    def run():
        mid = resolvent_lab_problem(Nxi=1024)
        rows_i = resolvent.frequency_sweep(mid, resolvent.FrequencyRegime("intermediate", 0.5, 3.0, 6),
                                           delta=1.0, seed=seed)
        high = resolvent_lab_problem(Nxi=4096, Ny=96)
        rows_h = resolvent.frequency_sweep(high, resolvent.FrequencyRegime("high", 5.0, 40.0, 8),
                                           delta=1.0, seed=seed)
        finite = all(math.isfinite(r.norm) and not r.near_spectrum for r in rows_i + rows_h)
        tn = [r.tau_norm for r in rows_h]
        ratio = max(tn) / tn[0]
        ok = finite and ratio <= 2.0
        mx = max(r.norm for r in rows_i)
        return (ok, f"intermediate max {mx:.3f}, high max tau*norm / value at 5 = {ratio:.3f}",
                "finite, <=2", "")
    return _timed(13, "frequency sweeps", run)


JUMP_S = tuple(np.geomspace(1e-4, 1e-2, 5))


def check_heat_jumps() -> CheckResult:
    def run():
        f0 = resolvent.heat_jump_exponent(0, 0, JUMP_S)
        f1 = resolvent.heat_jump_exponent(0, 1, JUMP_S)
        kerr = max(resolvent.kernel_limit_error(s, 0, b) for s in (1e-2, 1e-1) for b in (0, 1))
        ok = abs(f0.slope + 0.5) <= 0.1 and abs(f1.slope - 0.5) <= 0.1 and kerr <= 1e-4
        return (ok, f"slopes {f0.slope:.3f}, {f1.slope:.3f}; eps-limit {kerr:.1e}",
                "-0.5+-0.1, +0.5+-0.1, <=1e-4", "")
    return _timed(14, "heat-jump exponents", run)


SUITES = {
    "spectrum": (1, 2, 3, 4),
    "gap": (5,),
    "decay": (6, 7, 9),
    "heat": (8, 12, 14),
    "resolvent": (10, 11, 13),
}
SUITES["all"] = tuple(sorted(c for v in SUITES.values() for c in v))


def run_checks(criteria, cfg: sim.SimConfig | None = None, seed: int = 0,
               echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    """Run the listed criteria; ``cfg`` overrides the desk configuration."""
    table = {
        1: check_root_accuracy, 2: lambda: check_strip_invariants(seed=seed),
        3: check_lambda0_slope, 4: check_asymptotics, 5: check_gap,
        6: lambda: check_energy_balance(cfg), 7: lambda: check_local_decay(cfg),
        8: lambda: check_heat_comparison(cfg), 9: lambda: check_filtered_decay(cfg),
        10: lambda: check_resolvent_laws(seed), 11: check_riesz_laws, 12: check_low_freq,
        13: lambda: check_frequency_sweeps(seed), 14: check_heat_jumps,
    }
    out = []
    for c in criteria:
        res = table[c]()
        if echo:
            echo(res.line())
        out.append(res)
    return out
