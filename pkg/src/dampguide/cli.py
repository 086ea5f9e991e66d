"""Command-line front end: ``dampguide {spectrum,simulate,resolvent,verify}``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__, resolvent, sim, transverse, verify
from .errors import ConfigError, DegenerateWindow
from .transverse import LogWindow, Power, Proportional, SectionGeometry


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None
    out_dir: str
    seed: int
    version: str
    threads: int

    def write(self, directory: Path) -> None:
        with open(directory / "manifest.json", "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


class OutputDir:
    """Results go to a hidden sibling directory that is renamed on success."""

    def __init__(self, target):
        self.target = Path(target)
        if self.target.exists() and (not self.target.is_dir() or any(self.target.iterdir())):
            raise ConfigError(f"{self.target} exists and is not an empty directory", field="out")
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.path: Path | None = None

    def __enter__(self) -> Path:
        self.path = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        return self.path

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.path, ignore_errors=True)
            return False
        if self.target.exists():
            self.target.rmdir()
        os.replace(self.path, self.target)
        return False


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}", field="config") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", field="config")
    return data


def _take(cfg: dict, allowed: dict) -> dict:
    """Merge ``cfg`` over defaults, rejecting unknown keys."""
    extra = set(cfg) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", field="config")
    out = dict(allowed)
    out.update(cfg)
    return out


def _number(value, field: str, positive: bool = False, minimum=None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError("must be a finite number", field=field)
    if positive and value <= 0:
        raise ConfigError("must be positive", field=field)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", field=field)
    return float(value)


def _int(value, field: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"must be an integer >= {minimum}", field=field)
    return value


def _fmt(x: float) -> str:
    return f"{x:.15g}"


# --- spectrum ---------------------------------------------------------------

SPECTRUM_DEFAULTS = {
    "ell": 1.0,
    "alphas": [1.0, 5.0, 10.0],
    "n_count": 20,
    "track": {"start": 1.0, "stop": 20.0, "num": 39, "branches": [0, 1]},
    "asymptotic_n": [100, 1000, 10000],
}


def spectrum_config(raw: dict) -> dict:
    cfg = _take(raw, SPECTRUM_DEFAULTS)
    cfg["ell"] = _number(cfg["ell"], "ell", positive=True)
    if not isinstance(cfg["alphas"], list):
        raise ConfigError("must be a list", field="alphas")
    cfg["alphas"] = [_number(a, "alphas", minimum=0.0) for a in cfg["alphas"]]
    cfg["n_count"] = _int(cfg["n_count"], "n_count", 1)
    track = _take(cfg["track"] or {}, SPECTRUM_DEFAULTS["track"])
    track["start"] = _number(track["start"], "track.start", minimum=0.0)
    track["stop"] = _number(track["stop"], "track.stop", minimum=track["start"])
    track["num"] = _int(track["num"], "track.num", 1)
    track["branches"] = [_int(b, "track.branches") for b in track["branches"]]
    cfg["track"] = track
    cfg["asymptotic_n"] = [_int(n, "asymptotic_n", 100) for n in cfg["asymptotic_n"]]
    return cfg


def _root_rows(roots):
    for r in roots:
        lam = r.lam
        yield [_fmt(r.alpha.real), r.n, _fmt(lam.real), _fmt(lam.imag),
               _fmt(r.theta.real), _fmt(r.theta.imag), f"{r.residual:.3e}"]


ROOT_HEADER = ["alpha", "n", "re_lambda", "im_lambda", "re_theta", "im_theta", "residual"]


def cmd_spectrum(cfg: dict, out: Path, seed: int = 0) -> int:
    geom = SectionGeometry(cfg["ell"])
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROOT_HEADER)
        for a in cfg["alphas"]:
            roots = [transverse.solve_root(geom, n, a) for n in range(cfg["n_count"])]
            w.writerows(_root_rows(roots))
    tr = cfg["track"]
    grid = np.linspace(tr["start"], tr["stop"], tr["num"])
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROOT_HEADER)
        for n in tr["branches"]:
            full = np.concatenate([[0.0], grid]) if grid[0] > 0 else grid
            roots = transverse.continuation_sweep(geom, n, full)
            w.writerows(_root_rows(roots[-grid.size:]))
    with open(out / "asymptotics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "n", "alpha", "quantity", "predicted", "computed", "rel_error",
                    "im_ratio"])
        for reg in (LogWindow(0.0), LogWindow(3.0), Proportional(0.5), Proportional(2.0),
                    Power(0.5, 1.0), Power(0.5, -1.0)):
            for n in cfg["asymptotic_n"]:
                rec = transverse.asymptotic_probe(geom, reg, n)
                w.writerow([repr(reg), n, _fmt(rec.alpha), rec.quantity, _fmt(rec.predicted),
                            _fmt(rec.computed), f"{rec.rel_error:.6e}", f"{rec.im_ratio:.6f}"])
    return 0


# --- simulate ---------------------------------------------------------------


def cmd_simulate(cfg: sim.SimConfig, out: Path, seed: int = 0) -> int:
    final = {}

    def keep_last(state, vbar):
        final["u"], final["t"] = state.u, state.t

    trace = sim.run(cfg, on_sample=keep_last)
    with open(out / "trace.csv", "w", newline="") as fh:
        trace.write_csv(fh)
    with open(out / "final.wgs", "wb") as fh:
        sim.write_snapshot(fh, final["u"], final["t"])
    summary = {
        "energy_balance_residual": sim.energy_balance_residual(trace),
        "phase_convention": trace.phase_convention,
        "support_leak": trace.support_leak,
        "slopes": {q: _slope_or_none(trace, q)
                   for q in ("local_norm", "heat_err", "filtered_norm")},
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _slope_or_none(trace, quantity):
    try:
        return sim.fit_trace(trace, quantity).slope
    except DegenerateWindow:
        return None


def simulate_config(raw: dict) -> sim.SimConfig:
    cfg = sim.SimConfig.from_dict(raw)
    cfg.validate()
    return cfg


# --- resolvent --------------------------------------------------------------

RESOLVENT_DEFAULTS = {
    "problem": {},
    "intermediate": {"tau_min": 0.5, "tau_max": 3.0, "count": 6, "delta": 1.0, "Nxi": 1024, "Ny": 48,
                     "method": "outgoing"},
    "high": {"tau_min": 5.0, "tau_max": 40.0, "count": 8, "delta": 1.0, "Nxi": 4096, "Ny": 96,
             "method": "outgoing"},
    "low_freq_radii": list(verify.LOW_FREQ_RADII),
    "jump_s": list(verify.JUMP_S),
}


def resolvent_config(raw: dict) -> dict:
    cfg = _take(raw, RESOLVENT_DEFAULTS)
    base = dict(ell=math.pi, a=1.0, z=[0.5, 0.1], box=100.0, Nxi=512, Ny=48)
    extra = set(cfg["problem"]) - set(base) - {"symbol"}
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", field="problem")
    base.update(cfg["problem"])
    try:
        cfg["problem"] = resolvent.GuideResolventProblem.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="problem") from exc
    for key in ("intermediate", "high"):
        reg = _take(cfg[key], RESOLVENT_DEFAULTS[key])
        try:
            reg["regime"] = resolvent.FrequencyRegime(key, float(reg["tau_min"]),
                                                      float(reg["tau_max"]), int(reg["count"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field=key) from exc
        reg["delta"] = _number(reg["delta"], f"{key}.delta", positive=True)
        reg["Nxi"] = _int(reg["Nxi"], f"{key}.Nxi", 2)
        reg["Ny"] = _int(reg["Ny"], f"{key}.Ny", 17)
        if reg["method"] not in resolvent.SWEEP_METHODS:
            raise ConfigError(f"must be one of {list(resolvent.SWEEP_METHODS)}", field=f"{key}.method")
        cfg[key] = reg
    cfg["low_freq_radii"] = [_number(r, "low_freq_radii", positive=True) for r in cfg["low_freq_radii"]]
    if any(r > 0.2 for r in cfg["low_freq_radii"]):
        raise ConfigError("radii must be <= 0.2", field="low_freq_radii")
    cfg["jump_s"] = [_number(s, "jump_s", positive=True) for s in cfg["jump_s"]]
    return cfg


def cmd_resolvent(cfg: dict, out: Path, seed: int = 0) -> int:
    p = cfg["problem"]
    rows = []
    for key in ("intermediate", "high"):
        reg = cfg[key]
        prob = resolvent.GuideResolventProblem(p.geom, p.a, p.z, p.box, reg["Nxi"], reg["Ny"], p.symbol)
        for r in resolvent.frequency_sweep(prob, reg["regime"], delta=reg["delta"], seed=seed,
                                           method=reg["method"]):
            rows.append([key, "tau", _fmt(r.tau), f"{r.norm:.10e}",
                         "near_spectrum" if r.near_spectrum else ""])
    low = resolvent.GuideResolventProblem(p.geom, p.a, p.z, 400.0, 2048, p.Ny, p.symbol)
    f = resolvent.gaussian_probe(low)
    for r in cfg["low_freq_radii"]:
        err = resolvent.low_freq_expansion_error(low.with_z(r * np.exp(0.25j * np.pi)), f)
        rows.append(["low_freq", "abs_z", _fmt(r), f"{err:.10e}", ""])
    for beta in (0, 1):
        fit = resolvent.heat_jump_exponent(0, beta, cfg["jump_s"])
        for s, nrm in zip(fit.s, fit.norms):
            rows.append([f"jump_j0_beta{beta}", "s", _fmt(s), f"{nrm:.10e}", f"slope={fit.slope:.4f}"])
    with open(out / "resolvent.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "parameter", "value", "norm", "flags"])
        w.writerows(rows)
    with open(out / "problem.json", "w") as fh:
        json.dump(p.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


# --- verify -----------------------------------------------------------------


def cmd_verify(suite: str, cfg: sim.SimConfig | None = None, seed: int = 0, out: Path | None = None) -> int:
    if suite not in verify.SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(verify.SUITES)}",
                          field="suite")
    if cfg is not None:
        cfg.validate()
    results = verify.run_checks(verify.SUITES[suite], cfg=cfg, seed=seed, echo=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if out is not None:
        with open(out / "checks.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["criterion", "name", "passed", "value", "threshold"])
            for r in results:
                w.writerow([r.criterion, r.name, int(r.passed), r.value, r.threshold])
    return 1 if failed else 0


# --- entry point ------------------------------------------------------------


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("WGD_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"not an integer: {env!r}", field="WGD_THREADS") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory (created; must not hold files)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised estimates")
    common.add_argument("--threads", type=int, help="worker threads (default: WGD_THREADS or 1)")
    parser = argparse.ArgumentParser(prog="dampguide", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="transverse eigenvalue tables")
    sub.add_parser("simulate", parents=[common], help="damped wave simulation")
    sub.add_parser("resolvent", parents=[common], help="resolvent norm tables")
    v = sub.add_parser("verify", parents=[common], help="acceptance checks")
    v.add_argument("--suite", default="all", help=f"one of {sorted(verify.SUITES)}")
    return parser


def _run_command(command, cfg, seed, out):
    return command(cfg, out, seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError("must be positive", field="threads")
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        raw = _load_json(args.config)
        if args.command == "verify":
            cfg = simulate_config(raw) if args.config else None
            if args.out is None:
                return cmd_verify(args.suite, cfg, args.seed)
            runner = partial(cmd_verify, args.suite, cfg, args.seed)
        else:
            if args.out is None:
                raise ConfigError("an output directory is required", field="out")
            parse, command = {
                "spectrum": (spectrum_config, cmd_spectrum),
                "simulate": (simulate_config, cmd_simulate),
                "resolvent": (resolvent_config, cmd_resolvent),
            }[args.command]
            cfg = parse(raw)
            runner = partial(_run_command, command, cfg, args.seed)
        manifest = RunManifest(args.command, args.config, str(args.out), args.seed,
                               __version__, threads)
        with OutputDir(args.out) as out:
            manifest.write(out)
            return runner(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
