"""Complex eigenvalues of the damped transverse operator on an interval.

On the section (0, ell) the operator is ``-d^2/dy^2`` with the impedance
conditions ``u'(0) = -i alpha u(0)`` and ``u'(ell) = i alpha u(ell)``.  Its
eigenvalues are ``lambda_n = theta_n**2`` where ``theta_n`` solves

    G(theta) = (alpha - theta)**2 exp(2 i ell theta) - (alpha + theta)**2 = 0.

Branches are followed from ``alpha = 0`` (where ``theta_n = n pi / ell``) by
predictor-corrector continuation.  For real ``alpha > 0`` every branch is
confined to the strip ``n nu < Re theta < (n + 1) nu`` with ``Im theta < 0``,
which is how branch jumps are detected.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BranchJump, NoConvergence

RESIDUAL_GATE = 1e-10
STEP_TOL = 1e-12
MAX_NEWTON = 80
MAX_STEP = 0.1
MAX_DEPTH = 12
N0_SEED_ALPHA = 1e-6
JUMP_FRACTION = 0.25  # of nu, largest accepted predictor-corrector gap


@dataclass(frozen=True)
class SectionGeometry:
    """Interval section (0, ell)."""

    ell: float

    def __post_init__(self):
        if not (self.ell > 0 and math.isfinite(self.ell)):
            raise ValueError(f"section length must be positive, got {self.ell}")

    @property
    def nu(self) -> float:
        return math.pi / self.ell

    @property
    def upsilon(self) -> float:
        # boundary measure (two endpoints) over interior measure
        return 2.0 / self.ell


@dataclass(frozen=True)
class TransverseRoot:
    n: int
    alpha: complex
    theta: complex
    residual: float

    @property
    def lam(self) -> complex:
        return self.theta * self.theta


@dataclass(frozen=True)
class TransverseMode:
    """Eigenfunction ``cos(theta y) + coeff_b sin(theta y)`` of a root.

    ``pairing`` is the bilinear (unconjugated) integral of the square of the
    eigenfunction; it normalises the biorthogonal projector.
    """

    root: TransverseRoot
    coeff_b: complex
    pairing: complex
    ell: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        th = self.root.theta
        if th == 0:
            return np.ones_like(y, dtype=complex)
        return np.cos(th * y) + self.coeff_b * np.sin(th * y)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        th = self.root.theta
        if th == 0:
            return np.zeros_like(y, dtype=complex)
        return -th * np.sin(th * y) + self.coeff_b * th * np.cos(th * y)

    def projector_weights(self, y, weights):
        """Rank-one biorthogonal projector sampled on nodes with quadrature weights.

        Returns the matrix ``phi phi^T W / pairing`` acting on nodal values.
        """
        phi = self(y)
        return np.outer(phi, phi * weights) / self.pairing


def characteristic(theta, alpha, ell):
    """G(theta) for the impedance interval."""
    e = np.exp(2j * ell * theta)
    return (alpha - theta) ** 2 * e - (alpha + theta) ** 2


def characteristic_derivative(theta, alpha, ell):
    e = np.exp(2j * ell * theta)
    d = alpha - theta
    return -2.0 * d * e + 2j * ell * d * d * e - 2.0 * (alpha + theta)


def theta_alpha_derivative(theta, alpha, ell):
    """d theta / d alpha along a branch (implicit differentiation of G)."""
    den = 2.0 * alpha - 1j * ell * (alpha * alpha - theta * theta)
    return 2.0 * theta / den


def residual_gate(alpha) -> float:
    return RESIDUAL_GATE * max(1.0, abs(alpha) ** 2)


def newton(alpha: complex, ell: float, guess: complex, maxiter: int = MAX_NEWTON,
           deflate: bool = False):
    """Damped Newton iteration on G.  Returns ``(theta, |G(theta)|)``.

    ``theta = 0`` is always a root of G; with ``deflate`` the iteration runs on
    ``G / theta`` instead, which keeps small seeds away from it.
    """
    theta = complex(guess)

    def merit(th):
        g = characteristic(th, alpha, ell)
        return g, (g / th if deflate else g)

    g, f = merit(theta)
    gate = residual_gate(alpha)
    for _ in range(maxiter):
        dg = characteristic_derivative(theta, alpha, ell)
        den = dg * theta - g if deflate else dg
        if den == 0 or not cmath.isfinite(den):
            break
        step = g * theta / den if deflate else g / dg
        lam = 1.0
        # backtrack until the merit function decreases
        for _ in range(30):
            trial = theta - lam * step
            gt, ft = merit(trial)
            if cmath.isfinite(ft) and abs(ft) < abs(f) * (1 - 1e-4 * lam):
                break
            lam *= 0.5
        else:
            trial = theta - step
            gt, ft = merit(trial)
        theta, g, f = trial, gt, ft
        if abs(lam * step) <= STEP_TOL * max(1.0, abs(theta)) and abs(g) <= gate:
            break
    res = abs(g)
    if not (res <= gate) or not cmath.isfinite(theta):
        raise NoConvergence(
            f"Newton failed for alpha={alpha!r}: |G|={res:.3e} > gate {gate:.3e}"
        )
    return theta, res


def _canonical(theta: complex) -> complex:
    # theta and -theta give the same eigenvalue; report Re >= 0
    if theta.real < 0 or (theta.real == 0 and theta.imag > 0):
        return -theta
    return theta


def _is_real_positive(alpha) -> bool:
    return complex(alpha).imag == 0 and complex(alpha).real > 0


def _check_strip(geom: SectionGeometry, n: int, alpha, theta: complex):
    if not _is_real_positive(alpha):
        return
    nu = geom.nu
    lo, hi = n * nu, (n + 1) * nu
    if not (lo < theta.real < hi) or not (theta.imag < 0):
        raise BranchJump(
            f"branch {n} left its strip at alpha={complex(alpha).real:g}: "
            f"theta={theta:.6g}, strip=({lo:g},{hi:g})"
        )


def _polish(geom: SectionGeometry, n: int, alpha, guess) -> TransverseRoot:
    theta, res = newton(alpha, geom.ell, guess, deflate=(n == 0 and alpha != 0))
    theta = _canonical(theta)
    if abs(theta) < 1e-14 and not (n == 0 and alpha == 0):
        raise BranchJump(f"collapsed onto the spurious root theta=0 (n={n})")
    _check_strip(geom, n, alpha, theta)
    return TransverseRoot(n=n, alpha=complex(alpha), theta=theta, residual=res)


def _seed_root(geom: SectionGeometry, n: int) -> TransverseRoot:
    th = complex(n * geom.nu)
    res = abs(characteristic(th, 0.0, geom.ell))
    return TransverseRoot(n=n, alpha=0j, theta=th, residual=float(res))


def _n0_start(geom: SectionGeometry, alpha0: float) -> TransverseRoot:
    # lambda_0 ~ -i Upsilon alpha near 0, so theta_0 ~ sqrt(-i Upsilon alpha)
    guess = cmath.sqrt(-1j * geom.upsilon * alpha0)
    return _polish(geom, 0, alpha0, guess)


def _advance(geom, n, prev: TransverseRoot, target, depth=0) -> list[TransverseRoot]:
    """Continue from ``prev`` to ``target`` with step halving; returns new roots."""
    a0, a1 = prev.alpha, complex(target)
    if n == 0 and a0 == 0:
        a_seed = min(N0_SEED_ALPHA, abs(a1)) * (a1 / abs(a1))
        start = _n0_start(geom, a_seed) if a_seed.imag == 0 else _polish(
            geom, 0, a_seed, cmath.sqrt(-1j * geom.upsilon * a_seed))
        if a_seed == a1:
            return [start]
        return [start] + _advance(geom, n, start, a1, depth)
    try:
        guess = prev.theta + (a1 - a0) * theta_alpha_derivative(prev.theta, a0, geom.ell)
        root = _polish(geom, n, a1, guess)
        if abs(root.theta - _canonical(guess)) > JUMP_FRACTION * geom.nu:
            raise BranchJump("corrector moved far from the predictor")
        slack = 1e-13 * max(1.0, abs(prev.theta))
        if (_is_real_positive(a1) and a1.real > a0.real
                and root.theta.real < prev.theta.real - slack):
            raise BranchJump("real part decreased along the sweep")
        return [root]
    except (NoConvergence, BranchJump):
        if depth >= MAX_DEPTH:
            raise
        mid = 0.5 * (a0 + a1)
        first = _advance(geom, n, prev, mid, depth + 1)
        return first + _advance(geom, n, first[-1], a1, depth + 1)


def continuation_sweep(geom: SectionGeometry, n: int, alpha_grid: Sequence) -> list[TransverseRoot]:
    """Follow branch ``n`` over ``alpha_grid`` (must start at 0).

    Consecutive grid points further apart than ``MAX_STEP`` are bridged by
    internal substeps; failed steps are bisected up to ``MAX_DEPTH`` times.
    """
    if n < 0:
        raise ValueError("branch index must be nonnegative")
    grid = [complex(a) for a in alpha_grid]
    if not grid or grid[0] != 0:
        raise ValueError("alpha_grid must start at 0")
    out = [_seed_root(geom, n)]
    current = out[0]
    for target in grid[1:]:
        span = abs(target - current.alpha)
        nsub = max(1, math.ceil(span / MAX_STEP - 1e-12))
        for k in range(1, nsub + 1):
            a = current.alpha + (target - current.alpha) * (k / nsub) if k < nsub else target
            current = _advance(geom, n, current, a)[-1]
        out.append(current)
    return out


def strip_guess(geom: SectionGeometry, n: int, alpha: complex, iterations: int = 40) -> complex:
    """Seed for branch ``n`` at large ``alpha`` by fixed-point iteration on the log form.

    Iterates ``theta = log((alpha+theta)/(alpha-theta)) / (i ell) + k nu`` with ``k``
    chosen so that ``Re theta`` stays in the strip of branch ``n``.
    """
    nu, ell = geom.nu, geom.ell
    theta = complex((n + 0.5) * nu, -math.log(n + 2.0) / ell)
    for _ in range(iterations):
        w = cmath.log((alpha + theta) / (alpha - theta)) / (1j * ell)
        k = math.floor((n * nu - w.real) / nu) + 1
        new = w + k * nu
        if abs(new - theta) < 1e-14 * max(1.0, abs(theta)):
            theta = new
            break
        theta = new
    return theta


def solve_root(geom: SectionGeometry, n: int, alpha, guess=None) -> TransverseRoot:
    """Root of branch ``n`` at ``alpha``.

    Without a guess the branch is continued along the segment from 0 to
    ``alpha``.
    """
    if n < 0:
        raise ValueError("branch index must be nonnegative")
    alpha = complex(alpha)
    if alpha == 0:
        return _seed_root(geom, n)
    if guess is not None:
        return _polish(geom, n, alpha, complex(guess))
    return continuation_sweep(geom, n, [0.0, alpha])[-1]


def transverse_mode(geom: SectionGeometry, root: TransverseRoot) -> TransverseMode:
    """Closed-form eigenfunction with the cosine coefficient fixed to 1."""
    th, a, ell = root.theta, root.alpha, geom.ell
    if th == 0:
        return TransverseMode(root=root, coeff_b=0j, pairing=complex(ell), ell=ell)
    b = -1j * a / th
    # int_0^ell (cos + b sin)^2
    s2 = cmath.sin(2 * th * ell)
    c2 = cmath.cos(2 * th * ell)
    i_cc = ell / 2 + s2 / (4 * th)
    i_ss = ell / 2 - s2 / (4 * th)
    i_cs = (1 - c2) / (4 * th)
    pairing = i_cc + 2 * b * i_cs + b * b * i_ss
    return TransverseMode(root=root, coeff_b=b, pairing=pairing, ell=ell)


def lambda0_slope(geom: SectionGeometry, alpha_small: float) -> complex:
    """``lambda_0(alpha) / alpha`` for small positive ``alpha`` (tends to ``-i Upsilon``)."""
    if not (0 < alpha_small <= 0.05):
        raise ValueError("alpha_small must lie in (0, 0.05]")
    root = solve_root(geom, 0, alpha_small)
    return root.lam / alpha_small


# --- high-index asymptotics -------------------------------------------------


@dataclass(frozen=True)
class LogWindow:
    beta: float


@dataclass(frozen=True)
class Proportional:
    gamma: float


@dataclass(frozen=True)
class Power:
    rho: float
    s: float


@dataclass(frozen=True)
class AsymptoticRecord:
    regime: object
    n: int
    alpha: float
    theta: complex
    quantity: str
    predicted: float
    computed: float
    rel_error: float
    im_ratio: float  # -Im theta over its leading-order prediction (log-type laws)


def regime_alpha(geom: SectionGeometry, regime, n: int) -> float:
    nu = geom.nu
    if isinstance(regime, LogWindow):
        return n * nu + regime.beta * math.log(n)
    if isinstance(regime, Proportional):
        return regime.gamma * n * nu
    if isinstance(regime, Power):
        return n * nu + regime.s * n ** regime.rho
    raise TypeError(f"unknown regime {regime!r}")


def asymptotic_probe(geom: SectionGeometry, regime, n: int) -> AsymptoticRecord:
    """Compare ``theta_n`` at the regime's ``alpha(n)`` with its large-``n`` limit.

    The compared quantity is the one with a genuine finite limit:
    ``Re theta - n nu`` for the log window and power laws, ``|Im theta|`` for
    proportional damping.  The logarithmic growth laws of ``-Im theta`` are
    reported as ``im_ratio`` (they converge like ``1/ln n``).
    """
    if n < 100:
        raise ValueError("asymptotic probes need n >= 100")
    nu, ell = geom.nu, geom.ell
    alpha = regime_alpha(geom, regime, n)
    root = solve_root(geom, n, alpha, guess=strip_guess(geom, n, alpha))
    th = root.theta
    shift = th.real - n * nu
    if isinstance(regime, LogWindow):
        arg = cmath.phase(complex(regime.beta, 1.0 / ell))
        predicted = (nu / math.pi) * (math.pi - arg)
        computed = shift
        im_pred = math.log(n) / ell
        quantity = "re_shift"
    elif isinstance(regime, Proportional):
        g = regime.gamma
        if g <= 0 or g == 1:
            raise ValueError("gamma must be positive and different from 1")
        predicted = math.log(abs((1 + g) / (1 - g))) / ell
        computed = abs(th.imag)
        im_pred = predicted
        quantity = "abs_im"
    else:
        if not (0 < regime.rho < 1) or regime.s == 0:
            raise ValueError("power regime needs rho in (0,1) and s != 0")
        predicted = 0.0 if regime.s < 0 else nu
        computed = shift
        im_pred = (1 - regime.rho) * math.log(n) / ell
        quantity = "re_shift"
    if predicted != 0:
        rel = abs(computed - predicted) / abs(predicted)
    else:
        rel = abs(computed - predicted) / nu
    return AsymptoticRecord(
        regime=regime, n=n, alpha=alpha, theta=th, quantity=quantity,
        predicted=predicted, computed=computed, rel_error=rel,
        im_ratio=-th.imag / im_pred,
    )


def write_roots_csv(roots: Iterable[TransverseRoot], fh) -> None:
    """CSV with columns n, alpha, re_theta, im_theta, residual sorted by (n, alpha)."""
    rows = sorted(roots, key=lambda r: (r.n, r.alpha.real, r.alpha.imag))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "alpha", "re_theta", "im_theta", "residual"])
    for r in rows:
        a = r.alpha.real if r.alpha.imag == 0 else r.alpha
        w.writerow([r.n, repr(a) if isinstance(a, complex) else f"{a:.17g}",
                    f"{r.theta.real:.17g}", f"{r.theta.imag:.17g}", f"{r.residual:.6e}"])
