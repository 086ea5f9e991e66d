"""Stationary resolvent of the damped guide and its spectral pieces.

The guide operator separates as ``H_alpha = Lambda + T_alpha`` with
``Lambda = -d^2/dx^2``.  On a periodic box ``Lambda`` is a Fourier multiplier,
so ``(H_alpha - zeta)^{-1}`` reduces to one tridiagonal transverse solve per
longitudinal wavenumber.  The damped wave resolvent is
``R_a(z) = (H_{az} - z^2)^{-1}``.

Fields are arrays of shape ``(Nxi, Ny + 1)`` holding nodal values on the
periodic x-grid times the transverse grid (boundary nodes included).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.special import roots_legendre

from ._kernels import batched_tridiag_solve
from .discrete import Grid1D, OperatorMatrix, _tridiag_solve, assemble, full_spectrum
from .errors import ContourTooClose, EigSolverFailure, NearSpectrum, OnSpectrum
from .transverse import SectionGeometry, solve_root

APPLY_MARGIN = 1e-8
CONTOUR_MARGIN = 1e-3
CONTOUR_MAX_NORM = 1e6
ARC_NODES = 8
OUTGOING_CHUNK = 2 ** 22  # complex entries per convolution block


def japanese(x, power: float):
    """``<x>^power`` with ``<x> = (1 + x^2)^{1/2}``."""
    return (1.0 + np.asarray(x, dtype=float) ** 2) ** (0.5 * power)


@dataclass
class GuideResolventProblem:
    """Periodic box ``[-box/2, box/2)`` times the section ``[0, ell]``.

    ``Ny`` counts transverse intervals.  ``symbol`` selects the longitudinal
    multiplier: ``"spectral"`` uses ``xi^2``, ``"fd"`` the centred second
    difference ``4 sin^2(xi dx / 2) / dx^2``.
    """

    geom: SectionGeometry
    a: float = 1.0
    z: complex = 0.5 + 0.1j
    box: float = 200.0
    Nxi: int = 1024
    Ny: int = 48
    symbol: str = "spectral"

    def __post_init__(self):
        self.z = complex(self.z)
        if self.Nxi < 2 or self.Nxi % 2:
            raise ValueError("Nxi must be even")
        if self.box <= 0:
            raise ValueError("box must be positive")
        if self.Ny < 17:
            raise ValueError("Ny must be at least 17")
        if self.z.imag < 0:
            raise ValueError("need Im z >= 0")
        if self.symbol not in ("spectral", "fd"):
            raise ValueError(f"unknown symbol {self.symbol!r}")

    def with_z(self, z) -> "GuideResolventProblem":
        return GuideResolventProblem(self.geom, self.a, z, self.box, self.Nxi, self.Ny, self.symbol)

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.Ny - 1, self.geom.ell)

    @property
    def dx(self) -> float:
        return self.box / self.Nxi

    @property
    def x(self) -> np.ndarray:
        return -0.5 * self.box + self.dx * np.arange(self.Nxi)

    @property
    def y(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def xi(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.Nxi, self.dx)

    @property
    def lam_x(self) -> np.ndarray:
        """Eigenvalues of the longitudinal operator on the box."""
        if self.symbol == "spectral":
            return self.xi ** 2
        return (2.0 * np.sin(0.5 * self.xi * self.dx) / self.dx) ** 2

    def transverse(self, alpha) -> OperatorMatrix:
        return assemble(self.geom, alpha, 1.0, self.grid)

    def to_dict(self) -> dict:
        return {"ell": self.geom.ell, "a": self.a, "z": [self.z.real, self.z.imag],
                "box": self.box, "Nxi": self.Nxi, "Ny": self.Ny, "symbol": self.symbol}

    @classmethod
    def from_dict(cls, d: dict) -> "GuideResolventProblem":
        d = dict(d)
        geom = SectionGeometry(float(d.pop("ell", math.pi)))
        z = d.pop("z", [0.5, 0.1])
        if isinstance(z, (list, tuple)):
            z = complex(z[0], z[1])
        return cls(geom=geom, z=z, **d)


# --- norms and basic operations --------------------------------------------


def l2_norm(problem: GuideResolventProblem, f, power: float = 0.0) -> float:
    """``|| <x>^power f ||`` with trapezoid weights in y."""
    wy = problem.grid.weights
    g = np.abs(f) ** 2 * japanese(problem.x, 2 * power)[:, None]
    return math.sqrt(problem.dx * float(np.sum(g * wy)))


def section_mean(problem: GuideResolventProblem, f) -> np.ndarray:
    """``P_omega f``: the transverse average, broadcast back over y."""
    wy = problem.grid.weights
    m = (f * wy).sum(axis=1) / problem.geom.ell
    return np.repeat(m[:, None], f.shape[1], axis=1)


def x_multiplier(problem: GuideResolventProblem, f, mult):
    """Apply a Fourier multiplier in x (``mult`` indexed like ``problem.xi``)."""
    mult = np.asarray(mult)
    fh = np.fft.fft(f, axis=0)
    return np.fft.ifft(fh * (mult if mult.ndim == 2 else mult[:, None]), axis=0)


def transverse_margin(problem: GuideResolventProblem, alpha, zeta) -> tuple[float, int, int]:
    """Distance from ``zeta`` to ``{lam_x + lambda_m(alpha)}`` and the closest pair."""
    lam_y = full_spectrum(problem.transverse(alpha))
    d = np.abs(problem.lam_x[:, None] + lam_y[None, :] - zeta)
    k, m = np.unravel_index(int(np.argmin(d)), d.shape)
    return float(d[k, m]), int(k), int(m)


def solve_shifted(problem: GuideResolventProblem, alpha, zeta, f, margin: float = APPLY_MARGIN,
                  adjoint: bool = False, check: bool = True):
    """``(Lambda + T_alpha - zeta)^{-1} f`` on the box.

    With ``adjoint`` the adjoint for the trapezoid inner product is applied.
    Raises ``NearSpectrum`` when ``zeta`` is within ``margin * max(1, |zeta|)``
    of the discrete spectrum.
    """
    zeta = complex(zeta)
    if check:
        dist, k, m = transverse_margin(problem, alpha, zeta)
        if dist <= margin * max(1.0, abs(zeta)):
            raise NearSpectrum(
                f"zeta={zeta:.6g} within {dist:.2e} of xi^2 + lambda_{m}",
                xi=float(problem.xi[k]), mode=m, distance=dist)
    mat = problem.transverse(alpha)
    s = mat.sqrt_weights
    f = np.asarray(f, dtype=complex)
    scalar = f.ndim == 2
    fb = f[..., None] if scalar else f
    rhs = np.fft.fft(fb, axis=0) * s[None, :, None]
    rhs = np.ascontiguousarray(rhs)
    diag, off = mat.diag, mat.off
    shifts = problem.lam_x - zeta
    if adjoint:
        diag, off, shifts = diag.conj(), off.conj(), np.conj(shifts)
    ok = batched_tridiag_solve(np.ascontiguousarray(diag), np.ascontiguousarray(off),
                               np.ascontiguousarray(shifts.astype(complex)), rhs, False)
    if not ok.all():
        k = int(np.flatnonzero(~ok)[0])
        raise NearSpectrum(f"singular transverse system at xi={problem.xi[k]:.6g}",
                           xi=float(problem.xi[k]), distance=0.0)
    u = np.fft.ifft(rhs / s[None, :, None], axis=0)
    return u[..., 0] if scalar else u


def apply_operator(problem: GuideResolventProblem, alpha, u):
    """``(Lambda + T_alpha) u`` with the same discretisation as the solver."""
    mat = problem.transverse(alpha)
    lu = x_multiplier(problem, u, problem.lam_x)
    s = mat.sqrt_weights
    w = u * s
    tw = mat.diag * w
    tw[:, :-1] += mat.off * w[:, 1:]
    tw[:, 1:] += mat.off * w[:, :-1]
    return lu + tw / s


def apply_resolvent(problem: GuideResolventProblem, f, margin: float = APPLY_MARGIN):
    """``R_a(z) f = (H_{az} - z^2)^{-1} f`` at ``z = problem.z``."""
    z = problem.z
    return solve_shifted(problem, problem.a * z, z * z, f, margin=margin)


def resolvent_residual(problem: GuideResolventProblem, u, f) -> float:
    """``||(H_{az} - z^2) u - f|| / ||f||`` for the discrete equation."""
    z = problem.z
    r = apply_operator(problem, problem.a * z, u) - z * z * u - f
    nf = l2_norm(problem, f)
    return l2_norm(problem, r) / nf if nf > 0 else l2_norm(problem, r)


def resolvent_identity_residual(problem: GuideResolventProblem, alpha, zeta1, zeta2, probes) -> float:
    """Max over probes of ``||R(z1) f - R(z2) f - (z1 - z2) R(z1) R(z2) f|| / ||f||``.

    ``R(zeta) = (Lambda + T_alpha - zeta)^{-1}`` at fixed ``alpha``.
    """
    worst = 0.0
    for f in probes:
        r2 = solve_shifted(problem, alpha, zeta2, f)
        r1 = solve_shifted(problem, alpha, zeta1, f)
        r12 = solve_shifted(problem, alpha, zeta1, r2)
        d = r1 - r2 - (zeta1 - zeta2) * r12
        worst = max(worst, l2_norm(problem, d) / l2_norm(problem, f))
    return worst


def gaussian_probe(problem: GuideResolventProblem, width: float = 1.0, center: float = 0.0,
                   y_profile: Sequence[float] = (1.0,)):
    """``exp(-(x-c)^2 / (2 w^2)) * sum_k c_k cos(k pi y / ell)``."""
    gx = np.exp(-0.5 * ((problem.x - center) / width) ** 2)
    y = problem.y
    gy = sum(c * np.cos(k * np.pi * y / problem.geom.ell) for k, c in enumerate(y_profile))
    return np.outer(gx, gy).astype(complex)


def random_probes(problem: GuideResolventProblem, count: int, seed: int = 0, width: float = 4.0):
    """Smooth random fields localised near ``x = 0``."""
    rng = np.random.default_rng(seed)
    env = np.exp(-0.5 * (problem.x / width) ** 2)[:, None]
    shape = (problem.Nxi, problem.Ny + 1)
    return [env * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            for _ in range(count)]


# --- contours and Riesz projections -----------------------------------------


@dataclass(frozen=True)
class RieszContour:
    """Closed, counter-clockwise contour with a quadrature rule.

    ``circle``: ``|sigma - center| = radius`` with the trapezoid rule.
    ``rectangle``: the box ``[re_min, re_max] x [im_min, im_max]`` with corners
    rounded by quarter circles of radius ``corner``; Gauss-Legendre nodes on
    every piece, ``ARC_NODES`` per arc and the rest shared by the sides.
    """

    kind: str
    M: int = 256
    center: complex = 0j
    radius: float = 1.0
    re_min: float = -1.0
    re_max: float = 1.0
    im_min: float = -1.0
    im_max: float = 1.0
    corner: float | None = None

    def __post_init__(self):
        if self.kind not in ("circle", "rectangle"):
            raise ValueError(f"unknown contour kind {self.kind!r}")
        if self.M < 64:
            raise ValueError("need at least 64 quadrature nodes")
        if self.kind == "circle" and self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.kind == "rectangle":
            if not (self.re_min < self.re_max and self.im_min < self.im_max):
                raise ValueError("empty rectangle")
            if self.corner_radius * 2 > min(self.re_max - self.re_min, self.im_max - self.im_min):
                raise ValueError("corner radius too large")

    @classmethod
    def circle(cls, center, radius, M: int = 256) -> "RieszContour":
        return cls("circle", M=M, center=complex(center), radius=float(radius))

    @classmethod
    def rectangle(cls, re_min, re_max, im_min, im_max, M: int = 256, corner=None) -> "RieszContour":
        return cls("rectangle", M=M, re_min=re_min, re_max=re_max, im_min=im_min,
                   im_max=im_max, corner=corner)

    @property
    def corner_radius(self) -> float:
        if self.corner is not None:
            return float(self.corner)
        return 0.1 * min(self.re_max - self.re_min, self.im_max - self.im_min)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``sigma_k`` and weights ``w_k`` with ``sum w_k f(sigma_k) ~ contour integral``."""
        if self.kind == "circle":
            phi = 2 * np.pi * np.arange(self.M) / self.M
            e = np.exp(1j * phi)
            return self.center + self.radius * e, 1j * self.radius * e * (2 * np.pi / self.M)
        r = self.corner_radius
        x0, x1, y0, y1 = self.re_min, self.re_max, self.im_min, self.im_max
        sides = [  # counter-clockwise, starting on the bottom edge
            (complex(x0 + r, y0), complex(x1 - r, y0)),
            (complex(x1, y0 + r), complex(x1, y1 - r)),
            (complex(x1 - r, y1), complex(x0 + r, y1)),
            (complex(x0, y1 - r), complex(x0, y0 + r)),
        ]
        arcs = [  # centre, start angle; each arc turns by pi/2
            (complex(x1 - r, y0 + r), -0.5 * np.pi),
            (complex(x1 - r, y1 - r), 0.0),
            (complex(x0 + r, y1 - r), 0.5 * np.pi),
            (complex(x0 + r, y0 + r), np.pi),
        ]
        lengths = np.array([abs(b - a) for a, b in sides])
        budget = self.M - 4 * ARC_NODES
        counts = np.maximum(8, np.round(budget * lengths / lengths.sum()).astype(int))
        nodes, weights = [], []
        for (a, b), n, (c, t0) in zip(sides, counts, arcs):
            t, w = roots_legendre(int(n))
            nodes.append(a + (b - a) * (t + 1) / 2)
            weights.append((b - a) / 2 * w)
            t, w = roots_legendre(ARC_NODES)
            ang = t0 + np.pi / 4 * (t + 1)
            e = np.exp(1j * ang)
            nodes.append(c + r * e)
            weights.append(1j * r * e * (np.pi / 4) * w)
        return np.concatenate(nodes), np.concatenate(weights)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=complex)
        if self.kind == "circle":
            return np.abs(p - self.center) < self.radius
        r = self.corner_radius
        inside = ((p.real > self.re_min) & (p.real < self.re_max)
                  & (p.imag > self.im_min) & (p.imag < self.im_max))
        # trim the rounded corners
        cx = np.clip(p.real, self.re_min + r, self.re_max - r)
        cy = np.clip(p.imag, self.im_min + r, self.im_max - r)
        return inside & (np.abs(p - (cx + 1j * cy)) < r)

    def distance(self, points) -> np.ndarray:
        """Distance from each point to the contour."""
        p = np.asarray(points, dtype=complex)
        if self.kind == "circle":
            return np.abs(np.abs(p - self.center) - self.radius)
        r = self.corner_radius
        cx = np.clip(p.real, self.re_min + r, self.re_max - r)
        cy = np.clip(p.imag, self.im_min + r, self.im_max - r)
        # the rounded rectangle is the r-neighbourhood of the inner rectangle
        d_inner = np.abs(p - (cx + 1j * cy))
        inside_inner = ((p.real >= self.re_min + r) & (p.real <= self.re_max - r)
                        & (p.imag >= self.im_min + r) & (p.imag <= self.im_max - r))
        depth = np.minimum.reduce([p.real - self.re_min, self.re_max - p.real,
                                   p.imag - self.im_min, self.im_max - p.imag])
        return np.where(inside_inner, depth, np.abs(d_inner - r))

    def to_dict(self) -> dict:
        if self.kind == "circle":
            return {"kind": "circle", "M": self.M, "center": [self.center.real, self.center.imag],
                    "radius": self.radius}
        return {"kind": "rectangle", "M": self.M, "re_min": self.re_min, "re_max": self.re_max,
                "im_min": self.im_min, "im_max": self.im_max, "corner": self.corner_radius}


@dataclass
class JordanModel:
    """Finite spectral piece of an operator in Jordan form.

    Column ``offsets[j] + k`` of ``basis`` is ``phi_{j,k}``; the chains obey
    ``(T - lambda_j) phi_{j,0} = 0`` and ``(T - lambda_j) phi_{j,k} = phi_{j,k-1}``.
    ``dual`` holds the biorthogonal rows (``dual @ basis = I``); it defaults to
    the inverse of a square basis.
    """

    lambdas: np.ndarray
    sizes: np.ndarray
    basis: np.ndarray
    dual: np.ndarray | None = None
    cond: float = field(init=False)

    def __post_init__(self):
        self.lambdas = np.atleast_1d(np.asarray(self.lambdas, dtype=complex))
        self.sizes = np.atleast_1d(np.asarray(self.sizes, dtype=int))
        self.basis = np.asarray(self.basis, dtype=complex)
        if self.lambdas.shape != self.sizes.shape or (self.sizes < 1).any():
            raise ValueError("one positive block size per eigenvalue required")
        if self.basis.shape[1] != self.sizes.sum():
            raise ValueError("basis width must equal the total block size")
        sv = np.linalg.svd(self.basis, compute_uv=False)
        self.cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
        if not np.isfinite(self.cond):
            raise ValueError("basis is singular")
        if self.dual is None:
            if self.basis.shape[0] != self.basis.shape[1]:
                raise ValueError("non-square basis needs explicit dual rows")
            self.dual = np.linalg.inv(self.basis)
        self.dual = np.asarray(self.dual, dtype=complex)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]])

    @property
    def rank(self) -> int:
        return int(self.sizes.sum())

    def jordan_matrix(self) -> np.ndarray:
        r = self.rank
        J = np.zeros((r, r), dtype=complex)
        for lam, n, o in zip(self.lambdas, self.sizes, self.offsets):
            for k in range(n):
                J[o + k, o + k] = lam
                if k:
                    J[o + k - 1, o + k] = 1.0
        return J

    def matrix(self) -> np.ndarray:
        """``basis J dual``: the operator itself for a square basis, ``T P`` otherwise."""
        return self.basis @ self.jordan_matrix() @ self.dual

    def projection(self) -> np.ndarray:
        return self.basis @ self.dual

    def decompose(self, u) -> np.ndarray:
        """Coordinates ``u_{j,k}``; the last axis of ``u`` is the transverse one."""
        return np.asarray(u) @ self.dual.T

    def synthesize(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.basis.T

    def chain_residual(self, T) -> float:
        """Largest defect of the chain relations against the matrix ``T``."""
        worst = 0.0
        for lam, n, o in zip(self.lambdas, self.sizes, self.offsets):
            for k in range(n):
                r = T @ self.basis[:, o + k] - lam * self.basis[:, o + k]
                if k:
                    r = r - self.basis[:, o + k - 1]
                worst = max(worst, float(np.linalg.norm(r)))
        return worst

    @classmethod
    def jordan_block(cls, lam, size: int = 2, basis=None) -> "JordanModel":
        basis = np.eye(size, dtype=complex) if basis is None else basis
        return cls(lambdas=[lam], sizes=[size], basis=basis)

    @classmethod
    def from_matrix(cls, T, contour: RieszContour, cluster_tol: float = 1e-6) -> "JordanModel":
        """Eigenpairs of ``T`` enclosed by ``contour`` (assumed semisimple)."""
        T = np.asarray(T, dtype=complex)
        w, vl, vr = sla.eig(T, left=True, right=True)
        inside = np.flatnonzero(contour.contains(w))
        if inside.size == 0:
            raise EigSolverFailure("no eigenvalue inside the contour")
        lam = w[inside]
        gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(lam.size)
        if lam.size > 1 and gaps.min() < cluster_tol * max(1.0, np.abs(lam).max()):
            raise EigSolverFailure("clustered eigenvalues: Jordan structure not resolved")
        basis = vr[:, inside]
        dual = vl[:, inside].conj().T
        dual = dual / np.sum(dual * basis.T, axis=1)[:, None]
        return cls(lambdas=lam, sizes=np.ones(lam.size, dtype=int), basis=basis, dual=dual)


def operator_array(operator) -> np.ndarray:
    """Dense matrix for an ``OperatorMatrix`` (symmetrised), ``JordanModel`` or array."""
    if isinstance(operator, OperatorMatrix):
        return operator.entries
    if isinstance(operator, JordanModel):
        return operator.matrix()
    return np.asarray(operator, dtype=complex)


def _check_contour(T, contour: RieszContour):
    if T.shape[0] <= 2000:
        ev = np.linalg.eigvals(T)
        d = contour.distance(ev)
        if d.min() < CONTOUR_MARGIN:
            lam = ev[int(np.argmin(d))]
            raise ContourTooClose(f"eigenvalue {lam:.6g} within {d.min():.2e} of the contour")


def riesz_projection(operator, contour: RieszContour, check: bool = True) -> np.ndarray:
    """``P = -(1/2 pi i) \\oint (T - sigma)^{-1} d sigma`` by quadrature.

    Raises ``ContourTooClose`` when an eigenvalue is within the margin or the
    resolvent norm on a node exceeds ``CONTOUR_MAX_NORM``.
    """
    T = operator_array(operator)
    n = T.shape[0]
    if check:
        _check_contour(T, contour)
    nodes, weights = contour.quadrature()
    P = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for s, w in zip(nodes, weights):
        R = np.linalg.inv(T - s * eye)
        if check and np.linalg.norm(R) > CONTOUR_MAX_NORM:
            nrm = np.linalg.norm(R, 2)
            if nrm > CONTOUR_MAX_NORM:
                raise ContourTooClose(f"resolvent norm {nrm:.2e} at sigma={s:.6g}")
        P += w * R
    return P / (-2j * np.pi)


def riesz_apply(matrix: OperatorMatrix, contour: RieszContour, vectors) -> np.ndarray:
    """``P`` applied to the columns of ``vectors`` (symmetrised coordinates).

    Uses one tridiagonal solve per node, so large grids are affordable.
    """
    v = np.asarray(vectors, dtype=complex)
    nodes, weights = contour.quadrature()
    out = np.zeros_like(v)
    for s, w in zip(nodes, weights):
        out += w * _tridiag_solve(matrix, s, v)
    return out / (-2j * np.pi)


def lambda0_contour(geom: SectionGeometry, alpha: float, M: int = 256) -> RieszContour:
    """Rectangle around ``lambda_0(alpha)`` that excludes ``lambda_1``.

    Valid for small ``alpha``, where ``lambda_0 ~ -i Upsilon alpha`` and
    ``lambda_1`` stays close to ``nu^2``.
    """
    half = 0.5 * geom.nu ** 2
    return RieszContour.rectangle(-half, half, -half, half, M=M)


# --- mode resolvent ---------------------------------------------------------


def mode_resolvent(jordan: JordanModel, lam_x, zeta, coeffs, tol: float = 1e-12):
    """``R_Gamma(zeta) u`` from the coordinates ``u_{j,k}``.

    ``sum_j sum_k sum_{l<=k} (-1)^{k-l} (Lambda - zeta + lambda_j)^{-1-k+l} u_{j,k} phi_{j,l}``

    ``lam_x`` is either a scalar (``Lambda`` acting as a number) with ``coeffs``
    of shape ``(r,)``, or the multiplier on a periodic grid with ``coeffs`` of
    shape ``(Nxi, r)`` in x-space.  The output has the basis' row dimension as
    its last axis.
    """
    zeta = complex(zeta)
    scalar = np.ndim(lam_x) == 0
    scale = max(1.0, abs(zeta))
    for lam in jordan.lambdas:
        gap = zeta - lam
        if scalar:
            if abs(complex(lam_x) - gap) <= tol * scale:
                raise OnSpectrum(f"zeta={zeta:.6g} is an eigenvalue of the mode operator")
        elif abs(gap.imag) <= tol * scale and gap.real >= -tol * scale:
            raise OnSpectrum(f"zeta={zeta:.6g} lies on lambda={lam:.6g} + [0, inf)")
    c = np.asarray(coeffs, dtype=complex)
    ch = c if scalar else np.fft.fft(c, axis=0)
    out = np.zeros(ch.shape[:-1] + (jordan.basis.shape[0],), dtype=complex)
    for lam, n, o in zip(jordan.lambdas, jordan.sizes, jordan.offsets):
        inv = 1.0 / (np.asarray(lam_x) - zeta + lam)
        for k in range(n):
            for l in range(k + 1):
                coef = (-1.0) ** (k - l) * inv ** (1 + k - l) * ch[..., o + k]
                out += np.multiply.outer(coef, jordan.basis[:, o + l])
    return out if scalar else np.fft.ifft(out, axis=0)


def transverse_jordan(problem: GuideResolventProblem, alpha, contour: RieszContour) -> JordanModel:
    """Jordan model of the discrete ``T_alpha`` (physical nodal coordinates) inside ``contour``."""
    mat = problem.transverse(alpha)
    s = mat.sqrt_weights
    A = mat.entries * (s[None, :] / s[:, None])
    return JordanModel.from_matrix(A, contour)


def mode_consistency_residual(problem: GuideResolventProblem, alpha, jordan: JordanModel,
                              zeta, f) -> float:
    """``||(H_alpha - zeta) R_Gamma(zeta) f - P_Gamma f|| / ||P_Gamma f||``."""
    c = jordan.decompose(f)
    u = mode_resolvent(jordan, problem.lam_x, zeta, c)
    lhs = apply_operator(problem, alpha, u) - zeta * u
    pf = jordan.synthesize(c)
    return l2_norm(problem, lhs - pf) / l2_norm(problem, pf)


def mode_remainder(problem: GuideResolventProblem, alpha, jordan: JordanModel, zeta, f):
    """``B_Gamma(zeta) f = (H_alpha - zeta)^{-1} f - R_Gamma(zeta) f``."""
    full = solve_shifted(problem, alpha, zeta, f)
    return full - mode_resolvent(jordan, problem.lam_x, zeta, jordan.decompose(f))


# --- low frequencies --------------------------------------------------------


def heat_resolvent(problem: GuideResolventProblem, f):
    """``(Lambda - i a Upsilon z)^{-1} P_omega f`` as a Fourier multiplier."""
    w = 1j * problem.a * problem.geom.upsilon * problem.z
    return x_multiplier(problem, section_mean(problem, f), 1.0 / (problem.lam_x - w))


def low_freq_expansion_error(problem: GuideResolventProblem, f, delta: float = 2.5) -> float:
    """Weighted error of the leading heat term of ``R_a(z)`` at small ``z``.

    ``||<x>^{-delta} (R_a(z) f - (Lambda - i a Upsilon z)^{-1} P_omega f)|| / ||<x>^delta f||``
    """
    z = problem.z
    if abs(z) > 0.2 or z.imag <= 0:
        raise ValueError("need |z| <= 0.2 and Im z > 0")
    u = apply_resolvent(problem, f)
    err = u - heat_resolvent(problem, f)
    return l2_norm(problem, err, -delta) / l2_norm(problem, f, delta)


def low_freq_sigma(geom: SectionGeometry, a: float, alpha: float = 1e-3) -> complex:
    """Order-one coefficient ``sigma = 1 - a^2 c`` where ``lambda_0(alpha) = -i Upsilon alpha + c alpha^2 + ...``.

    ``c`` is estimated from two small ``alpha`` values with Richardson
    extrapolation.
    """
    def c_of(al):
        lam = solve_root(geom, 0, al).lam
        return (lam + 1j * geom.upsilon * al) / al ** 2

    c = 2 * c_of(alpha / 2) - c_of(alpha)
    return 1.0 - a * a * c


# --- heat resolvent jumps ---------------------------------------------------


def _outgoing_terms(j: int, beta: int) -> list[tuple[complex, int, int]]:
    """Terms ``(c, p, q)`` with kernel ``sum c kappa^p |r|^q e^{i kappa |r|}``.

    Represents ``d^beta/dx`` of the kernel of ``(Lambda - w)^{-1-j}`` with
    ``w = kappa^2``, ``Im kappa > 0``; for ``beta = 1`` the whole kernel carries
    an extra factor ``sign(r)``.
    """
    terms = [(0.5j, -1, 0)] if beta == 0 else [(-0.5 + 0j, 0, 0)]
    for m in range(j):
        new = {}
        for c, p, q in terms:
            # d/dw = (1 / 2 kappa) d/dkappa, then divide by (m + 1)
            for cc, pp, qq in ((c * p, p - 2, q), (1j * c, p - 1, q + 1)):
                if cc != 0:
                    new[(pp, qq)] = new.get((pp, qq), 0) + cc / (2 * (m + 1))
        terms = [(c, p, q) for (p, q), c in new.items()]
    return terms


def _kernel(kappa: complex, r, j: int, beta: int):
    r = np.asarray(r, dtype=float)
    ar = np.abs(r)
    e = np.exp(1j * kappa * ar)
    k = sum(c * kappa ** p * ar ** q for c, p, q in _outgoing_terms(j, beta)) * e
    return k * np.sign(r) if beta else k


def jump_kernel(s: float, r, j: int = 0, beta: int = 0):
    """Kernel of ``d^beta [(Lambda - (s + i0))^{-1-j} - (Lambda - (s - i0))^{-1-j}]``.

    For ``j = beta = 0`` it equals ``(i / kappa) cos(kappa r)``.
    """
    k = _kernel(complex(math.sqrt(s)), r, j, beta)
    return 2j * k.imag


def jump_kernel_eps(s: float, eps: float, r, j: int = 0, beta: int = 0):
    """Same difference at finite ``eps`` (decaying kernels on both sides)."""
    kp = np.sqrt(complex(s, eps))
    km = -np.sqrt(complex(s, -eps))
    return _kernel(kp, r, j, beta) - _kernel(km, r, j, beta)


@dataclass(frozen=True)
class JumpFit:
    j: int
    beta: int
    s: np.ndarray
    norms: np.ndarray
    slope: float

    @property
    def predicted(self) -> float:
        return 0.5 - self.j - 1 + self.beta


def jump_operator_norm(s: float, j: int = 0, beta: int = 0, delta: float = 2.5,
                       X: float = 60.0, n: int = 1201) -> float:
    """L2 norm of ``<x>^{-delta} K_s <x>^{-delta}`` discretised by the trapezoid rule."""
    x = np.linspace(-X, X, n)
    w = np.full(n, x[1] - x[0])
    w[0] = w[-1] = 0.5 * w[0]
    K = jump_kernel(s, x[:, None] - x[None, :], j, beta)
    g = japanese(x, -delta) * np.sqrt(w)
    return float(np.linalg.norm(g[:, None] * K * g[None, :], 2))


def heat_jump_exponent(j: int, beta: int, s_grid, delta: float = 2.5, X: float = 60.0,
                       n: int = 1201) -> JumpFit:
    """Log-log slope in ``s`` of the weighted jump norm (one longitudinal dimension)."""
    if beta not in (0, 1):
        raise ValueError("beta must be 0 or 1")
    if delta <= 0.5 + j:
        raise ValueError("need delta > 1/2 + j")
    s = np.asarray(s_grid, dtype=float)
    if (s <= 0).any() or s.size < 2:
        raise ValueError("need at least two positive s values")
    norms = np.array([jump_operator_norm(si, j, beta, delta, X, n) for si in s])
    slope = float(np.polyfit(np.log(s), np.log(norms), 1)[0])
    return JumpFit(j=j, beta=beta, s=s, norms=norms, slope=slope)


def kernel_limit_error(s: float, j: int = 0, beta: int = 0, eps: float = 1e-6,
                       X: float = 20.0, n: int = 401) -> float:
    """Relative gap between the finite-``eps`` difference and the limit kernel."""
    r = np.linspace(-X, X, n)
    lim = jump_kernel(s, r, j, beta)
    return float(np.abs(jump_kernel_eps(s, eps, r, j, beta) - lim).max() / np.abs(lim).max())


# --- outgoing longitudinal solves -------------------------------------------


def _longitudinal_green(problem: GuideResolventProblem, zeta_m) -> np.ndarray:
    """Matrix entries ``g[d, m]`` of ``(Lambda - zeta_m)^{-1}`` on the infinite x-lattice.

    ``"fd"`` uses the exact lattice Green's function ``h^2 r^|d| / (1/r - r)``
    with ``r + 1/r = 2 - zeta h^2``, ``|r| < 1``; ``"spectral"`` samples the
    outgoing kernel ``(i / 2 kappa) e^{i kappa |x|}`` with trapezoid weight ``h``.
    """
    h = problem.dx
    d = np.arange(problem.Nxi)[:, None]
    zeta_m = np.asarray(zeta_m, dtype=complex)[None, :]
    if problem.symbol == "fd":
        b = 1.0 - 0.5 * zeta_m * h * h
        r = b - np.sqrt(b * b - 1.0)
        r = np.where(np.abs(r) > 1.0, 1.0 / r, r)
        return h * h / (1.0 / r - r) * r ** d
    kappa = np.sqrt(zeta_m)
    kappa = np.where(kappa.imag < 0, -kappa, kappa)
    return h * 0.5j / kappa * np.exp(1j * kappa * d * h)


def half_line_distance(lam, zeta) -> np.ndarray:
    """Distance from ``zeta`` to the half-lines ``lam + [0, inf)``."""
    gap = complex(zeta) - np.asarray(lam, dtype=complex)
    return np.where(gap.real >= 0, np.abs(gap.imag), np.abs(gap))


def outgoing_solve(problem: GuideResolventProblem, alpha, zeta, f, adjoint: bool = False):
    """``(Lambda + T_alpha - zeta)^{-1} f`` with x in the whole line.

    The transverse matrix is diagonalised and every mode is convolved with the
    free longitudinal Green's function (linear FFT convolution, no wrap-around).
    ``f`` is treated as zero outside the box.  With ``adjoint`` the adjoint for
    the trapezoid inner product is applied.
    """
    mat = problem.transverse(alpha)
    lam, V = sla.eig(mat.entries)
    Vinv = np.linalg.inv(V)
    g = _longitudinal_green(problem, complex(zeta) - lam)
    if adjoint:
        V, Vinv, g = V.conj(), Vinv.conj(), g.conj()
    n = problem.Nxi
    c = np.zeros((2 * n, lam.size), dtype=complex)
    c[:n] = g
    c[n + 1:] = g[:0:-1]
    gh = np.fft.fft(c, axis=0)
    s = mat.sqrt_weights
    f = np.asarray(f, dtype=complex)
    single = f.ndim == 2
    fb = f[..., None] if single else f
    out = np.empty(fb.shape, dtype=complex)
    chunk = max(1, OUTGOING_CHUNK // (n * lam.size))
    for p0 in range(0, fb.shape[2], chunk):
        blk = fb[:, :, p0:p0 + chunk] * s[None, :, None]
        coeff = np.matmul(Vinv, blk)
        ch = np.fft.fft(coeff, 2 * n, axis=0) * gh[:, :, None]
        u = np.fft.ifft(ch, axis=0)[:n]
        out[:, :, p0:p0 + chunk] = np.matmul(V, u) / s[None, :, None]
    return out[..., 0] if single else out


def outgoing_margin(problem: GuideResolventProblem, alpha, zeta) -> float:
    """Distance from ``zeta`` to the whole-line spectrum ``{lambda_m(alpha) + [0, inf)}``."""
    lam = full_spectrum(problem.transverse(alpha))
    return float(half_line_distance(lam, zeta).min())


# --- frequency sweeps -------------------------------------------------------


@dataclass(frozen=True)
class FrequencyRegime:
    kind: str  # "intermediate" or "high"
    tau_min: float
    tau_max: float
    count: int = 8

    def __post_init__(self):
        if self.kind not in ("intermediate", "high"):
            raise ValueError(f"unknown regime {self.kind!r}")
        if not (0.1 <= self.tau_min < self.tau_max):
            raise ValueError("need 0.1 <= tau_min < tau_max")
        if self.count < 2:
            raise ValueError("need at least two frequencies")

    @property
    def taus(self) -> np.ndarray:
        if self.kind == "high":
            return np.geomspace(self.tau_min, self.tau_max, self.count)
        return np.linspace(self.tau_min, self.tau_max, self.count)


@dataclass(frozen=True)
class SweepRow:
    regime: str
    tau: float
    norm: float
    near_spectrum: bool
    distance: float
    iterations: int

    @property
    def tau_norm(self) -> float:
        return self.tau * self.norm


SWEEP_METHODS = ("outgoing", "box")


def weighted_resolvent_norm(problem: GuideResolventProblem, delta: float, probes: int = 20,
                            seed: int = 0, rtol: float = 0.05, maxiter: int = 40,
                            method: str = "outgoing") -> tuple[float, int]:
    """Randomised subspace iteration for ``||<x>^{-delta} R_a(z) <x>^{-delta}||``.

    ``method="box"`` uses the periodic box, ``"outgoing"`` the whole-line
    longitudinal Green's function.
    """
    if method not in SWEEP_METHODS:
        raise ValueError(f"unknown method {method!r}")
    solve = outgoing_solve if method == "outgoing" else partial(solve_shifted, check=False)
    z = problem.z
    alpha, zeta = problem.a * z, z * z
    g = japanese(problem.x, -delta)[:, None, None]
    s = np.sqrt(problem.grid.weights)[None, :, None]
    rng = np.random.default_rng(seed)
    shape = (problem.Nxi, problem.Ny + 1, probes)
    V = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    est, it = 0.0, 0
    for it in range(1, maxiter + 1):
        V, _ = np.linalg.qr(V.reshape(-1, probes))
        V = V.reshape(shape)
        # Euclidean coordinates e = sqrt(dx) s f; the sqrt(dx) cancels in B = s g R g / s
        BV = s * g * solve(problem, alpha, zeta, g * V / s)
        top = np.linalg.svd(BV.reshape(-1, probes), compute_uv=False)[0]
        V = s * g * solve(problem, alpha, zeta, g * BV / s, adjoint=True)
        if abs(top - est) <= rtol * top:
            est = top
            break
        est = top
    return est, it


def frequency_sweep(problem: GuideResolventProblem, regime: FrequencyRegime, delta: float = 1.0,
                    probes: int = 20, seed: int = 0, margin: float = 1e-5,
                    method: str = "outgoing", rtol: float = 0.05) -> list[SweepRow]:
    """Weighted resolvent norms along real frequencies.

    For ``a > 0`` the resolvent is evaluated directly at real ``tau``; for
    ``a = 0`` at ``tau + 1e-6 i``.  A frequency whose ``z^2`` lies within
    ``margin * max(1, tau^2)`` of the spectrum (whole-line or periodic box,
    following ``method``) is flagged rather than evaluated.
    """
    if regime.kind == "high" and delta <= 0.5:
        raise ValueError("high regime needs delta > 1/2")
    rows = []
    for tau in regime.taus:
        z = complex(tau, 0.0 if problem.a > 0 else 1e-6)
        p = problem.with_z(z)
        if method == "outgoing":
            dist = outgoing_margin(p, p.a * z, z * z)
        else:
            dist, _, _ = transverse_margin(p, p.a * z, z * z)
        if dist <= margin * max(1.0, tau * tau):
            rows.append(SweepRow(regime.kind, float(tau), math.inf, True, dist, 0))
            continue
        nrm, it = weighted_resolvent_norm(p, delta, probes, seed, rtol, method=method)
        rows.append(SweepRow(regime.kind, float(tau), nrm, False, dist, it))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["regime", "tau", "norm", "tau_norm", "near_spectrum", "distance"])
    for r in rows:
        w.writerow([r.regime, f"{r.tau:.17g}", f"{r.norm:.10e}", f"{r.tau_norm:.10e}",
                    int(r.near_spectrum), f"{r.distance:.6e}"])
