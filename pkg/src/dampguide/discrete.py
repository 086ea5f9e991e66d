"""Finite-difference discretisation of the semiclassical impedance operator.

``T_{alpha,h} = -h^2 d^2/dy^2`` on (0, ell) with ``h u'(0) = -i alpha u(0)`` and
``h u'(ell) = i alpha u(ell)``.  Nodes sit at ``j*spacing`` for ``j = 0..N+1``;
the two boundary nodes are unknowns and the Robin condition enters through a
centred ghost point, which keeps the scheme second order.

The ghost-point matrix is not symmetric in the Euclidean sense, but it is
symmetric for the trapezoid inner product (weight 1/2 at the two end nodes).
We store the similar matrix ``W^{1/2} A W^{-1/2}``: it is real symmetric for
``alpha = 0``, complex symmetric otherwise, and its spectral norm is the
discrete L2 operator norm.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from ._kernels import sigma_min_sweep
from .errors import DegenerateWindow, EigSolverFailure, NearSpectrum
from .transverse import SectionGeometry

SQRT2 = math.sqrt(2.0)
SVD_MAX_DIM = 2000
DENSE_MAX_DIM = 6000
SINGULAR_RTOL = 1e-13


@dataclass(frozen=True)
class Grid1D:
    """``N`` interior nodes plus the two boundary nodes on [0, ell]."""

    N: int
    ell: float

    def __post_init__(self):
        if self.N < 16:
            raise ValueError(f"need at least 16 interior nodes, got {self.N}")

    @property
    def spacing(self) -> float:
        return self.ell / (self.N + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.ell, self.N + 2)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights (sum to ell)."""
        w = np.full(self.N + 2, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w


@dataclass
class OperatorMatrix:
    """Symmetrised tridiagonal matrix of ``T_{alpha,h}`` (bands stored, dense on demand)."""

    grid: Grid1D
    alpha: complex
    h: float
    diag: np.ndarray
    off: np.ndarray  # sub- and super-diagonal (equal after symmetrisation)
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.diag.size

    @property
    def entries(self) -> np.ndarray:
        if self._dense is None:
            self._dense = (np.diag(self.diag) + np.diag(self.off, 1)
                           + np.diag(self.off, -1))
        return self._dense

    @property
    def sqrt_weights(self) -> np.ndarray:
        s = np.ones(self.dim)
        s[0] = s[-1] = 1.0 / SQRT2
        return s

    def to_physical(self, w):
        """Nodal values from symmetrised coordinates."""
        s = self.sqrt_weights
        return w / (s if np.ndim(w) == 1 else s[:, None])

    def from_physical(self, u):
        s = self.sqrt_weights
        return u * (s if np.ndim(u) == 1 else s[:, None])

    def matvec(self, w):
        out = self.diag * w
        out[:-1] += self.off * w[1:]
        out[1:] += self.off * w[:-1]
        return out

    def apply_physical(self, u):
        """Apply the unsymmetrised ghost-point operator to nodal values ``u``."""
        return self.to_physical(self.matvec(self.from_physical(np.asarray(u, dtype=complex))))

    def norm_bound(self) -> float:
        """Cheap upper bound on the spectral norm (max absolute row sum)."""
        a = np.abs(self.diag)
        a[:-1] += np.abs(self.off)
        a[1:] += np.abs(self.off)
        return float(a.max())


def assemble(geom: SectionGeometry, alpha, h: float, grid: Grid1D) -> OperatorMatrix:
    """Assemble ``T_{alpha,h}`` on ``grid``."""
    if not h > 0:
        raise ValueError("h must be positive")
    if abs(grid.ell - geom.ell) > 1e-12 * geom.ell:
        raise ValueError("grid and geometry lengths differ")
    alpha = complex(alpha)
    dy = grid.spacing
    k = h * h / (dy * dy)
    dim = grid.N + 2
    diag = np.full(dim, 2.0 * k, dtype=complex)
    off = np.full(dim - 1, -k, dtype=complex)
    robin = 2.0 * k - 2j * alpha * h / dy
    diag[0] = diag[-1] = robin
    off[0] = off[-1] = -SQRT2 * k
    return OperatorMatrix(grid=grid, alpha=alpha, h=h, diag=diag, off=off)


def full_spectrum(matrix: OperatorMatrix) -> np.ndarray:
    """All eigenvalues, sorted by real part (dense solve)."""
    if matrix.dim > DENSE_MAX_DIM:
        raise ValueError(f"dense eigensolve limited to dim <= {DENSE_MAX_DIM}")
    try:
        if matrix.alpha == 0:
            ev = sla.eigh_tridiagonal(matrix.diag.real, matrix.off.real,
                                      eigvals_only=True).astype(complex)
        else:
            ev = sla.eigvals(matrix.entries, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise EigSolverFailure(str(exc)) from exc
    return ev[np.lexsort((ev.imag, ev.real))]


def eigenvalue_near(matrix: OperatorMatrix, shift: complex, tol: float = 1e-13,
                    maxiter: int = 60) -> complex:
    """Eigenvalue closest to ``shift`` by Rayleigh quotient iteration.

    Uses the bilinear Rayleigh quotient, which is the natural one for a
    complex symmetric matrix.  Cost is O(dim) per step.
    """
    rng = np.random.default_rng(0)
    x = rng.standard_normal(matrix.dim) + 0j
    mu = complex(shift)
    for it in range(maxiter):
        try:
            y = _tridiag_solve(matrix, mu, x)
        except np.linalg.LinAlgError:
            return mu
        x = y / np.sqrt(np.sum(y * y))
        new = complex(np.sum(x * matrix.matvec(x)))
        # a few plain inverse-iteration steps before switching shift
        if it < 3:
            if abs(new - mu) < tol * max(1.0, abs(mu)):
                return new
            continue
        if abs(new - mu) < tol * max(1.0, abs(mu)):
            return new
        mu = new
    raise EigSolverFailure(f"Rayleigh iteration did not settle near {shift}")


def _tridiag_solve(matrix: OperatorMatrix, zeta: complex, rhs):
    dl, d, du, du2, ipiv, info = lapack.zgttrf(matrix.off, matrix.diag - zeta, matrix.off)
    if info != 0:
        raise np.linalg.LinAlgError("singular tridiagonal system")
    x, info = lapack.zgttrs(dl, d, du, du2, ipiv, rhs)
    return x


BLOCK_SIZE = 3


def _start_block(dim: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((dim, BLOCK_SIZE)) + 1j * rng.standard_normal((dim, BLOCK_SIZE))
    q, _ = np.linalg.qr(v)
    return np.ascontiguousarray(q)


def sigma_min_many(matrix: OperatorMatrix, shifts, rtol: float = 1e-10,
                   maxiter: int = 500) -> np.ndarray:
    """Smallest singular values of ``matrix - s`` for every shift ``s``.

    Block inverse iteration on ``B^H B`` (block of 3, Rayleigh-Ritz), warm
    started from the previous shift.  Zero marks a numerically singular shift.
    """
    shifts = np.ascontiguousarray(np.asarray(shifts, dtype=complex).ravel())
    sig, _, _ = sigma_min_sweep(matrix.diag, matrix.off, shifts,
                                _start_block(matrix.dim), rtol, maxiter)
    return sig


def sigma_min(matrix: OperatorMatrix, zeta: complex, method: str = "auto") -> float:
    if method == "auto":
        method = "svd" if matrix.dim <= SVD_MAX_DIM else "inverse"
    if method == "svd":
        a = matrix.entries - zeta * np.eye(matrix.dim)
        return float(sla.svdvals(a, check_finite=False)[-1])
    if method == "inverse":
        return float(sigma_min_many(matrix, [zeta])[0])
    raise ValueError(f"unknown method {method!r}")


def resolvent_norm(matrix: OperatorMatrix, zeta, method: str = "auto") -> float:
    """``1 / sigma_min(matrix - zeta)``; ``inf`` when ``zeta`` is numerically an eigenvalue."""
    s = sigma_min(matrix, complex(zeta), method)
    scale = max(matrix.norm_bound(), abs(zeta), 1.0)
    if s <= SINGULAR_RTOL * scale:
        return math.inf
    return 1.0 / s


@dataclass(frozen=True)
class GapRecord:
    h: float
    alpha: complex
    zeta: complex
    resolvent_norm: float

    @property
    def h_times_norm(self) -> float:
        return self.h * self.resolvent_norm


@dataclass
class GapScanResult:
    gamma: float
    records: list
    sup: dict  # h -> M(h)
    argsup: dict  # h -> GapRecord achieving M(h)

    @property
    def ratio(self) -> float:
        vals = list(self.sup.values())
        return max(vals) / min(vals)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "alpha_re", "alpha_im", "zeta_re", "zeta_im",
                    "resolvent_norm", "h_times_norm"])
        for r in self.records:
            w.writerow([f"{r.h:.17g}", f"{r.alpha.real:.17g}", f"{r.alpha.imag:.17g}",
                        f"{r.zeta.real:.17g}", f"{r.zeta.imag:.17g}",
                        f"{r.resolvent_norm:.10e}", f"{r.h_times_norm:.10e}"])


def window_lattice(gamma: float, h: float, points: int) -> np.ndarray:
    """Cell-centred ``points x points`` lattice of ]1-g,1+g[ + i h ]1-g,1+g[."""
    if points < 1:
        raise ValueError("points must be positive")
    t = 1.0 - gamma + (np.arange(points) + 0.5) * (2.0 * gamma / points)
    re, im = np.meshgrid(t, h * t, indexing="ij")
    return (re + 1j * im).ravel()


def spectral_gap_scan(geom: SectionGeometry, h_list: Sequence[float], gamma: float,
                      points: int = 17, N: int = 1500, keep_records: bool = True,
                      method: str = "inverse") -> GapScanResult:
    """Sup of ``h * ||(T_{alpha,h} - zeta)^{-1}||`` over the gap window, for each ``h``.

    ``alpha`` and ``zeta`` both run over the same ``points x points`` lattice.
    A numerically singular point raises ``NearSpectrum``.
    """
    if not (0 < gamma < 1):
        raise ValueError("gamma must lie in (0, 1)")
    if points < 1:
        raise DegenerateWindow("window lattice is empty")
    h_list = [float(h) for h in h_list]
    if any(not (0 < h <= 1) for h in h_list):
        raise ValueError("h must lie in (0, 1]")
    grid = Grid1D(N, geom.ell)
    records, sup, argsup = [], {}, {}
    for h in h_list:
        lattice = window_lattice(gamma, h, points)
        best = None
        for alpha in lattice:
            mat = assemble(geom, alpha, h, grid)
            if method == "inverse":
                sig = sigma_min_many(mat, lattice)
            else:
                sig = [sigma_min(mat, zeta, method) for zeta in lattice]
            scale = max(mat.norm_bound(), 1.0)
            for zeta, s in zip(lattice, sig):
                if s <= SINGULAR_RTOL * scale:
                    raise NearSpectrum(
                        f"numerically singular at h={h}, alpha={alpha}, zeta={zeta}",
                        distance=s)
                rec = GapRecord(h=h, alpha=complex(alpha), zeta=complex(zeta),
                                resolvent_norm=1.0 / s)
                if keep_records:
                    records.append(rec)
                if best is None or rec.resolvent_norm > best.resolvent_norm:
                    best = rec
        sup[h] = best.h_times_norm
        argsup[h] = best
    return GapScanResult(gamma=gamma, records=records, sup=sup, argsup=argsup)
