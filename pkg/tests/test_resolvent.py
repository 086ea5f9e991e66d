import io
import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from dampguide import discrete as D
from dampguide import resolvent as R
from dampguide.errors import ContourTooClose, EigSolverFailure, NearSpectrum, OnSpectrum
from dampguide.transverse import SectionGeometry

PI = SectionGeometry(math.pi)

# order-one low-frequency coefficient from FD eigenvalues (N=6000, Richardson in alpha)
SIGMA_FD = 0.6666583


def problem(**kw):
    base = dict(geom=PI, a=1.0, z=0.5 + 0.1j, box=60.0, Nxi=256, Ny=24)
    base.update(kw)
    return R.GuideResolventProblem(**base)


def test_problem_validation_and_round_trip():
    p = problem(symbol="fd")
    assert R.GuideResolventProblem.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        problem(Nxi=255)
    with pytest.raises(ValueError):
        problem(z=1 - 0.1j)
    with pytest.raises(ValueError):
        problem(symbol="pseudo")


def test_apply_resolvent_residual():
    p = problem()
    f = R.gaussian_probe(p, y_profile=(1.0, 0.3))
    u = R.apply_resolvent(p, f)
    assert R.resolvent_residual(p, u, f) < 1e-10


def test_fd_symbol_against_sparse_solve():
    p = problem(symbol="fd", Nxi=128, Ny=20, box=30.0)
    n, m = p.Nxi, p.Ny + 1
    h = p.dx
    Lx = sp.diags([2.0 * np.ones(n), -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1], format="lil")
    Lx[0, n - 1] = Lx[n - 1, 0] = -1.0
    Lx = Lx.tocsr() / (h * h)
    alpha = p.a * p.z
    mat = p.transverse(alpha)
    s = mat.sqrt_weights
    Ty = mat.entries * (s[None, :] / s[:, None])  # ghost-point operator on nodal values
    H = sp.kron(Lx, sp.identity(m)) + sp.kron(sp.identity(n), sp.csr_matrix(Ty))
    zeta = p.z ** 2
    rng = np.random.default_rng(3)
    f = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    ref = spla.spsolve((H - zeta * sp.identity(n * m)).tocsc(), f.ravel()).reshape(n, m)
    u = R.apply_resolvent(p, f)
    assert np.abs(u - ref).max() / np.abs(ref).max() < 1e-10


def test_resolvent_identity_at_fixed_alpha():
    p = problem()
    probes = R.random_probes(p, 3, seed=1)
    err = R.resolvent_identity_residual(p, p.a * p.z, p.z ** 2, (1.1 + 0.3j) ** 2, probes)
    assert err < 1e-8


def test_near_spectrum_detected():
    p = problem(a=0.0, z=0.5)
    lam = D.full_spectrum(p.transverse(0.0))
    zeta = p.lam_x[3] + lam[1]
    with pytest.raises(NearSpectrum) as info:
        R.solve_shifted(p, 0.0, zeta, R.gaussian_probe(p))
    assert info.value.mode == 1
    assert abs(info.value.xi) == pytest.approx(abs(p.xi[3]))


def test_adjoint_solve():
    p = problem()
    f = R.gaussian_probe(p, y_profile=(1.0, 0.5))
    g = R.gaussian_probe(p, center=1.0, y_profile=(0.2, 1.0))
    w = p.grid.weights
    alpha, zeta = 0.4 + 0.2j, 1.3 + 0.1j
    lhs = np.sum(np.conj(g) * R.solve_shifted(p, alpha, zeta, f) * w)
    rhs = np.sum(np.conj(R.solve_shifted(p, alpha, zeta, g, adjoint=True)) * f * w)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_circle_projection_on_diagonal_matrix():
    P = R.riesz_projection(np.diag([0.1, 5.0, -3.0]), R.RieszContour.circle(0.0, 1.0))
    assert np.allclose(P, np.diag([1.0, 0.0, 0.0]), atol=1e-12)


def test_jordan_block_projection():
    J = R.JordanModel.jordan_block(0.2, 3)
    P = R.riesz_projection(J, R.RieszContour.circle(0.0, 1.0))
    assert np.abs(P - np.eye(3)).max() < 1e-10


def test_rank_additivity_over_disjoint_contours():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    A = S @ np.diag([0.0, 0.2, 3.0, 3.1 + 0.5j]) @ np.linalg.inv(S)
    P1 = R.riesz_projection(A, R.RieszContour.circle(0.1, 0.8))
    P2 = R.riesz_projection(A, R.RieszContour.rectangle(2.0, 4.0, -1.0, 1.0))
    Pall = R.riesz_projection(A, R.RieszContour.rectangle(-1.0, 4.0, -1.0, 1.0))
    assert np.trace(P1).real == pytest.approx(2.0, abs=1e-8)
    assert np.trace(P2).real == pytest.approx(2.0, abs=1e-8)
    assert np.abs(P1 + P2 - Pall).max() < 1e-8
    assert np.abs(P1 @ P2).max() < 1e-8


def test_contour_through_eigenvalue_rejected():
    with pytest.raises(ContourTooClose):
        R.riesz_projection(np.diag([1.0, 3.0]), R.RieszContour.circle(0.0, 1.0))


def test_contour_validation():
    with pytest.raises(ValueError):
        R.RieszContour.circle(0.0, 1.0, M=32)
    with pytest.raises(ValueError):
        R.RieszContour.rectangle(1.0, 0.0, 0.0, 1.0)
    rect = R.RieszContour.rectangle(-1.0, 1.0, -0.5, 0.5)
    nodes, weights = rect.quadrature()
    assert np.sum(weights) == pytest.approx(0.0, abs=1e-12)
    assert np.sum(weights / nodes) == pytest.approx(2j * np.pi, rel=1e-12)
    assert rect.contains([0.0, 2.0]).tolist() == [True, False]


def test_riesz_apply_matches_biorthogonal_projector():
    from dampguide.verify import riesz_cross_module_error
    assert riesz_cross_module_error(alpha=0.3, N=1000) < 1e-6


def test_jordan_model_from_matrix():
    A = np.diag([0.1, 0.3, 5.0]) + np.triu(np.ones((3, 3)), 1)
    jm = R.JordanModel.from_matrix(A, R.RieszContour.circle(0.0, 1.0))
    assert sorted(jm.lambdas.real) == pytest.approx([0.1, 0.3])
    assert jm.chain_residual(A) < 1e-12
    P = R.riesz_projection(A, R.RieszContour.circle(0.0, 1.0))
    assert np.abs(jm.projection() - P).max() < 1e-10
    with pytest.raises(EigSolverFailure):
        R.JordanModel.from_matrix(np.diag([0.1, 0.1 + 1e-9, 4.0]), R.RieszContour.circle(0.0, 1.0))


def test_mode_resolvent_jordan_closed_form():
    lam, mu, zeta = 0.2 + 0.1j, 1.3, 0.4 + 0.7j
    J = R.JordanModel.jordan_block(lam, 2)
    u = np.array([0.3 - 1j, 2 + 0.5j])
    c = mu + lam - zeta
    closed = np.array([u[0] / c - u[1] / c ** 2, u[1] / c])
    assert np.abs(R.mode_resolvent(J, mu, zeta, u) - closed).max() < 1e-14
    # the mode operator is Lambda + J acting on the coordinates
    M = mu * np.eye(2) + J.jordan_matrix()
    assert np.abs((M - zeta * np.eye(2)) @ closed - u).max() < 1e-13
    with pytest.raises(OnSpectrum):
        R.mode_resolvent(J, mu, mu + lam, u)


def test_mode_consistency_on_guide():
    p = problem()
    contour = R.lambda0_contour(PI, 0.3)
    jm = R.transverse_jordan(p, 0.3, contour)
    assert jm.rank == 1
    f = R.gaussian_probe(p, y_profile=(1.0, 0.5, 0.2))
    for zeta in (0.1 + 0.2j, -0.2 - 0.1j):
        assert R.mode_consistency_residual(p, 0.3, jm, zeta, f) < 1e-8
    # the remainder is the resolvent restricted to the complementary spectrum: bounded near lambda_0
    b = R.mode_remainder(p, 0.3, jm, jm.lambdas[0] + 1e-6j, f)
    assert R.l2_norm(p, b) < 10 * R.l2_norm(p, f)


def test_low_frequency_sigma():
    assert R.low_freq_sigma(PI, 1.0).real == pytest.approx(SIGMA_FD, abs=1e-4)
    assert R.low_freq_sigma(SectionGeometry(1.0), 0.5).real == pytest.approx(1 - 0.25 / 3, abs=1e-4)


def test_low_frequency_error_shrinks():
    p = problem(box=200.0, Nxi=512)
    f = R.gaussian_probe(p)
    errs = [R.low_freq_expansion_error(p.with_z(r * np.exp(0.25j * np.pi)), f) for r in (0.2, 0.1)]
    assert errs[1] < errs[0]
    with pytest.raises(ValueError):
        R.low_freq_expansion_error(p.with_z(0.5 + 0.1j), f)


def test_low_frequency_error_on_mean_free_profile():
    p = problem(box=200.0, Nxi=512).with_z(0.1 * np.exp(0.25j * np.pi))
    f = R.gaussian_probe(p, y_profile=(0.0, 1.0))
    expected = R.l2_norm(p, R.apply_resolvent(p, f), -2.5) / R.l2_norm(p, f, 2.5)
    assert R.low_freq_expansion_error(p, f) == pytest.approx(expected, rel=1e-10)
    assert math.isfinite(expected) and expected > 0


def test_jump_kernel_closed_form():
    s = 0.7
    r = np.linspace(-5.0, 5.0, 101)
    k = math.sqrt(s)
    assert np.allclose(R.jump_kernel(s, r), 1j / k * np.cos(k * r), atol=1e-14)


def test_jump_kernel_eps_against_fd_box():
    # (-d^2 - w)^{-1} on a long Dirichlet box, w = s +- i eps, as an independent oracle
    s, eps, X, h = 0.25, 0.05, 400.0, 0.05
    x = np.arange(-X, X + h / 2, h)
    n = x.size
    i0 = n // 2

    def green(w):
        ab = np.zeros((3, n), dtype=complex)
        ab[0, 1:] = ab[2, :-1] = -1.0 / h ** 2
        ab[1] = 2.0 / h ** 2 - w
        rhs = np.zeros(n, dtype=complex)
        rhs[i0] = 1.0 / h
        return solve_banded((1, 1), ab, rhs)

    fd = green(s + 1j * eps) - green(s - 1j * eps)
    sel = np.abs(x - x[i0]) <= 10.0
    ref = R.jump_kernel_eps(s, eps, x[sel] - x[i0])
    assert np.abs(fd[sel] - ref).max() / np.abs(ref).max() < 1e-3


def test_kernel_limit_error_small():
    assert R.kernel_limit_error(0.1, 0, 0) < 1e-4
    assert R.kernel_limit_error(0.01, 0, 1) < 1e-4


def test_jump_exponent_validation():
    with pytest.raises(ValueError):
        R.heat_jump_exponent(0, 2, [1e-3, 1e-2])
    with pytest.raises(ValueError):
        R.heat_jump_exponent(1, 0, [1e-3, 1e-2], delta=1.0)


def test_outgoing_solve_matches_box_when_damped():
    p = problem(symbol="fd", box=100.0, Nxi=512).with_z(1.0)
    f = R.gaussian_probe(p, y_profile=(1.0, 0.5))
    a = R.solve_shifted(p, p.a * p.z, p.z ** 2, f)
    b = R.outgoing_solve(p, p.a * p.z, p.z ** 2, f)
    assert np.abs(a - b).max() / np.abs(a).max() < 1e-5


def test_outgoing_adjoint():
    p = problem().with_z(2.0)
    f = R.gaussian_probe(p, y_profile=(1.0, 0.5))
    g = R.gaussian_probe(p, center=1.0, y_profile=(0.2, 1.0))
    w = p.grid.weights
    lhs = np.sum(np.conj(g) * R.outgoing_solve(p, 2.0, 4.0, f) * w)
    rhs = np.sum(np.conj(R.outgoing_solve(p, 2.0, 4.0, g, adjoint=True)) * f * w)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_half_line_distance():
    d = R.half_line_distance([1.0 - 0.5j, 4.0], 2.0 + 0j)
    assert d.tolist() == pytest.approx([0.5, 2.0])


def test_sweep_undamped_control_flags_spectrum():
    p = problem(a=0.0)
    rows = R.frequency_sweep(p, R.FrequencyRegime("intermediate", 0.5, 2.0, 3))
    assert all(r.near_spectrum and r.norm == math.inf for r in rows)


def test_sweep_damped_rows_and_csv():
    p = problem()
    rows = R.frequency_sweep(p, R.FrequencyRegime("intermediate", 0.5, 1.5, 2), probes=6)
    assert all(math.isfinite(r.norm) and not r.near_spectrum for r in rows)
    buf = io.StringIO()
    R.write_sweep_csv(rows, buf)
    assert buf.getvalue().splitlines()[0] == "regime,tau,norm,tau_norm,near_spectrum,distance"
    with pytest.raises(ValueError):
        R.FrequencyRegime("high", 0.01, 1.0)
    with pytest.raises(ValueError):
        R.frequency_sweep(p, R.FrequencyRegime("high", 5.0, 10.0, 2), delta=0.5)


def test_weighted_norm_methods_agree_when_damped():
    p = problem(box=100.0, Nxi=512).with_z(1.0)
    a, _ = R.weighted_resolvent_norm(p, 1.0, probes=8, rtol=1e-3, method="box")
    b, _ = R.weighted_resolvent_norm(p, 1.0, probes=8, rtol=1e-3, method="outgoing")
    assert b == pytest.approx(a, rel=1e-3)
