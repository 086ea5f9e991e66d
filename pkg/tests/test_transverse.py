import io
import math

import numpy as np
import pytest

from dampguide import transverse as T
from dampguide.errors import BranchJump

PI = T.SectionGeometry(math.pi)

# lambda_n from the ghost-point FD matrix, Richardson-extrapolated from N=4000 and N=8000
FD_LAMBDA = {
    (1.0, 0): 0.2885936357953663 - 0.5044506478831507j,
    (1.0, 1): 1.393578505707356 - 1.1802989778631057j,
    (1.0, 2): 4.141879952045311 - 1.3387643947594983j,
    (1.0, 3): 9.054839109713443 - 1.3148814740062216j,
    (0.5 + 0.5j, 0): 0.2931667554413876 - 0.18567424021774306j,
    (0.5 + 0.5j, 1): 1.6165688826705669 - 0.45695397396916365j,
    (0.5 + 0.5j, 2): 4.646414320596283 - 0.5684522529572856j,
    (0.5 + 0.5j, 3): 9.644480310814103 - 0.6038833958874915j,
}


def test_geometry_constants():
    g = T.SectionGeometry(2.0)
    assert g.nu == pytest.approx(math.pi / 2)
    assert g.upsilon == pytest.approx(1.0)
    with pytest.raises(ValueError):
        T.SectionGeometry(0.0)


@pytest.mark.parametrize("n", [0, 1, 4])
def test_undamped_roots_are_neumann(n):
    root = T.solve_root(PI, n, 0.0)
    assert root.theta == pytest.approx(n)
    assert root.lam == pytest.approx(n * n)


@pytest.mark.parametrize("key", sorted(FD_LAMBDA, key=str))
def test_roots_match_fd_oracle(key):
    alpha, n = key
    root = T.solve_root(PI, n, alpha)
    assert root.residual <= 1e-10 * max(1.0, abs(alpha) ** 2)
    assert abs(root.lam - FD_LAMBDA[key]) <= 1e-8 * max(1.0, abs(FD_LAMBDA[key]))


def test_residual_gate_scales_with_alpha():
    assert T.residual_gate(0.5) == pytest.approx(1e-10)
    assert T.residual_gate(10.0) == pytest.approx(1e-8)


def test_continuation_stays_in_strip_and_increases():
    grid = np.linspace(0.0, 50.0, 501)
    roots = T.continuation_sweep(PI, 2, grid)
    th = np.array([r.theta for r in roots[1:]])
    assert np.all(np.diff(th.real) > 0)
    assert np.all((th.real > 2.0) & (th.real < 3.0))
    assert np.all(th.imag < 0)
    assert max(r.residual for r in roots) <= 1e-10 * 50.0 ** 2


def test_single_point_grid():
    roots = T.continuation_sweep(PI, 3, [0.0])
    assert len(roots) == 1 and roots[0].theta == 3


def test_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        T.continuation_sweep(PI, 0, [1.0, 2.0])
    with pytest.raises(ValueError):
        T.solve_root(PI, -1, 1.0)


def test_wrong_strip_guess_is_a_branch_jump():
    theta2 = T.solve_root(PI, 2, 1.0).theta
    with pytest.raises(BranchJump):
        T.solve_root(PI, 1, 1.0, guess=theta2)


def test_complex_alpha_n0_is_continued_from_zero():
    # theta = 0 is a root of G for every alpha; the n=0 branch must avoid it
    root = T.solve_root(PI, 0, 0.5 + 0.5j)
    assert abs(root.theta) < 1.0
    assert abs(root.lam - FD_LAMBDA[(0.5 + 0.5j, 0)]) < 1e-8


@pytest.mark.parametrize("ell", [1.0, math.pi, 2 * math.pi])
def test_lambda0_slope(ell):
    g = T.SectionGeometry(ell)
    s = T.lambda0_slope(g, 0.01)
    assert abs(s + 1j * g.upsilon) <= 0.05 * g.upsilon
    with pytest.raises(ValueError):
        T.lambda0_slope(g, 0.5)


@pytest.mark.parametrize("alpha,n", [(1.0, 0), (1.0, 2), (0.3 + 0.2j, 1)])
def test_mode_satisfies_impedance_conditions(alpha, n):
    root = T.solve_root(PI, n, alpha)
    mode = T.transverse_mode(PI, root)
    a, ell = root.alpha, PI.ell
    assert mode.derivative(0.0) == pytest.approx(-1j * a * mode(0.0), abs=1e-10)
    assert mode.derivative(ell) == pytest.approx(1j * a * mode(ell), abs=1e-10)
    y = np.linspace(0.0, ell, 20001)
    pairing = np.trapezoid(mode(y) ** 2, y)
    assert pairing == pytest.approx(mode.pairing, rel=1e-7)


def test_projector_weights_reproduce_mode():
    root = T.solve_root(PI, 0, 0.3)
    mode = T.transverse_mode(PI, root)
    y = np.linspace(0.0, PI.ell, 4001)
    w = np.full(y.size, y[1] - y[0])
    w[0] = w[-1] = 0.5 * w[0]
    P = mode.projector_weights(y, w)
    phi = mode(y)
    assert np.abs(P @ phi - phi).max() < 1e-6
    assert np.abs(P @ P - P).max() < 1e-6


def test_asymptotic_probe_proportional_sign_and_limit():
    rec = T.asymptotic_probe(PI, T.Proportional(0.5), 5000)
    assert rec.theta.imag < 0
    assert rec.predicted == pytest.approx(math.log(3) / math.pi)
    assert rec.rel_error < 0.05


def test_asymptotic_probe_log_window_beta_zero():
    # the half-period shift is approached only like 1/ln n: 10.75% off at n=5000
    rec = T.asymptotic_probe(PI, T.LogWindow(0.0), 5000)
    assert rec.predicted == pytest.approx(0.5)
    assert rec.rel_error == pytest.approx(0.1075, abs=2e-3)


@pytest.mark.parametrize("regime", [T.LogWindow(3.0), T.Proportional(0.5), T.Power(0.5, 1.0),
                                    T.Power(0.5, -1.0)])
def test_asymptotic_error_decreases(regime):
    errs = [T.asymptotic_probe(PI, regime, n).rel_error for n in (100, 1000, 10_000)]
    assert errs[0] > errs[1] > errs[2]


def test_asymptotic_probe_needs_large_n():
    with pytest.raises(ValueError):
        T.asymptotic_probe(PI, T.Proportional(0.5), 50)


def test_strip_guess_lands_in_branch():
    th = T.strip_guess(PI, 40, 60.0)
    root = T.solve_root(PI, 40, 60.0, guess=th)
    assert 40 < root.theta.real < 41


def test_roots_csv_sorted_with_header():
    roots = [T.solve_root(PI, n, a) for n in (1, 0) for a in (2.0, 1.0)]
    buf = io.StringIO()
    T.write_roots_csv(roots, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,alpha,re_theta,im_theta,residual"
    keys = [tuple(float(v) for v in line.split(",")[:2]) for line in lines[1:]]
    assert keys == [(0, 1.0), (0, 2.0), (1, 1.0), (1, 2.0)]
