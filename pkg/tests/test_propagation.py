import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from maslov_stab.errors import MaslovStabError
from maslov_stab.problem import (build_from_gradient_rd, constant_potential,
                                 poeschl_teller, scalar_pulse_system,
                                 tabulated_potential)
from maslov_stab.propagation import (AsymptoticSystem, OdeControls,
                                     export_trace_csv, propagate_frame,
                                     truncation_point,
                                     unstable_subspace_at_minus_infinity)
from maslov_stab.symplectic import is_lagrangian, subspace_angle


def brute_unstable_subspace(D, V_minus, lam):
    """Independent oracle: unstable spectral subspace straight from the
    eigen-decomposition of the full 2n x 2n asymptotic matrix."""
    n = len(D)
    a = np.zeros((2 * n, 2 * n))
    a[:n, n:] = np.diag(1.0 / np.asarray(D, dtype=float))
    a[n:, :n] = np.asarray(V_minus, dtype=float) - lam * np.eye(n)
    vals, vecs = np.linalg.eig(a)
    cols = vecs[:, vals.real > 0]
    assert cols.shape[1] == n
    return np.real(cols)


def test_scalar_initializations():
    p = constant_potential([[1.0]])
    f0 = unstable_subspace_at_minus_infinity(p, 0.0)
    assert_allclose(np.abs(f0.stacked().ravel()), [1, 1] / np.sqrt(2), atol=1e-14)
    f3 = unstable_subspace_at_minus_infinity(p, -3.0)
    assert_allclose(np.abs(f3.stacked().ravel()), [1, 2] / np.sqrt(5), atol=1e-14)


def test_generalized_initialization_n2():
    D = np.array([1.0, 2.0])
    p = constant_potential(np.eye(2), d=D)
    system = AsymptoticSystem(p.D, p.V_minus)
    nu, _ = system.eigenpairs(0.0)
    assert_allclose(sorted(nu), [1.0 / math.sqrt(2.0), 1.0])
    frame = unstable_subspace_at_minus_infinity(p, 0.0)
    oracle = brute_unstable_subspace(D, np.eye(2), 0.0)
    assert subspace_angle(frame.stacked(), oracle) < 1e-12
    assert is_lagrangian(frame).ok


def test_initialization_against_oracle_randomized():
    rng = np.random.default_rng(21)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        D = rng.uniform(0.3, 2.5, n)
        g = rng.standard_normal((n, n))
        v_minus = g @ g.T + 0.5 * np.eye(n)
        lam = -float(rng.uniform(0.0, 3.0))
        p = constant_potential(v_minus, d=D)
        frame = unstable_subspace_at_minus_infinity(p, lam)
        oracle = brute_unstable_subspace(D, v_minus, lam)
        assert subspace_angle(frame.stacked(), oracle) < 1e-9
        assert is_lagrangian(frame).ok


def test_truncation_point_closed_form_tail():
    p = build_from_gradient_rd(scalar_pulse_system())
    x_min, fit = truncation_point(p, 1e-10)
    # the potential tail is 3 sech^2(x/2) ~ 12 e^x, so 12 e^x = 1e-10
    assert x_min == pytest.approx(math.log(1e-10 / 12.0), abs=0.1)
    assert fit.rate == pytest.approx(1.0, abs=1e-3)


def test_truncation_point_constant_and_tabulated():
    const = constant_potential([[2.0]])
    assert truncation_point(const)[0] == 0.0
    base = poeschl_teller(1.0, 2.0)
    # long grid: the fitted model point lies inside the data
    grid = np.linspace(-18.0, 18.0, 1401)
    samples = np.array([base.potential(x).ravel() for x in grid])
    tab = tabulated_potential(grid, samples)
    x_min, fit = truncation_point(tab, 1e-10)
    assert x_min == pytest.approx(math.log(1e-10 / 24.0) / 2.0, abs=0.2)
    # short grid: the model point falls beyond the data and the values are
    # clamped there, so the truncation lands on the grid start
    grid2 = np.linspace(-8.0, 8.0, 801)
    samples2 = np.array([base.potential(x).ravel() for x in grid2])
    tab2 = tabulated_potential(grid2, samples2)
    assert truncation_point(tab2, 1e-10)[0] == pytest.approx(-8.0)


def test_constant_potential_invariant_subspace():
    p = constant_potential(np.diag([1.0, 2.5]), d=[1.0, 0.7])
    for lam in (0.0, -1.5):
        trace = propagate_frame(p, lam, 0.0, 8.0)
        f0 = unstable_subspace_at_minus_infinity(p, lam)
        assert subspace_angle(trace.frames[-1], f0.stacked()) < 1e-8
        assert np.all(np.abs(trace.detX) > 1e-3)


def test_pulse_trace_kernel_direction():
    pp = scalar_pulse_system()
    p = build_from_gradient_rd(pp)
    x_min = truncation_point(p)[0]
    trace = propagate_frame(p, 0.0, x_min, 10.0)
    # the derivative of the profile spans the decaying family
    for idx in range(0, len(trace.xs), max(len(trace.xs) // 25, 1)):
        x = float(trace.xs[idx])
        if x < x_min + 1.0 or x > 8.0:
            continue
        v = pp.kernel_vector(x)
        assert subspace_angle(v[:, None], trace.frames[idx]) < 1e-6
    # exactly one sign change, at the origin
    sgn = np.sign(trace.detX)
    flips = np.where(sgn[:-1] * sgn[1:] < 0)[0]
    inside = [i for i in flips if -2.0 < trace.xs[i] < 2.0]
    assert len(inside) == 1


def test_no_sign_changes_below_spectrum():
    p = build_from_gradient_rd(scalar_pulse_system())
    x_min = truncation_point(p)[0]
    trace = propagate_frame(p, -3.0, x_min, 20.0)
    sgn = np.sign(trace.detX)
    assert not np.any(sgn[:-1] * sgn[1:] < 0)
    assert trace.sigma_min.min() > 1e-3


def test_lagrangian_residual_along_traces(pulse_problem, pt052):
    for p, lam in ((pulse_problem, 0.0), (pulse_problem, -2.0), (pt052, 0.0)):
        x_min = truncation_point(p)[0]
        trace = propagate_frame(p, lam, x_min, 15.0)
        assert trace.lagrangian_residual.max() <= 1e-8


def test_initialization_consistency():
    p = build_from_gradient_rd(scalar_pulse_system())
    x_min = truncation_point(p)[0]
    direct = unstable_subspace_at_minus_infinity(p, -0.5)
    carried = propagate_frame(p, -0.5, x_min - 5.0, x_min)
    assert subspace_angle(carried.frames[-1], direct.stacked()) < 1e-7


def test_zero_location_converges_with_tolerance():
    from scipy.optimize import brentq
    p = build_from_gradient_rd(scalar_pulse_system())
    x_min = truncation_point(p)[0]
    roots = []
    for rtol in (1e-8, 1e-10):
        trace = propagate_frame(p, 0.0, x_min, 5.0,
                                controls=OdeControls(rtol=rtol, atol=rtol * 1e-2))
        sgn = np.sign(trace.detX)
        i = np.where(sgn[:-1] * sgn[1:] < 0)[0][0]
        roots.append(brentq(trace.det_top_at, trace.xs[i], trace.xs[i + 1], xtol=1e-13))
    assert abs(roots[0] - roots[1]) < 1e-8


def test_trace_csv_export(tmp_path):
    p = poeschl_teller(1.0, 1.0)
    trace = propagate_frame(p, 0.0, truncation_point(p)[0], 5.0)
    path = tmp_path / "trace.csv"
    export_trace_csv(trace, path)
    header = path.read_text().splitlines()[0]
    assert header == "x,detX,sigma_min,lagrangian_residual"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (len(trace.xs), 4)


def test_decay_fit_failure_advises():
    # a non-decaying deviation from the declared limit defeats the tail fit
    def V(x):
        return np.array([[1.0 + 0.3 * math.sin(x) ** 2]])

    from maslov_stab.problem import Problem
    p = Problem(n=1, D=np.array([1.0]), V=V, V_minus=np.array([[1.0]]),
                V_plus=np.array([[1.0]]), x_span=(-30.0, 30.0))
    with pytest.raises(MaslovStabError, match="explicit"):
        truncation_point(p, 1e-10)
