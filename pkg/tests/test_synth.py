import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stable
from drlqr.errors import ConvergenceError, InputError, UnsupportedError
from drlqr.grid import GridSamples, unit_circle
from drlqr.lti import StateSpace, closed_loop_quadratic, h2_controller, lqr_blocks, noncausal_blocks
from drlqr.synth import (
    Baselines,
    SynthesisConfig,
    anticausal_energy,
    bures_wasserstein,
    controller_from_L,
    convergence_ratio,
    f1_bbar,
    f2_spectrum,
    fixed_point,
    gamma_residual,
    kkt_residual,
    synthesize,
    worst_case_cost,
)

N = 256


def setup(ss, n=N):
    b = lqr_blocks(ss)
    return b, noncausal_blocks(b, ss, n)


def const(c, n=N, p=1):
    return GridSamples(np.full((n, p, p), c, dtype=complex))


@pytest.fixture
def two_state():
    return StateSpace([[0.9, 0.3], [0.0, 0.6]], [[0.0], [1.0]], [[1.0], [0.5]])


# -- maps -----------------------------------------------------------------------


def test_f1_examples(two_state):
    b, nb = setup(two_state)
    np.testing.assert_allclose(f1_bbar(const(1.0), b, nb), b.Dbar, atol=1e-13)
    np.testing.assert_allclose(f1_bbar(const(2.5), b, nb), 2.5 * b.Dbar, atol=1e-13)
    z = unit_circle(N)
    L = GridSamples((1 + 0.7 / z)[:, None, None])
    np.testing.assert_allclose(f1_bbar(L, b, nb), b.Dbar + 0.7 * b.Abar @ b.Dbar, atol=1e-13)


def test_f2_examples(scalar0, two_state):
    b, nb = setup(two_state)
    L = GridSamples(unit_circle(N)[:, None, None] ** -1 + 2)
    Ninf = f2_spectrum(f1_bbar(L, b, nb), L, math.inf, b, nb)
    np.testing.assert_allclose(Ninf.values, 1.0)
    with pytest.raises(InputError):
        f2_spectrum(f1_bbar(L, b, nb), L, 0.0, b, nb)

    b0, nb0 = setup(scalar0)
    # S = 0 and U*U = c^2 / 2 = s, so gamma = 4 s
    c = 3.0
    s = c * c / 2
    out = f2_spectrum(np.zeros((1, 1)), const(c), 4 * s, b0, nb0)
    np.testing.assert_allclose(out.values, 0.25 * (1 + math.sqrt(2)) ** 2, rtol=1e-14)
    assert 0.25 * (1 + math.sqrt(2)) ** 2 == pytest.approx(1.4571, abs=1e-4)
    for gamma in (0.7, 3.0, 40.0):
        out = f2_spectrum(f1_bbar(const(1.0), b0, nb0), const(1.0), gamma, b0, nb0)
        np.testing.assert_allclose(out.values, 0.25 * (1 + math.sqrt(1 + 2 / gamma)) ** 2, rtol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 4), gamma_scale=st.floats(1.1, 100.0))
def test_f2_samples_dominate_identity(seed, n, gamma_scale):
    ss = random_stable(seed, n)
    b, nb = setup(ss)
    z = unit_circle(N)
    L = GridSamples((1 + 0.3 / z)[:, None, None])
    out = f2_spectrum(f1_bbar(L, b, nb), L, gamma_scale, b, nb).values
    assert np.all(np.abs(out.imag) == 0)
    assert out.real.min() >= 1 - 1e-14


def test_bures_wasserstein_scalar():
    a = np.full((8, 1, 1), 4.0)
    b = np.full((8, 1, 1), 1.0)
    assert bures_wasserstein(a, b) == pytest.approx(1.0)
    assert bures_wasserstein(a, a) == 0


# -- fixed point -----------------------------------------------------------------


def test_fixed_point_large_gamma_is_nominal(two_state):
    b, nb = setup(two_state)
    L, Nspec, diag = fixed_point(1e8 * 5.0, b, nb, SynthesisConfig(r=1.0, N=N))
    assert diag.iterations <= 2
    np.testing.assert_allclose(Nspec.values, 1.0, atol=1e-6)
    np.testing.assert_allclose(L.values, 1.0, atol=1e-6)


@pytest.mark.parametrize("gamma", [0.6, 1.0, 4.0])
def test_fixed_point_scalar_zero_closed_form(scalar0, gamma):
    b, nb = setup(scalar0)
    cfg = SynthesisConfig(r=1.0, N=N, fp_tol=1e-12)
    L0 = const(1e-6)
    L, Nspec, diag = fixed_point(gamma, b, nb, cfg, L0=L0, keep_history=True, method="picard")
    expected = (1 / (1 - 1 / (2 * gamma))) ** 2
    np.testing.assert_allclose(Nspec.values.real, expected, rtol=1e-10)
    hist = np.array([h.real for h in diag.history])
    assert np.all(np.diff(hist, axis=0) >= -1e-10)
    K = controller_from_L(L, b, nb)
    np.testing.assert_allclose(K.values, -0.5, rtol=1e-14)


def test_fixed_point_rejects_vector_disturbance():
    ss = random_stable(0, 2, p=2)
    b, nb = setup(ss)
    with pytest.raises(UnsupportedError):
        fixed_point(10.0, b, nb, SynthesisConfig(r=1.0, N=N))


def test_fixed_point_budget_exhausted(two_state):
    bl = Baselines.build(two_state, N=N)
    cfg = SynthesisConfig(r=1.0, N=N, fp_max_iters=3, fp_tol=1e-14)
    with pytest.raises(ConvergenceError) as info:
        fixed_point(1.01 * bl.gamma_hinf, bl.blocks, bl.nb, cfg, method="picard")
    assert len(info.value.trajectory) == 3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 4), factor=st.floats(1.2, 20.0))
def test_fixed_point_kkt(seed, n, factor):
    ss = random_stable(seed, n)
    bl = Baselines.build(ss, N=N)
    gamma = factor * bl.gamma_hinf
    cfg = SynthesisConfig(r=1.0, N=N, fp_tol=1e-11)
    L, Nspec, _ = fixed_point(gamma, bl.blocks, bl.nb, cfg)
    assert kkt_residual(L, Nspec, gamma, bl.blocks, bl.nb) <= 1e-10
    np.testing.assert_allclose(np.abs(L.values) ** 2, Nspec.values.real, rtol=1e-10)


def test_reduced_solve_agrees_with_picard(two_state):
    bl = Baselines.build(two_state, N=N)
    gamma = 1.05 * bl.gamma_hinf
    cfg = SynthesisConfig(r=1.0, N=N, fp_tol=1e-11, picard_budget=5)
    _, N_auto, d_auto = fixed_point(gamma, bl.blocks, bl.nb, cfg, method="auto")
    _, N_pic, d_pic = fixed_point(gamma, bl.blocks, bl.nb, cfg, method="picard")
    assert d_auto.method == "picard+reduced"
    assert d_auto.iterations < d_pic.iterations
    np.testing.assert_allclose(N_auto.values, N_pic.values, rtol=1e-8)


def test_controller_from_identity_factor_is_h2(two_state):
    b, nb = setup(two_state)
    np.testing.assert_allclose(controller_from_L(const(1.0), b, nb).values, h2_controller(b, nb).values, atol=1e-12)
    with pytest.raises(InputError):
        controller_from_L(const(0.0), b, nb)


def test_convergence_ratio(two_state):
    bl = Baselines.build(two_state, N=N)
    cfg = SynthesisConfig(r=1.0, N=N, fp_tol=1e-12)
    ratios = {}
    for f in (1.5, 6.0):
        _, _, diag = fixed_point(f * bl.gamma_hinf, bl.blocks, bl.nb, cfg, method="picard")
        rr = convergence_ratio(diag)
        live = rr[np.asarray(diag.bw_steps[:-1]) > 1e-10]
        assert np.all(live < 1)
        ratios[f] = np.median(live[-5:])
    assert ratios[6.0] <= ratios[1.5]


def test_convergence_ratio_guards():
    from drlqr.synth import FixedPointDiagnostics

    d = FixedPointDiagnostics(gamma=1.0, bw_steps=[1e-3, 0.0, 0.0])
    np.testing.assert_array_equal(convergence_ratio(d), [0.0, 0.0])
    with pytest.raises(InputError):
        convergence_ratio(FixedPointDiagnostics(gamma=1.0, bw_steps=[1.0]))


# -- fixed-controller worst case ---------------------------------------------------


@pytest.mark.parametrize("c, r", [(0.5, 1.0), (2.0, 0.1), (0.3, 7.0)])
def test_gamma_residual_constant(c, r):
    T = const(c, 16)
    root = c * (1 + r) / r
    assert abs(gamma_residual(T, root, r)) <= 1e-12 * r * r
    assert gamma_residual(T, 2 * root, r) < 0 < gamma_residual(T, 0.9 * root, r)
    assert gamma_residual(T, math.inf, r) == -r * r
    with pytest.raises(InputError):
        gamma_residual(T, c, r)


@pytest.mark.parametrize("c, r", [(0.5, 1.0), (2.0, 0.1), (0.3, 7.0)])
def test_worst_case_cost_constant(c, r):
    cost, gamma, Mhalf = worst_case_cost(const(c, 16), r)
    assert cost == pytest.approx(c * (1 + r) ** 2, rel=1e-10)
    assert gamma == pytest.approx(c * (1 + r) / r, rel=1e-10)
    np.testing.assert_allclose(Mhalf.values, 1 + r, rtol=1e-10)
    # brute force over variances v with (sqrt v - 1)^2 <= r^2
    v = np.linspace(0, 4 * (1 + r) ** 2, 100_001)
    assert cost == pytest.approx(np.max(c * v[(np.sqrt(v) - 1) ** 2 <= r * r]), rel=1e-3)


def test_worst_case_cost_zero_radius():
    z = unit_circle(32)
    T = GridSamples((2 + np.cos(np.angle(z)))[:, None, None])
    cost, gamma, _ = worst_case_cost(T, 0.0)
    assert cost == pytest.approx(2.0)
    assert gamma == math.inf
    with pytest.raises(InputError):
        worst_case_cost(T, -1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), r=st.floats(0.01, 20.0))
def test_worst_case_cost_duality(seed, r):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.1, 3.0, size=64)
    T = GridSamples(lam[:, None, None])
    cost, gamma, Mhalf = worst_case_cost(T, r)
    M = Mhalf.values[:, 0, 0].real ** 2
    assert np.mean((Mhalf.values.real - 1) ** 2) == pytest.approx(r * r, rel=1e-9)
    assert cost == pytest.approx(np.mean(lam * M), rel=1e-9)
    # the dual is an upper bound at any other gamma
    for g in (1.3 * gamma, lam.max() + 0.7 * (gamma - lam.max())):
        x = lam / (g - lam)
        assert g * r * r + np.mean(-g * x**2 + lam * (1 + x) ** 2) >= cost * (1 - 1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), r1=st.floats(0.01, 5.0), dr=st.floats(0.01, 5.0))
def test_worst_case_cost_monotone_in_radius(seed, r1, dr):
    lam = np.random.default_rng(seed).uniform(0.1, 3.0, size=64)
    T = GridSamples(lam[:, None, None])
    assert worst_case_cost(T, r1 + dr)[0] >= worst_case_cost(T, r1)[0]


# -- synthesis ------------------------------------------------------------------------


def test_config_validation():
    for bad in (dict(r=0.0), dict(r=1.0, N=1000), dict(r=1.0, fp_tol=1.0), dict(r=1.0, gamma_tol=0.0)):
        with pytest.raises(InputError):
            SynthesisConfig(**bad)


def test_synthesize_scalar_zero_closed_form(scalar0):
    res = synthesize(scalar0, SynthesisConfig(r=1.0, N=N))
    assert res.gamma_hinf == pytest.approx(0.5, rel=1e-5)
    assert res.gamma_star == pytest.approx(1.0, rel=1e-6)
    assert res.cost == pytest.approx(2.0, rel=1e-6)
    np.testing.assert_allclose(res.K.values, -0.5, rtol=1e-12)
    np.testing.assert_allclose(res.Nspec.values.real, 4.0, rtol=1e-5)


def test_synthesize_rejects(scalar_half):
    with pytest.raises(InputError):
        synthesize(StateSpace([[0.5]], [[1.0]], [[0.0]]), SynthesisConfig(r=1.0, N=N))
    with pytest.raises(UnsupportedError):
        synthesize(random_stable(0, 2, p=2), SynthesisConfig(r=1.0, N=N))


@pytest.mark.parametrize("seed", [0, 1])
def test_synthesis_saddle_properties(seed):
    ss = random_stable(seed, 3)
    bl = Baselines.build(ss, N=512)
    r = 1.5
    res = synthesize(ss, SynthesisConfig(r=r, N=512), gamma_hinf=bl.gamma_hinf)
    assert res.gamma_star > res.gamma_hinf
    assert kkt_residual(res.L, res.Nspec, res.gamma_star, bl.blocks, bl.nb) <= 1e-8
    assert abs(res.radius_residual) <= 1e-6 * r * r
    assert anticausal_energy(res.K) <= 1e-6
    quad = bl.quad(res.K)
    _, g2, Mhalf = worst_case_cost(quad, r)
    assert g2 == pytest.approx(res.gamma_star, rel=1e-6)
    # the worst-case spectrum of the saddle controller is the fixed-point spectrum
    np.testing.assert_allclose(Mhalf.values.real ** 2, res.Nspec.values.real, rtol=1e-5)
    assert res.cost <= bl.cost(bl.K_h2, r) * (1 + 1e-9)
    assert res.cost <= bl.cost(bl.K_hinf, r) * (1 + 1e-3)


def test_synthesis_interpolates_between_h2_and_hinf(two_state):
    bl = Baselines.build(two_state, N=512)
    small = synthesize(two_state, SynthesisConfig(r=1e-4, N=512), gamma_hinf=bl.gamma_hinf)
    dev = np.max(np.abs(small.K.values - bl.K_h2.values)) / np.max(np.abs(bl.K_h2.values))
    assert dev <= 1e-2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        big = synthesize(two_state, SynthesisConfig(r=1e3, N=512), gamma_hinf=bl.gamma_hinf)
    assert np.max(bl.quad(big.K).values.real) <= 1.05 * bl.gamma_hinf
    mid = synthesize(two_state, SynthesisConfig(r=1.5, N=512), gamma_hinf=bl.gamma_hinf)
    assert small.gamma_star > mid.gamma_star > big.gamma_star
    assert np.max(mid.Nspec.values.real) > np.max(small.Nspec.values.real)
