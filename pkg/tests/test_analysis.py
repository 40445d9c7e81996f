import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthfrag import DomainError, Nonlinearity, PeriodicControl, PeriodicSeries, derive_params
from growthfrag.analysis import (
    alphas_pm,
    beta_alpha,
    classify_2x2,
    detect_limit_cycle,
    entropy_dissipation_ratio,
    finite_difference_jacobian,
    floquet_compare,
    g_alpha,
    hopf_scan,
    lemma_f,
    local_stability,
    lyapunov,
    omega,
    routh_hurwitz,
    steady_states,
)
from growthfrag.eigen import closed_form_moment
from growthfrag.reduced import ReducedParams, make_rhs, simulate

PL1 = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)
PL_SLOW = derive_params(1.0, 1.0, 1.0, 0.1, 1.0)
F_EXP = Nonlinearity("exp-decay", {"a": 2.0})
PRION = ReducedParams(PL1, f=Nonlinearity("prion-sigmoid", {"a": 6.3, "b": 1.1, "s": 20.0}),
                      p=4.0, lam=0.9, delta=0.2)
CYCLE = ReducedParams(PL1, f=Nonlinearity("shifted-gaussian-quartic"),
                      g=Nonlinearity("linear", {"c": 0.9}), p=2.0, q=5.0)

# reference values from an independent scipy solve_ivp / brentq computation
ORACLE = {
    "wq_equilibrium": (1.0398776282225797, 0.9502295912554095),
    "wq_period": 4.77209754,
    "prion_equilibrium": (1.3229127363898008, 1.0, 0.63541745272204),
    "prion_p0": 3.091233294205668,
    "prion_period": 6.87125117,
    "prion_eigs_p4": (0.11446962, 0.83008166, -0.59014145),
}


@given(st.floats(-1.0, 20.0))
def test_omega_matches_closed_form_above_minus_one(alpha):
    assert omega(alpha) == pytest.approx(lemma_f(alpha - 1.0), rel=1e-9, abs=1e-12)
    assert omega(alpha) == pytest.approx(g_alpha(beta_alpha(alpha), alpha), rel=1e-9, abs=1e-12)


@given(st.floats(-30.0, -1.01))
def test_closed_form_overestimates_below_minus_one(alpha):
    assert omega(alpha) < lemma_f(alpha - 1.0)


@given(st.floats(-10.0, 10.0), st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
def test_two_square_inequality(alpha, a, b):
    lhs = (a + b) ** 2 + (a + alpha * b) ** 2
    assert lhs >= omega(alpha) * (a * a + b * b) - 1e-9 * (1 + lhs)


def test_omega_peaks_at_minus_one():
    assert omega(-1.0) == pytest.approx(2.0)
    grid = np.linspace(-20, 20, 4001)
    assert max(omega(a) for a in grid) <= 2.0 + 1e-12


def test_alphas():
    ap, am = alphas_pm(4.0)
    assert (ap, am) == (pytest.approx(1 / 3), pytest.approx(1.0))
    with pytest.raises(DomainError):
        alphas_pm(1.0)


@pytest.mark.parametrize("p, z_inf", [(0.5, math.log(2.0) / 2.4024),
                                      (2.0, math.log(2.0) / (math.gamma(30) / math.gamma(10) * 1e-20))])
def test_wz_equilibrium(p, z_inf):
    params = ReducedParams(PL_SLOW, f=F_EXP, p=p, mp=closed_form_moment(PL_SLOW, p))
    rep = steady_states("WZ", params)
    assert rep.unique
    assert rep.equilibria[0]["W"] == 1.0
    assert rep.equilibria[0]["Z"] == pytest.approx(z_inf, rel=1e-10)


def test_wz_classification_focus_and_node():
    labels = {}
    for p in (0.5, 2.0):
        params = ReducedParams(PL_SLOW, f=F_EXP, p=p, mp=closed_form_moment(PL_SLOW, p))
        eq = steady_states("WZ", params).equilibria[0]
        labels[p] = local_stability("WZ", eq, params).classification
    assert labels == {0.5: "stable focus", 2.0: "stable node"}


def test_wq_equilibrium_and_instability():
    eq = steady_states("WQ", CYCLE).equilibria[0]
    assert (eq["W"], eq["Q"]) == pytest.approx(ORACLE["wq_equilibrium"], rel=1e-10)
    rep = local_stability("WQ", eq, CYCLE)
    c = rep.conditions
    assert c["T_closed_form"] == pytest.approx(rep.T, rel=1e-10)
    assert c["D_closed_form"] == pytest.approx(rep.D, rel=1e-10)
    assert c["D_via_psi"] == pytest.approx(rep.D, rel=1e-10)
    assert rep.classification == "unstable focus"


def test_wq_limit_cycle_period():
    eq = steady_states("WQ", CYCLE).equilibria[0]
    traj = simulate("WQ", CYCLE, [1.2, 1.0], 250.0, dt=1e-2)
    cyc = detect_limit_cycle(traj, eq["W"], burn_in=100.0)
    assert cyc.detected
    assert cyc.period == pytest.approx(ORACLE["wq_period"], rel=1e-4)


def test_no_cycle_for_a_stable_focus():
    params = ReducedParams(PL_SLOW, f=F_EXP, p=0.5, mp=closed_form_moment(PL_SLOW, 0.5))
    traj = simulate("WZ", params, [0.5, 0.1], 150.0, dt=1e-2)
    assert not detect_limit_cycle(traj, 1.0, burn_in=20.0).detected


def test_prion_equilibrium_and_hopf_point():
    eq = steady_states("VWQ", PRION).equilibria[0]
    assert (eq["V"], eq["W"], eq["Q"]) == pytest.approx(ORACLE["prion_equilibrium"], rel=1e-10)
    rep = hopf_scan(PRION)
    assert rep.p0 == pytest.approx(ORACLE["prion_p0"], abs=1e-8)
    assert rep.psi0 < 0 < rep.psi_p1 and rep.concave
    assert rep.a_prime > 0
    assert not rep.assumption_holds


def test_prion_eigenvalues_at_p4():
    eq = steady_states("VWQ", PRION).equilibria[0]
    rep = local_stability("VWQ", eq, PRION)
    re, im, real = ORACLE["prion_eigs_p4"]
    eigs = rep.eigenvalues
    assert eigs.real.min() == pytest.approx(real, abs=1e-6)
    assert np.abs(eigs.imag).max() == pytest.approx(im, abs=1e-6)
    assert eigs.real.max() == pytest.approx(re, abs=1e-6)
    assert rep.classification == "unstable focus"
    assert not rep.conditions["routh_hurwitz_stable"]


def test_prion_cycle_period():
    eq = steady_states("VWQ", PRION).equilibria[0]
    traj = simulate("VWQ", PRION, [1.05 * eq["V"], eq["W"], eq["Q"]], 500.0, dt=1e-2)
    cyc = detect_limit_cycle(traj, eq["W"], burn_in=300.0)
    assert cyc.detected
    assert cyc.period == pytest.approx(ORACLE["prion_period"], rel=1e-4)


@given(st.lists(st.floats(-3.0, 3.0), min_size=9, max_size=9))
@settings(max_examples=200)
def test_routh_hurwitz_agrees_with_eigenvalues(entries):
    J = np.array(entries).reshape(3, 3)
    eigs = np.linalg.eigvals(J)
    if np.min(np.abs(eigs.real)) < 1e-6:
        return
    T = np.trace(J)
    M = sum(np.linalg.det(J[np.ix_(idx, idx)]) for idx in ([0, 1], [0, 2], [1, 2]))
    assert routh_hurwitz(T, M, np.linalg.det(J)) == bool(np.all(eigs.real < 0))


@pytest.mark.parametrize("T, D, label", [(-1.0, 2.0, "stable focus"), (-3.0, 1.0, "stable node"),
                                         (1.0, 2.0, "unstable focus"), (0.0, 1.0, "Hopf-marginal"),
                                         (1.0, -1.0, "saddle"), (-2.0, 1.0, "stable degenerate node")])
def test_classify_2x2(T, D, label):
    assert classify_2x2(T, D) == label


def test_finite_difference_jacobian():
    fun = lambda t, y: np.array([y[0] * y[1], math.sin(y[0]) + y[1] ** 3])
    J = finite_difference_jacobian(fun, np.array([0.7, 1e-7]))
    assert J == pytest.approx(np.array([[1e-7, 0.7], [math.cos(0.7), 3e-14]]), abs=1e-8)


@given(st.floats(0.4, 2.5), st.floats(0.3, 3.0))
@settings(max_examples=30, deadline=None)
def test_lyapunov_dissipation_identity(W, z_scale):
    params = ReducedParams(PL1, f=F_EXP, p=2.0, mp=closed_form_moment(PL1, 2.0))
    z_inf = steady_states("WZ", params).equilibria[0]["Z"]
    v = lyapunov(W, z_scale * z_inf, params)
    assert v.dLdt == pytest.approx(v.two_squares, rel=1e-9, abs=1e-14)
    assert v.dLdt <= -v.D + 1e-12


def test_entropy_dissipation_ratio_is_positive():
    params = ReducedParams(PL1, f=F_EXP, p=2.0, mp=closed_form_moment(PL1, 2.0))
    assert entropy_dissipation_ratio(params, samples=50) > 0


def test_floquet_identity_for_linear_growth():
    control = PeriodicControl(PeriodicSeries.fourier(1.0, [(0.2, 0.3), (0.1, 0.0)]),
                              PeriodicSeries.fourier(0.5, [(0.0, 0.2)]))
    rep = floquet_compare(PL1, control)
    assert rep.lambda_F == pytest.approx(rep.lambda_bar, abs=1e-10)
    # the periodic orbit satisfies the W-equation
    dW = np.gradient(rep.W, rep.t, edge_order=2)
    fun = make_rhs("W-ODE", ReducedParams(PL1, V2=control.V))
    expect = np.array([fun(t, [w])[0] for t, w in zip(rep.t, rep.W)])
    assert np.max(np.abs(dW - expect)) < 1e-5


def test_floquet_sandwich_for_constant_growth():
    pl = derive_params(1.0, 0.0, 1.0, 1.0, 1.0)
    control = PeriodicControl(PeriodicSeries.fourier(1.0, [(0.0, 0.9)]), PeriodicSeries.constant(0.5))
    rep = floquet_compare(pl, control)
    assert rep.lambda_mean < rep.lambda_F < rep.lambda_bar


def test_floquet_rejects_unsupported_growth():
    with pytest.raises(DomainError):
        floquet_compare(derive_params(1.0, 0.5, 1.0, 1.0), PeriodicControl.constant())
