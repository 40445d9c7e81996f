import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from growthfrag import DomainError, Grid, Kernel, ModelError, Nonlinearity, PeriodicControl, derive_params
from growthfrag.model import kernel_moment
from growthfrag.pde import (
    DRIFT,
    DRIFT_DEATH,
    LINEAR,
    PRION,
    CFLError,
    NumericalError,
    Scenario,
    SizeState,
    admissible_dt,
    build_operator,
    feedback,
    fit_decay_rate,
    golden_section,
    gre,
    lognormal_bump,
    observables,
    rescaled_profile,
    run,
    step,
    uniform_block,
    write_csv,
)

KAPPA2 = Kernel.constant_two()
PL = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)
SMALL = Grid(10.0, 60)
OPS = {
    "two": build_operator(SMALL, PL, KAPPA2),
    "tab": build_operator(SMALL, derive_params(1.0, 0.5, 2.0, 1.5),
                          Kernel.tabulated([0.0, 0.3, 0.7, 1.0], [1.0, 2.5, 2.5, 1.0])),
}


def _linear(grid, pl=PL, V=1.0, R=0.0):
    return Scenario(LINEAR, pl, KAPPA2, grid, control=PeriodicControl.constant(V, R))


def test_grid_quadrature():
    g = Grid(4.0, 400)
    assert g.h == pytest.approx(0.01)
    assert g.nodes[0] == pytest.approx(0.005)
    assert g.integrate(np.ones(g.n)) == pytest.approx(4.0)
    assert g.moment(np.ones(g.n), 1.0) == pytest.approx(8.0)
    with pytest.raises(DomainError):
        Grid(1.0, 1)


def test_default_grid_leaves_small_tail():
    g = Grid.for_powerlaw(PL, KAPPA2)
    assert math.exp(-g.x_max) < 1e-9
    assert Grid.for_powerlaw(PL, KAPPA2, stretch=2.0).x_max == pytest.approx(2 * g.x_max)


densities = arrays(np.float64, SMALL.n, elements=st.floats(0.0, 10.0))


@given(densities, st.sampled_from(sorted(OPS)))
@settings(max_examples=50, deadline=None)
def test_fragmentation_conserves_mass(u, name):
    op = OPS[name]
    x = op.grid.nodes
    frag = op.fragmentation(u)
    assert abs(np.dot(x, frag)) <= 1e-13 * np.dot(x, np.abs(u)) + 1e-300


@given(densities, st.sampled_from(sorted(OPS)))
@settings(max_examples=50, deadline=None)
def test_fragmentation_number_identity(u, name):
    op = OPS[name]
    c0 = kernel_moment(op.kernel, 0.0)
    w = np.where(op.number_exact, u, 0.0)
    gained = op.fragmentation(w).sum()
    assert gained == pytest.approx(np.sum((c0 - 1.0) * op.loss * w), rel=1e-10, abs=1e-12)


@given(densities)
@settings(max_examples=50, deadline=None)
def test_transport_moments(u):
    op = OPS["two"]
    tr = op.transport(u)
    assert abs(tr.sum()) <= 1e-12 * (1 + np.abs(tr).sum())
    # the first moment grows at the rate int tau x^nu u, minus the closed last cell
    rate = np.dot(op.grid.nodes, tr)
    expect = np.sum(PL.tau * op.grid.nodes[:-1] * u[:-1])
    assert rate == pytest.approx(expect, rel=1e-10, abs=1e-12)


def test_adjoint_is_transpose():
    op = OPS["tab"]
    rng = np.random.default_rng(1)
    u, phi = rng.random(SMALL.n), rng.random(SMALL.n)
    assert np.dot(phi, op.apply(u, 1.3, 0.2)) == pytest.approx(np.dot(op.apply_adjoint(phi, 1.3, 0.2), u))
    assert np.allclose(op.matrix(1.3, 0.2) @ u, op.apply(u, 1.3, 0.2))


@given(densities, st.floats(0.2, 3.0), st.floats(0.0, 2.0), st.floats(0.05, 1.0))
@settings(max_examples=50, deadline=None)
def test_step_preserves_positivity_under_cfl(u, V, R, frac):
    sc = _linear(SMALL, V=V, R=R)
    state = SizeState(0.0, u)
    fb = feedback(sc, state)
    new = step(state, sc, frac * admissible_dt(sc, fb), fb)
    assert np.all(new.u >= 0)


def test_step_rejects_inadmissible_dt():
    sc = _linear(SMALL)
    state = SizeState(0.0, np.ones(SMALL.n))
    dt = admissible_dt(sc, feedback(sc, state))
    with pytest.raises(CFLError):
        step(state, sc, 1.5 * dt)


def test_size_state_rejects_negative_density():
    with pytest.raises(NumericalError):
        SizeState(0.0, np.array([1.0, -0.5]))
    s = SizeState(0.0, np.array([1.0, -1e-18]))
    assert s.u[1] == 0.0


def test_scenario_validation():
    with pytest.raises(ModelError):
        Scenario("unknown", PL, KAPPA2, SMALL)
    with pytest.raises(ModelError):
        Scenario(DRIFT, PL, KAPPA2, SMALL, p=0.5)
    with pytest.raises(ModelError):
        Scenario(DRIFT_DEATH, PL, KAPPA2, SMALL, f=Nonlinearity("constant", {"c": 1.0}), p=1.0)
    sc = Scenario(DRIFT, PL, KAPPA2, SMALL, f=Nonlinearity("constant", {"c": 1.0}), p=2.0)
    assert sc.r == 5.0


def test_linear_run_grows_mass_at_rate_tau():
    # nu = 1, V = 1, R = 0: the Euler mass update is exactly (1 + tau dt) per step
    g = Grid(30.0, 600)
    res = run(_linear(g), uniform_block(g, 0.5, 1.5), 1.0, sample_dt=0.25)
    m1 = res.diagnostics.series("M1")
    t = res.diagnostics.series("t")
    dt = 1.0 / res.steps
    assert np.allclose(m1, m1[0] * (1 + dt) ** (t / dt), rtol=1e-9)


def test_run_mass_conservation_with_death():
    g = Grid(20.0, 300)
    pl = PL.replace(mu=0.5)
    res = run(_linear(g, pl, V=1.0, R=1.0), lognormal_bump(g), 2.0, sample_dt=0.5)
    m1 = res.diagnostics.series("M1")
    dt = 2.0 / res.steps
    t = res.diagnostics.series("t")
    assert np.allclose(m1, m1[0] * (1 + dt * (1.0 - 0.5)) ** (t / dt), rtol=1e-8)


def test_run_is_deterministic(tmp_path):
    g = Grid(10.0, 80)
    sc = Scenario(DRIFT, PL, KAPPA2, g, f=Nonlinearity("exp-decay", {"a": 2.0}), p=0.5)
    paths = []
    for i in range(2):
        res = run(sc, lognormal_bump(g), 1.0, sample_dt=0.5)
        paths.append(tmp_path / f"d{i}.csv")
        res.diagnostics.to_csv(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_prion_run_requires_monomer_and_tracks_it():
    g = Grid(15.0, 100)
    sc = Scenario(PRION, PL, KAPPA2, g, f=Nonlinearity("prion-sigmoid", {"a": 6.3, "b": 1.1, "s": 20.0}),
                  p=4.0, lam=0.9, delta=0.2, mp_ref=24.0, m1_ref=1.0)
    with pytest.raises(ModelError):
        run(sc, lognormal_bump(g), 0.1)
    res = run(sc, lognormal_bump(g), 0.5, sample_dt=0.25, monomer0=1.0)
    assert res.state.monomer > 0


def test_observables_and_gre():
    g = Grid(40.0, 4000)
    u = np.exp(-g.nodes)
    obs = observables(u, g, alphas=(0.0, 2.0))
    assert obs["M0"] == pytest.approx(1.0, rel=1e-3) and obs["M2"] == pytest.approx(2.0, rel=1e-2)
    assert gre(u, u, np.ones(g.n), lambda s: (s - 1) ** 2, g) == 0.0
    with pytest.raises(DomainError):
        gre(u, np.zeros(g.n), np.ones(g.n), lambda s: s, g)


@given(st.floats(0.5, 2.0))
@settings(max_examples=25, deadline=None)
def test_rescaled_profile_preserves_number(W):
    g = Grid(60.0, 3000)
    U = np.exp(-g.nodes)
    out = rescaled_profile(U, g, W, 1.0)
    assert g.integrate(out) == pytest.approx(g.integrate(U), rel=2e-3)
    assert g.moment(out, 1.0) == pytest.approx(W * g.moment(U, 1.0), rel=2e-3)


def test_golden_section_and_decay_fit():
    x, fx = golden_section(lambda s: (s - 0.3) ** 2, 0.0, 1.0, tol=1e-10)
    assert x == pytest.approx(0.3, abs=1e-6) and fx < 1e-10
    t = np.linspace(0, 10, 101)
    assert fit_decay_rate(t, 3.0 * np.exp(-0.7 * t), burn_in=2.0) == pytest.approx(0.7)
    with pytest.raises(NumericalError):
        fit_decay_rate(t, np.zeros_like(t))


def test_write_csv_uses_round_trip_floats(tmp_path):
    path = tmp_path / "a.csv"
    write_csv(path, ("a", "b"), [(0.1, 1 / 3)], comment="note")
    lines = path.read_text().splitlines()
    assert lines[0] == "# note" and lines[1] == "a,b"
    assert [float(v) for v in lines[2].split(",")] == [0.1, 1 / 3]
