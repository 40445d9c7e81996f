import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from growthfrag import (
    ConstraintError,
    DomainError,
    Kernel,
    Nonlinearity,
    PeriodicControl,
    PeriodicSeries,
    derive_params,
    kernel_moment,
)
from growthfrag.model import (
    check_assumption_f,
    check_assumption_fg,
    check_assumption_prion,
    find_roots,
)


def test_dilation_parameter():
    assert derive_params(1, 1, 1, 0.5).k == pytest.approx(2.0)
    assert derive_params(1, 0, 1, 1).k == pytest.approx(0.5)


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, 1, -1, 1), (1, 1, 1, 0), (1, 1, 1, 1, -0.1), (1, 3, 1, 1)])
def test_powerlaw_rejects_bad_coefficients(args):
    with pytest.raises(ConstraintError):
        derive_params(*args)


def test_kernel_moments_constant_two():
    k = Kernel.constant_two()
    assert kernel_moment(k, 0.0) == pytest.approx(2.0)
    assert kernel_moment(k, 1.0) == pytest.approx(1.0)
    assert k.n0 == pytest.approx(2.0)


def test_tabulated_kernel_is_renormalized_to_unit_mass():
    k = Kernel.tabulated([0.0, 0.5, 1.0], [1.0, 3.0, 1.0])
    assert kernel_moment(k, 1.0) == pytest.approx(1.0, abs=1e-14)
    assert k.symmetric
    asym = Kernel.tabulated([0.0, 1.0], [1.0, 2.0])
    assert not asym.symmetric


@pytest.mark.parametrize("nodes, values", [([0.0, 1.0], [1.0, 0.0]), ([0.1, 1.0], [1.0, 1.0]),
                                           ([0.0, 0.0, 1.0], [1, 1, 1])])
def test_tabulated_kernel_validation(nodes, values):
    with pytest.raises(DomainError):
        Kernel.tabulated(nodes, values)


@given(st.lists(st.floats(0.2, 5.0), min_size=2, max_size=8), st.floats(0.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_tabulated_kernel_moment_matches_quadrature(values, alpha):
    nodes = np.linspace(0.0, 1.0, len(values))
    k = Kernel.tabulated(nodes, values)
    ref = sum(quad(lambda z: z**alpha * k(z), a, b, epsabs=1e-13)[0] for a, b in zip(nodes, nodes[1:]))
    assert kernel_moment(k, alpha) == pytest.approx(ref, rel=1e-9)


def test_nonlinearity_derivatives_match_finite_differences():
    families = [Nonlinearity("exp-decay", {"a": 2.0}), Nonlinearity("shifted-gaussian-quartic"),
                Nonlinearity("linear", {"c": 0.9}),
                Nonlinearity("prion-sigmoid", {"a": 6.3, "b": 1.1, "s": 20.0}),
                Nonlinearity("constant", {"c": 1.5})]
    x = np.linspace(0.1, 3.0, 17)
    for f in families:
        fd = (f(x + 1e-6) - f(x - 1e-6)) / 2e-6
        assert np.allclose(f.derivative(x), fd, rtol=1e-6, atol=1e-8), f.describe()


def test_nonlinearity_parameter_checks():
    with pytest.raises(DomainError):
        Nonlinearity("exp-decay", {})
    with pytest.raises(DomainError):
        Nonlinearity("linear", {"c": 1.0, "d": 2.0})
    with pytest.raises(DomainError):
        Nonlinearity("cubic")


def test_inverse_of_increasing_family():
    f = Nonlinearity("prion-sigmoid", {"a": 6.3, "b": 1.1, "s": 20.0})
    y = float(f(2.5))
    assert f.inverse(y) == pytest.approx(2.5, rel=1e-12)
    assert Nonlinearity("linear", {"c": 0.5}).inverse(2.0) == 4.0


def test_periodic_series_mean_and_bounds():
    s = PeriodicSeries.fourier(1.0, [(0.3, 0.4)], period=2.0)
    assert s.mean() == 1.0
    assert s.minimum() == pytest.approx(0.5, abs=1e-5)
    assert s.maximum() == pytest.approx(1.5, abs=1e-5)
    assert s(0.3) == pytest.approx(s(2.3))
    pw = PeriodicSeries.piecewise([0.0, 0.25], [2.0, 1.0])
    assert pw.mean() == pytest.approx(1.25)
    assert pw(0.1) == 2.0 and pw(1.5) == 1.0


def test_control_requires_positive_velocity():
    with pytest.raises(DomainError):
        PeriodicControl(PeriodicSeries.fourier(0.5, [(0.0, 0.9)]), PeriodicSeries.constant(0.0))


def test_find_roots_simple_and_tangent():
    roots, degenerate = find_roots(lambda x: (x - 1.0) * (x - 2.5), 0.0, 4.0)
    assert np.allclose(roots, [1.0, 2.5], atol=1e-12) and not degenerate
    roots, _ = find_roots(lambda x: (x - 1.0) ** 2, 0.0, 3.0)
    assert np.allclose(roots, [1.0], atol=1e-6)


def test_assumption_f_for_decaying_exponential():
    rep = check_assumption_f(Nonlinearity("exp-decay", {"a": 2.0}), 1.0)
    assert rep.passed
    assert rep.values["roots"] == pytest.approx([math.log(2.0)], abs=1e-12)
    rep = check_assumption_f(Nonlinearity("constant", {"c": 2.0}), 1.0)
    assert not rep.passed


def test_assumption_fg_for_the_cycle_example():
    f = Nonlinearity("shifted-gaussian-quartic")
    g = Nonlinearity("linear", {"c": 0.9})
    rep = check_assumption_fg(f, g, 2.0, 5.0, 1.0)
    assert rep.passed, rep.messages
    assert rep.values["equilibria"] == pytest.approx([1.0398776282225797], rel=1e-9)


def test_assumption_prion_flags_the_unmet_sufficient_condition():
    f = Nonlinearity("prion-sigmoid", {"a": 6.3, "b": 1.1, "s": 20.0})
    rep = check_assumption_prion(f, 0.9, 0.2, 1.0, 1.0)
    assert rep.passed
    assert rep.values["x0"] == pytest.approx(0.63541745272204, rel=1e-9)
    assert rep.values["mu_le_k_plus_inv_mu_delta"] is False
    assert rep.messages
