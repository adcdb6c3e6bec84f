import numpy as np
import pytest

from pinnprice.net import Architecture, init_network, input_jet
from pinnprice.problems import (TERMINAL, MarketParams, PricingProblem, boundary_target, boundary_values,
                                face_of_point, interior_residual, lcp_residual, operator_coefficients, payoff,
                                residual_termwise_abs, scale_point, unscale_point)
from pinnprice.reference import bs_european, max_call


def test_market_validation():
    mk = MarketParams(r=0.05, sigma=(0.2, 0.3), delta=0.1, T=1.0, K=15.0, rho=0.3)
    assert mk.delta == (0.1, 0.1) and mk.dim == 2
    with pytest.raises(ValueError):
        MarketParams(r=0.05, sigma=-0.2, delta=0.0, T=1.0)
    with pytest.raises(ValueError):
        MarketParams(r=0.05, sigma=0.2, delta=0.0, T=0.0)
    with pytest.raises(ValueError):
        MarketParams(r=0.05, sigma=(0.2, 0.2), delta=0.0, T=1.0, rho=1.2)
    with pytest.raises(ValueError):
        MarketParams(r=0.05, sigma=0.2, delta=(0.0, 0.1), T=1.0)


def test_problem_defaults(put_problem, american_max_call_problem, max_call_problem):
    assert put_problem.s_max == (60.0,)
    assert put_problem.boundary_rules == ("dirichlet_formula", "dirichlet_formula")
    assert max_call_problem.s_max == (60.0, 60.0)
    assert max_call_problem.boundary_rules == ("dirichlet_analytic",) * 4
    assert american_max_call_problem.boundary_rules == ("none", "payoff", "none", "payoff")
    assert american_max_call_problem.active_faces() == [1, 3]


def test_problem_validation():
    mk2 = MarketParams(r=0.05, sigma=(0.2, 0.3), delta=0.1, T=1.0, K=15.0)
    with pytest.raises(ValueError):
        PricingProblem("american", "max_call", mk2, boundary_rules=("payoff",) * 4)
    with pytest.raises(ValueError):
        PricingProblem("bermudan", "put", MarketParams(0.04, 0.25, 0.0, 1.0, 15.0))
    with pytest.raises(ValueError):
        PricingProblem("european", "put", mk2)  # one-asset payoff on two assets
    with pytest.raises(ValueError):
        PricingProblem("european", "exchange", MarketParams(0.05, (0.2, 0.2), 0.0, 1.0))  # no K, no s_max


@pytest.mark.parametrize("kind,x,expected", [
    ("put", [10.0], 5.0), ("put", [20.0], 0.0), ("call", [20.0], 5.0),
    ("exchange", [30.0, 20.0], 10.0), ("max_call", [10.0, 40.0], 25.0), ("max_call", [10.0, 12.0], 0.0),
    ("spread", [30.0, 10.0], 5.0), ("arithmetic_avg_put", [10.0, 12.0], 4.0),
])
def test_payoffs(kind, x, expected):
    dim = len(x)
    mk = MarketParams(0.05, (0.25,) * dim, 0.0, 1.0, K=15.0)
    prob = PricingProblem("european", kind, mk, boundary_rules=("payoff",) * (2 * dim) if dim == 2 else None)
    assert payoff(prob, np.array(x)) == pytest.approx(expected)


def test_american_max_call_payoff_at_max_face(american_max_call_problem):
    # (S1, S2) = (S_max, s) -> payoff 45 with K = 15, S_max = 60
    assert boundary_target(american_max_call_problem, np.array([0.3, 1.0, 0.2])) == pytest.approx(45.0)


def test_scaling_round_trip(max_call_problem):
    x = np.array([[0.5, 30.0, 12.0], [1.0, 60.0, 0.0]])
    y = scale_point(max_call_problem, x)
    np.testing.assert_allclose(y, [[0.5, 0.5, 0.2], [1.0, 1.0, 0.0]])
    np.testing.assert_allclose(unscale_point(max_call_problem, y), x)
    with pytest.raises(ValueError):
        scale_point(max_call_problem, np.array([0.5, 61.0, 1.0]))
    with pytest.raises(ValueError):
        unscale_point(max_call_problem, np.array([0.5, 1.5, 0.2]))


def _smooth_jet(problem, price, y, h=1e-4):
    """Jet of a known price function in unit coordinates, by central differences."""
    sc = problem.scales
    f = lambda z: price(*(z * sc))  # noqa: E731
    d = len(y)
    v = f(y)
    g = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        g[i] = (f(y + e) - f(y - e)) / (2 * h)
    m = d - 1
    H = np.zeros((m, m))
    for i in range(1, d):
        for j in range(1, d):
            ei, ej = np.zeros(d), np.zeros(d)
            ei[i], ej[j] = h, h
            H[i - 1, j - 1] = (f(y + ei + ej) - f(y + ei - ej) - f(y - ei + ej) + f(y - ei - ej)) / (4 * h * h)
    from pinnprice.net import Jet

    return Jet(np.float64(v), np.float64(g[0]), g[1:], H)


def test_closed_form_put_solves_the_pde(put_problem):
    mk = put_problem.market
    price = lambda t, s: bs_european(t, np.array([s]), mk, "put")[0]  # noqa: E731
    for y in ([0.3, 0.25], [0.6, 0.4], [0.1, 0.7]):
        jet = _smooth_jet(put_problem, price, np.array(y))
        res = interior_residual(put_problem, jet, np.array(y))
        bound = residual_termwise_abs(put_problem, jet, np.array(y))
        assert abs(res) < 1e-5 * bound
        assert bound > 0


def test_closed_form_max_call_solves_the_pde(max_call_problem):
    mk = max_call_problem.market
    price = lambda t, a, b: max_call(t, np.array([a]), np.array([b]), mk)[0]  # noqa: E731
    for y in ([0.3, 0.25, 0.3], [0.5, 0.4, 0.2]):
        jet = _smooth_jet(max_call_problem, price, np.array(y))
        res = interior_residual(max_call_problem, jet, np.array(y))
        assert abs(res) < 1e-4 * residual_termwise_abs(max_call_problem, jet, np.array(y))


def test_termwise_bound_dominates_residual(max_call_problem):
    arch = Architecture(3)
    params = init_network(arch, 10.0, 0)
    y = np.random.default_rng(0).random((200, 3))
    jet = input_jet(params, y)
    res = interior_residual(max_call_problem, jet, y)
    bound = residual_termwise_abs(max_call_problem, jet, y)
    assert np.all(np.abs(res) <= bound + 1e-12)


def test_operator_coefficients_layout(max_call_problem):
    mk = max_call_problem.market
    c = operator_coefficients(max_call_problem, np.array([[0.2, 0.5, 0.25]]))[:, 0]
    expected = [-mk.r, 1.0, (mk.r - 0.1) * 0.5, (mk.r - 0.05) * 0.25, 0.5 * 0.04 * 0.25, 0.5 * 0.09 * 0.0625,
                0.3 * 0.2 * 0.3 * 0.5 * 0.25]
    np.testing.assert_allclose(c, expected)


def test_lcp_residual(american_put_problem, put_problem):
    arch = Architecture(2)
    params = init_network(arch, 15.0, 0)
    y = np.random.default_rng(0).random((50, 2))
    jet = input_jet(params, y)
    H = payoff(american_put_problem, y[:, 1:] * 60.0)
    lcp = lcp_residual(american_put_problem, jet, y, H)
    np.testing.assert_allclose(lcp, np.maximum(H - jet.value, interior_residual(american_put_problem, jet, y)))
    with pytest.raises(ValueError):
        lcp_residual(put_problem, jet, y, H)


def test_boundary_targets_one_asset(put_problem, american_put_problem):
    K, r = 15.0, 0.04
    y = np.array([[0.5, 0.0], [0.5, 1.0], [1.0, 0.25]])
    vals = boundary_values(put_problem, y, [0, 1, TERMINAL])
    np.testing.assert_allclose(vals, [K * np.exp(-r * 0.5), 0.0, 0.0])
    # american put at S = 0: the target is floored at the payoff K
    assert boundary_values(american_put_problem, y[:1], [0])[0] == pytest.approx(K)


def test_boundary_targets_two_asset(max_call_problem, american_max_call_problem):
    y = np.array([0.4, 0.0, 0.3])
    v = boundary_target(max_call_problem, y)
    assert v == pytest.approx(max_call(0.4, np.array([0.0]), np.array([18.0]), max_call_problem.market)[0])
    assert boundary_target(american_max_call_problem, y) is None
    assert face_of_point(american_max_call_problem, np.array([1.0, 0.5, 0.5])) == TERMINAL
    assert face_of_point(american_max_call_problem, np.array([0.5, 0.5, 1.0])) == 3
    with pytest.raises(ValueError):
        face_of_point(american_max_call_problem, np.array([0.5, 0.5, 0.5]))
