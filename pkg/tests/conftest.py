"""Shared fixtures and independent pricing oracles.

The oracles price by one-dimensional adaptive quadrature after conditioning on
the first Gaussian driver, so they share no code with the closed forms
(in particular they never call the bivariate normal).
"""

import sys

import numpy as np
import pytest
from scipy import integrate, stats

from pinnprice.problems import MarketParams, PricingProblem


def _lognormal_call(F, c, v):
    """E[(X - c)^+] for lognormal X with mean F and log-variance v^2."""
    if c <= 0:
        return F - c
    if v == 0:
        return max(F - c, 0.0)
    d1 = (np.log(F / c) + 0.5 * v * v) / v
    return F * stats.norm.cdf(d1) - c * stats.norm.cdf(d1 - v)


def _conditional_drivers(tau, S1, S2, mk, z):
    """S1(T) given Z1 = z, and the forward and log-vol of S2(T) given Z1 = z."""
    s1, s2 = mk.sigma
    d1, d2 = mk.delta
    rho = mk.rho
    sq = np.sqrt(tau)
    a = S1 * np.exp((mk.r - d1 - 0.5 * s1 * s1) * tau + s1 * sq * z)
    v2 = s2 * sq * np.sqrt(1.0 - rho * rho)
    F2 = S2 * np.exp((mk.r - d2 - 0.5 * s2 * s2) * tau + s2 * sq * rho * z + 0.5 * v2 * v2)
    return a, F2, v2


def _integrate_over_z(fn, kinks):
    pts = sorted(k for k in kinks if np.isfinite(k) and -12 < k < 12)
    edges = [-12.0, *pts, 12.0]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda z: fn(z) * stats.norm.pdf(z), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return total


def quad_max_call(tau, S1, S2, mk, K):
    """e^{-r tau} E[(max(S1_T, S2_T) - K)^+] by conditional quadrature."""
    if tau == 0:
        return max(max(S1, S2) - K, 0.0)

    def cond(z):
        a, F2, v2 = _conditional_drivers(tau, S1, S2, mk, z)
        return max(a - K, 0.0) + _lognormal_call(F2, max(a, K), v2)

    s1 = mk.sigma[0]
    kink = (np.log(K / S1) - (mk.r - mk.delta[0] - 0.5 * s1 * s1) * tau) / (s1 * np.sqrt(tau))
    return np.exp(-mk.r * tau) * _integrate_over_z(cond, [kink])


def quad_exchange(tau, S1, S2, mk):
    """e^{-r tau} E[(S1_T - S2_T)^+] by conditional quadrature."""
    if tau == 0:
        return max(S1 - S2, 0.0)

    def cond(z):
        a, F2, v2 = _conditional_drivers(tau, S1, S2, mk, z)
        # E[(a - X)^+] = E[(X - a)^+] - F + a
        return _lognormal_call(F2, a, v2) - F2 + a

    return np.exp(-mk.r * tau) * _integrate_over_z(cond, [])


def quad_bvn(a, b, rho):
    """P(X <= a, Y <= b) for standard normals with correlation rho."""
    if abs(rho) == 1.0:
        return stats.norm.cdf(min(a, b)) if rho == 1 else max(stats.norm.cdf(a) + stats.norm.cdf(b) - 1.0, 0.0)
    s = np.sqrt(1.0 - rho * rho)
    val, _ = integrate.quad(lambda x: stats.norm.pdf(x) * stats.norm.cdf((b - rho * x) / s), -40.0, a,
                            epsabs=1e-15, epsrel=1e-13, limit=400, points=[0.0] if a > 0 else None)
    return val


@pytest.fixture
def put_problem():
    mk = MarketParams(r=0.04, sigma=0.25, delta=0.0, T=1.0, K=15.0)
    return PricingProblem("european", "put", mk)


@pytest.fixture
def american_put_problem():
    mk = MarketParams(r=0.3, sigma=0.25, delta=0.26, T=1.0, K=15.0)
    return PricingProblem("american", "put", mk)


@pytest.fixture
def max_call_problem():
    mk = MarketParams(r=0.05, sigma=(0.2, 0.3), delta=(0.1, 0.05), T=1.0, K=15.0, rho=0.3)
    return PricingProblem("european", "max_call", mk)


@pytest.fixture
def exchange_problem():
    mk = MarketParams(r=0.05, sigma=(0.25, 0.25), delta=0.1, T=1.0, rho=0.1)
    return PricingProblem("european", "exchange", mk, s_max=60.0)


@pytest.fixture
def american_max_call_problem():
    mk = MarketParams(r=0.04, sigma=(0.25, 0.25), delta=0.01, T=0.5, K=15.0, rho=0.1)
    return PricingProblem("american", "max_call", mk, s_max=60.0)


def pytest_terminal_summary(terminalreporter):
    """One verdict line per acceptance criterion, when the acceptance tests ran."""
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
