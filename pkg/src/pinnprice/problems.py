"""Pricing problems: payoffs, Black-Scholes operators, boundary rules, scaling.

The network works on the unit cube ``y = (t/T, S_1/S_1max, ..., S_m/S_mmax)``.
Because ``S d/dS = x d/dx`` and ``S_i S_j d2/dS_i dS_j = x_i x_j d2/dx_i dx_j``
under this scaling, every residual can be written as a linear combination of
the network's scaled-input jet with coefficients that only depend on ``y``;
:func:`operator_coefficients` returns them in the stream order used by
:mod:`pinnprice.net`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pinnprice.net import Jet, spatial_pairs
from pinnprice.reference import closed_form

STYLES = ("european", "american")
PAYOFFS = {"put": 1, "call": 1, "exchange": 2, "max_call": 2, "spread": 2, "arithmetic_avg_put": 2}
RULES = ("dirichlet_formula", "dirichlet_analytic", "payoff", "none")
TERMINAL = -1  # face id used for the terminal slice t = T


@dataclass(frozen=True)
class MarketParams:
    r: float
    sigma: tuple[float, ...]
    delta: tuple[float, ...]
    T: float
    K: float | None = None
    rho: float = 0.0

    def __post_init__(self):
        sigma = tuple(float(s) for s in np.atleast_1d(self.sigma))
        delta = tuple(float(d) for d in np.atleast_1d(self.delta))
        if len(delta) == 1 and len(sigma) > 1:
            delta = delta * len(sigma)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "delta", delta)
        if len(sigma) not in (1, 2) or len(delta) != len(sigma):
            raise ValueError("sigma and delta must both have length 1 or 2")
        if min(sigma) <= 0:
            raise ValueError("volatilities must be positive")
        if not self.T > 0:
            raise ValueError("maturity T must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("correlation must lie in [-1, 1]")
        if self.K is not None and not self.K > 0:
            raise ValueError("strike K must be positive")

    @property
    def dim(self) -> int:
        return len(self.sigma)


@dataclass(frozen=True)
class PricingProblem:
    """One option pricing PDE (european) or LCP (american) on a bounded box.

    ``boundary_rules`` lists one rule per spatial face in face-id order
    ``(S1=0, S1=max, S2=0, S2=max)``; ``None`` picks the defaults.
    """

    style: str
    payoff_kind: str
    market: MarketParams
    s_max: tuple[float, ...] | None = None
    boundary_rules: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}")
        if self.payoff_kind not in PAYOFFS:
            raise ValueError(f"unknown payoff {self.payoff_kind!r}")
        dim = self.market.dim
        if PAYOFFS[self.payoff_kind] != dim:
            raise ValueError(f"payoff {self.payoff_kind!r} needs {PAYOFFS[self.payoff_kind]} assets, market has {dim}")
        if self.payoff_kind != "exchange" and self.market.K is None:
            raise ValueError(f"payoff {self.payoff_kind!r} needs a strike")
        s_max = self.s_max
        if s_max is None:
            if self.market.K is None:
                raise ValueError("s_max is required when there is no strike")
            s_max = (4.0 * self.market.K,) * dim
        s_max = tuple(float(s) for s in np.atleast_1d(s_max))
        if len(s_max) == 1 and dim == 2:
            s_max = s_max * 2
        if len(s_max) != dim or min(s_max) <= 0:
            raise ValueError("s_max needs one positive bound per asset")
        object.__setattr__(self, "s_max", s_max)
        rules = self.boundary_rules or _default_rules(self.style, self.payoff_kind, dim)
        rules = tuple(rules)
        if len(rules) != 2 * dim or any(r not in RULES for r in rules):
            raise ValueError(f"need {2 * dim} boundary rules from {RULES}")
        if dim == 2 and self.style == "american" and rules != ("none", "payoff", "none", "payoff"):
            raise ValueError("two-asset american problems take no condition at S_i = 0 and the payoff at S_i = max")
        if "dirichlet_formula" in rules and dim != 1:
            raise ValueError("dirichlet_formula is only defined for one-asset puts and calls")
        if "dirichlet_analytic" in rules and self.payoff_kind not in ("put", "call", "exchange", "max_call"):
            raise ValueError(f"no closed form available for {self.payoff_kind!r}")
        if all(r == "none" for r in rules) and dim == 1:
            raise ValueError("at least one face needs a boundary rule")
        object.__setattr__(self, "boundary_rules", rules)

    @property
    def dim(self) -> int:
        return self.market.dim

    @property
    def scales(self) -> np.ndarray:
        """Chain-rule factors (T, S_1max, ...) between financial and unit coordinates."""
        return np.array((self.market.T, *self.s_max))

    @property
    def faces(self) -> list[tuple[int, str]]:
        return [(i, side) for i in range(1, self.dim + 1) for side in ("lo", "hi")]

    def active_faces(self) -> list[int]:
        return [f for f, rule in enumerate(self.boundary_rules) if rule != "none"]


def _default_rules(style, payoff_kind, dim):
    if dim == 1:
        return ("dirichlet_formula", "dirichlet_formula")
    if style == "american":
        return ("none", "payoff", "none", "payoff")
    return ("dirichlet_analytic",) * 4


# -- payoff and scaling -------------------------------------------------------

def payoff(problem: PricingProblem, x):
    """Exercise value H at financial spot(s) ``x`` of shape (m,) or (N, m)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != problem.dim:
        raise ValueError(f"payoff {problem.payoff_kind!r} takes {problem.dim} spot(s)")
    K = problem.market.K
    kind = problem.payoff_kind
    s1 = x[..., 0]
    if kind == "put":
        h = K - s1
    elif kind == "call":
        h = s1 - K
    else:
        s2 = x[..., 1]
        if kind == "exchange":
            h = s1 - s2
        elif kind == "max_call":
            h = np.maximum(s1, s2) - K
        elif kind == "spread":
            h = s1 - s2 - K
        else:
            h = K - 0.5 * (s1 + s2)
    h = np.maximum(h, 0.0)
    return float(h) if h.ndim == 0 else h


def scale_point(problem: PricingProblem, y):
    """Financial ``(t, S_1, ...)`` to unit-cube coordinates."""
    y = np.asarray(y, dtype=float)
    sc = problem.scales
    if y.shape[-1] != len(sc):
        raise ValueError("point has the wrong number of coordinates")
    if np.any(y < 0) or np.any(y > sc):
        raise ValueError("point outside the computational domain")
    return y / sc


def unscale_point(problem: PricingProblem, y):
    """Unit-cube coordinates back to financial ``(t, S_1, ...)``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != problem.dim + 1:
        raise ValueError("point has the wrong number of coordinates")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("point outside the unit domain")
    return y * problem.scales


# -- operators ------------------------------------------------------------------

def operator_coefficients(problem: PricingProblem, y) -> np.ndarray:
    """Coefficients c with L(v) = sum_s c[s] * stream[s] at unit points ``y`` (N, d).

    Stream order: value, d/dtau, d/dx_1..d/dx_m, then the second-derivative
    pairs of :func:`pinnprice.net.spatial_pairs`. Each entry is one term of
    the Black-Scholes operator, so the termwise-absolute operator is
    ``sum_s |c[s] * stream[s]|``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    mk = problem.market
    m = problem.dim
    pairs = spatial_pairs(m)
    coef = np.empty((2 + m + len(pairs), y.shape[0]))
    coef[0] = -mk.r
    coef[1] = 1.0 / mk.T
    for i in range(1, m + 1):
        coef[1 + i] = (mk.r - mk.delta[i - 1]) * y[:, i]
    for p, (i, j) in enumerate(pairs):
        if i == j:
            coef[2 + m + p] = 0.5 * mk.sigma[i - 1] ** 2 * y[:, i] ** 2
        else:
            coef[2 + m + p] = mk.rho * mk.sigma[i - 1] * mk.sigma[j - 1] * y[:, i] * y[:, j]
    return coef


def jet_streams(jet: Jet) -> np.ndarray:
    """Stack a (batched) :class:`Jet` into the stream layout of the coefficients."""
    value = np.atleast_1d(jet.value)
    grad_x = np.asarray(jet.grad_x).reshape(value.shape[0], -1)
    m = grad_x.shape[1]
    hess = np.asarray(jet.hess_xx).reshape(value.shape[0], m, m)
    rows = [value, np.atleast_1d(jet.grad_t)] + [grad_x[:, i] for i in range(m)]
    rows += [hess[:, i - 1, j - 1] for i, j in spatial_pairs(m)]
    return np.array(rows)


def _squeeze(out, single):
    return float(out[0]) if single else out


def interior_residual(problem: PricingProblem, jet: Jet, y):
    """L(v) = dv/dt + A v - r v (B v in 2D) in financial units."""
    single = np.ndim(jet.value) == 0
    streams = jet_streams(jet)
    if streams.shape[0] != 2 + problem.dim + len(spatial_pairs(problem.dim)):
        raise ValueError("jet dimension does not match the problem")
    return _squeeze((operator_coefficients(problem, y) * streams).sum(axis=0), single)


def residual_termwise_abs(problem: PricingProblem, jet: Jet, y):
    """Sum of the absolute values of every term of L(v); bounds |L(v)| from above."""
    single = np.ndim(jet.value) == 0
    streams = jet_streams(jet)
    return _squeeze(np.abs(operator_coefficients(problem, y) * streams).sum(axis=0), single)


def lcp_residual(problem: PricingProblem, jet: Jet, y, payoff_at_y):
    """max(H - v, L(v)), which vanishes exactly on solutions of the complementarity problem."""
    if problem.style != "american":
        raise ValueError("lcp_residual is only defined for american problems")
    res = interior_residual(problem, jet, y)
    return np.maximum(np.asarray(payoff_at_y) - jet.value, res)


# -- boundary targets ------------------------------------------------------------

def _analytic_price(problem, t, x):
    mk = problem.market
    kind = problem.payoff_kind
    if kind in ("put", "call"):
        return closed_form.bs_european(t, x[:, 0], mk, kind)
    if kind == "exchange":
        return closed_form.margrabe(t, x[:, 0], x[:, 1], mk)
    return closed_form.max_call(t, x[:, 0], x[:, 1], mk)


def _formula_value(problem, t, face_id, s_face):
    """1D conditions: call (0, S_max - K e^{-r tau}); put (K e^{-r tau}, 0)."""
    mk = problem.market
    disc = mk.K * np.exp(-mk.r * (mk.T - t))
    lo = face_id == 0
    if problem.payoff_kind == "call":
        return np.where(lo, 0.0, s_face - disc)
    return np.where(lo, disc, 0.0)


def boundary_values(problem: PricingProblem, y, face_ids) -> np.ndarray:
    """Targets at unit points ``y`` lying on the faces ``face_ids`` (TERMINAL for t = T).

    Faces with rule ``none`` yield NaN. For american one-asset problems the
    formula targets are floored at the payoff so the target never violates the
    early-exercise constraint (at S = 0 the put target becomes K).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    face_ids = np.broadcast_to(np.asarray(face_ids), (y.shape[0],))
    fin = y * problem.scales
    t, x = fin[:, 0], fin[:, 1:]
    h = np.atleast_1d(payoff(problem, x))
    out = np.full(y.shape[0], np.nan)
    term = face_ids == TERMINAL
    out[term] = h[term]
    for f, rule in enumerate(problem.boundary_rules):
        sel = face_ids == f
        if not sel.any() or rule == "none":
            continue
        if rule == "payoff":
            val = h[sel]
        elif rule == "dirichlet_analytic":
            val = _analytic_price(problem, t[sel], x[sel])
        else:
            val = _formula_value(problem, t[sel], f, x[sel, 0])
            if problem.style == "american":
                val = np.maximum(val, h[sel])
        out[sel] = val
    bad = (face_ids < TERMINAL) | (face_ids >= 2 * problem.dim)
    if bad.any():
        raise ValueError("unknown face id")
    return out


def face_of_point(problem: PricingProblem, y) -> int:
    """Face id of a unit point (terminal slice first); raises if not on the boundary."""
    y = np.asarray(y, dtype=float)
    if y[0] == 1.0:
        return TERMINAL
    for i in range(1, problem.dim + 1):
        if y[i] == 0.0:
            return 2 * (i - 1)
        if y[i] == 1.0:
            return 2 * (i - 1) + 1
    raise ValueError(f"point {y} is not on a boundary face")


def boundary_target(problem: PricingProblem, y):
    """Target at one unit point on a face or the terminal slice; None for rule ``none``."""
    f = face_of_point(problem, y)
    val = boundary_values(problem, y, f)[0]
    return None if np.isnan(val) else float(val)
