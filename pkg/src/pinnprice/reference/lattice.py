"""Cox-Ross-Rubinstein binomial tree (independent oracle for one-asset options)."""

import numpy as np


def binomial_american(problem, steps: int, S: float, american: bool = True) -> float:
    """Price at t = 0 and spot ``S`` by backward induction on a CRR tree.

    Continuous dividend yield enters through the risk-neutral up-probability.
    With ``american=False`` the exercise check is skipped (european tree).
    """
    if problem.dim != 1:
        raise ValueError("binomial tree handles one-asset problems only")
    steps = int(steps)
    if steps < 1:
        raise ValueError("need at least one step")
    mk = problem.market
    dt = mk.T / steps
    u = np.exp(mk.sigma[0] * np.sqrt(dt))
    d = 1.0 / u
    p = (np.exp((mk.r - mk.delta[0]) * dt) - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError(f"risk-neutral probability {p} outside (0, 1); use more steps")
    disc = np.exp(-mk.r * dt)
    K = mk.K
    sign = -1.0 if problem.payoff_kind == "put" else 1.0
    j = np.arange(steps + 1)
    spots = S * u ** (2 * j - steps)
    values = np.maximum(sign * (spots - K), 0.0)
    for n in range(steps - 1, -1, -1):
        values = disc * (p * values[1:] + (1.0 - p) * values[:-1])
        if american:
            spots = S * u ** (2 * np.arange(n + 1) - n)
            np.maximum(values, sign * (spots - K), out=values)
    return float(values[0])
