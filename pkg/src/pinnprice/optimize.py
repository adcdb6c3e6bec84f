"""Full-batch L-BFGS with a strong-Wolfe line search."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    memory: int = 10
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-8
    loss_tolerance: float = 1e-12
    plateau_window: int = 20
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search_steps: int = 25
    restart_cycle: int = 50

    def __post_init__(self):
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1 or self.restart_cycle < 1 or self.max_line_search_steps < 1:
            raise ValueError("memory, restart_cycle and max_line_search_steps must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class IterationRecord:
    iteration: int
    loss: float
    grad_norm: float
    lam: float | None
    seconds: float


@dataclass
class TrainHistory:
    records: list[IterationRecord] = field(default_factory=list)
    reason: str = ""
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    n_evals: int = 0
    n_restarts: int = 0

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def log_lines(self) -> list[str]:
        return [f"{r.iteration}\t{r.loss!r}\t{r.grad_norm!r}\t{'' if r.lam is None else repr(r.lam)}\t{r.seconds:.6f}"
                for r in self.records]


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, da, b, fb, db, lo, hi):
    """Minimizer of the cubic interpolating (a, fa, da), (b, fb, db), clamped to [lo, hi]."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad >= 0 and np.isfinite(rad):
        d2 = np.sign(b - a) * np.sqrt(rad)
        denom = db - da + 2.0 * d2
        if denom != 0:
            x = b - (b - a) * (db + d2 - d1) / denom
            if np.isfinite(x):
                return min(max(x, lo), hi)
    return 0.5 * (lo + hi)


def strong_wolfe(fun, x, f0, g0, d, alpha0, c1=1e-4, c2=0.9, max_steps=25):
    """Step length satisfying the strong Wolfe conditions along ``d``.

    Returns ``(alpha, f, g, evals)``; raises :class:`LineSearchError` after
    ``max_steps`` evaluations. Non-finite trial values shrink the step by half.
    """
    dphi0 = float(g0 @ d)
    if not dphi0 < 0:
        raise LineSearchError("not a descent direction")
    evals = 0

    def phi(a):
        nonlocal evals
        evals += 1
        f, g = fun(x + a * d)
        return f, g, (float(g @ d) if np.isfinite(f) else np.nan)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < max_steps:
            left, right = min(lo, hi), max(lo, hi)
            width = right - left
            if width <= 1e-16 * max(1.0, right):
                break
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi, left + 0.1 * width, right - 0.1 * width)
            else:
                a = 0.5 * (lo + hi)
            f, g, da = phi(a)
            if not np.isfinite(f) or f > f0 + c1 * a * dphi0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, da
            else:
                if abs(da) <= -c2 * dphi0:
                    return a, f, g
                if da * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, da
        raise LineSearchError("zoom did not find a strong-Wolfe point")

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    first = True
    while evals < max_steps:
        f, g, da = phi(a)
        if not np.isfinite(f):
            a = a_prev + 0.5 * (a - a_prev)
            continue
        if f > f0 + c1 * a * dphi0 or (not first and f >= f_prev):
            a, f, g = zoom(a_prev, f_prev, d_prev, a, f, da)
            return a, f, g, evals
        if abs(da) <= -c2 * dphi0:
            return a, f, g, evals
        if da >= 0:
            a, f, g = zoom(a, f, da, a_prev, f_prev, d_prev)
            return a, f, g, evals
        a_next = _cubic_min(a_prev, f_prev, d_prev, a, f, da, a + 0.01 * (a - a_prev), 10.0 * a)
        if a_next <= a:
            a_next = 2.0 * a
        a_prev, f_prev, d_prev = a, f, da
        a = a_next
        first = False
    raise LineSearchError("no acceptable step within the evaluation budget")


def _two_loop(g, pairs, gamma):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    q *= gamma
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(objective: Callable, theta0, cfg: OptimizerConfig = OptimizerConfig(), *,
             on_restart: Callable | None = None, lam_of: Callable | None = None,
             snapshot_stride: int = 0, callback: Callable | None = None):
    """Minimize ``objective(theta) -> (f, grad)`` with L-BFGS.

    ``on_restart(theta)`` is called at iteration 0 and every ``restart_cycle``
    iterations; if it returns True the objective is considered changed and the
    curvature memory is cleared. ``lam_of()`` supplies the loss weight logged per
    iteration. With ``snapshot_stride > 0`` parameter copies are kept in the
    history every that many iterations (and at the end).

    Returns ``(theta, history)``.
    """
    start = time.perf_counter()
    x = np.array(theta0, dtype=np.float64, copy=True)
    hist = TrainHistory()

    def fun(z):
        hist.n_evals += 1
        return objective(z)

    def lam():
        return lam_of() if lam_of is not None else None

    def record(k, f, g):
        hist.records.append(IterationRecord(k, float(f), float(np.linalg.norm(g)), lam(),
                                            time.perf_counter() - start))
        if snapshot_stride and k % snapshot_stride == 0:
            hist.snapshots.append((k, x.copy()))
        if callback is not None:
            callback(k, x, f, g)

    if on_restart is not None:
        on_restart(x)
    f, g = fun(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    record(0, f, g)
    pairs: deque = deque(maxlen=cfg.memory)
    window = deque([f], maxlen=cfg.plateau_window + 1)
    k = 0
    reason = "max_iterations"
    while True:
        if np.max(np.abs(g)) <= cfg.gradient_tolerance:
            reason = "gradient_tolerance"
            break
        if k >= cfg.max_iterations:
            reason = "max_iterations"
            break
        if k > 0 and k % cfg.restart_cycle == 0 and on_restart is not None and on_restart(x):
            pairs.clear()
            f, g = fun(x)
            window = deque([f], maxlen=cfg.plateau_window + 1)
            hist.n_restarts += 1
            if np.max(np.abs(g)) <= cfg.gradient_tolerance:
                reason = "gradient_tolerance"
                break
        step = None
        for attempt in (0, 1):
            if pairs and attempt == 0:
                s, y, _ = pairs[-1]
                d = _two_loop(g, list(pairs), (s @ y) / (y @ y))
                alpha0 = 1.0
            else:
                d = -g
                alpha0 = min(1.0, 1.0 / np.sum(np.abs(g)))
            if not g @ d < 0:
                pairs.clear()
                continue
            try:
                step = strong_wolfe(fun, x, f, g, d, alpha0, cfg.wolfe_c1, cfg.wolfe_c2,
                                    cfg.max_line_search_steps)
                break
            except LineSearchError:
                pairs.clear()
                hist.n_restarts += 1
        if step is None:
            reason = "line_search_failed"
            break
        alpha, f_new, g_new, _ = step
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        x = x + s
        f, g = f_new, g_new
        if sy > 1e-12 * float(y @ y):
            pairs.append((s, y, 1.0 / sy))
        k += 1
        record(k, f, g)
        window.append(f)
        if len(window) == window.maxlen:
            old = window[0]
            if old - f <= cfg.loss_tolerance * max(abs(old), 1e-300):
                reason = "loss_plateau"
                break
    hist.reason = reason
    if snapshot_stride and (not hist.snapshots or hist.snapshots[-1][0] != k):
        hist.snapshots.append((k, x.copy()))
    return x, hist
