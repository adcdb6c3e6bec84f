"""Monte Carlo loss functionals over a fixed collocation set.

Three modes are supported:

``fixed_lambda``
    lambda * mean|R|^p + (1 - lambda) * (mean|v - G|^p + mean|v - H|^p), with R
    the PDE residual (european) or max(H - v, L(v)) (american).
``variance_normalization``
    interior residual sum divided by the sum of its termwise-absolute bound,
    plus the boundary/terminal misfit divided by the spread of v over the
    boundary points.
``optimal_lambda``
    the fixed-lambda form with lambda re-estimated from the current network
    (see :func:`optimal_lambda`); the estimate is held constant between calls
    to :meth:`CollocationLoss.refresh`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pinnprice.net import Architecture, NetworkParams, backward_streams, forward_streams
from pinnprice.problems import TERMINAL, PricingProblem, boundary_values, operator_coefficients, payoff
from pinnprice.sampling import CollocationSet

MODES = ("fixed_lambda", "variance_normalization", "optimal_lambda")
DENOMINATOR_FLOOR = 1e-30


@dataclass(frozen=True)
class LossConfig:
    mode: str = "fixed_lambda"
    lam: float = 0.5
    p: float = 2.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"loss mode must be one of {MODES}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        if not self.p >= 1.0:
            raise ValueError("p must be >= 1")


@dataclass
class LossBreakdown:
    total: float
    interior_term: float
    boundary_term: float
    terminal_term: float
    lambda_used: float | None
    degenerate: bool = False


def _pow(e, p):
    """|e|^p and its derivative p|e|^(p-1) sign(e)."""
    a = np.abs(e)
    if p == 2.0:
        return a * a, 2.0 * e
    return a ** p, p * a ** (p - 1.0) * np.sign(e)


class CollocationLoss:
    """Loss and exact parameter gradient for one problem on one point set."""

    def __init__(self, problem: PricingProblem, pts: CollocationSet, cfg: LossConfig, arch: Architecture):
        if arch.input_dim != problem.dim + 1:
            raise ValueError("network input dimension does not match the problem")
        if min(len(pts.interior), len(pts.boundary), len(pts.terminal)) == 0:
            raise ValueError("empty collocation set")
        self.problem, self.pts, self.cfg, self.arch = problem, pts, cfg, arch
        self.american = problem.style == "american"
        self.coef = operator_coefficients(problem, pts.interior)
        self.h_int = payoff(problem, pts.interior[:, 1:] * problem.scales[1:])
        self.y_bt = pts.boundary_union
        self.n_b = len(pts.boundary)
        self.target_bt = boundary_values(problem, self.y_bt, pts.boundary_union_faces)
        if np.isnan(self.target_bt).any():
            raise ValueError("collocation set has points on faces without a boundary rule")
        self.w_int, self.w_bt = _quadrature_weights(problem, pts)
        self.lam = cfg.lam
        self.n_evals = 0

    # -- shared pieces --------------------------------------------------------

    def _interior(self, theta, order_needed=True):
        tape = forward_streams(self.arch, theta, self.pts.interior, order=2)
        streams = tape.out
        terms = self.coef * streams
        L = terms.sum(axis=0)
        v = streams[0]
        obstacle = self.h_int - v
        if self.american:
            # ties go to the obstacle branch
            use_obstacle = obstacle >= L
            R = np.where(use_obstacle, obstacle, L)
        else:
            use_obstacle = np.zeros_like(L, dtype=bool)
            R = L
        return tape, terms, L, v, obstacle, use_obstacle, R

    def _boundary(self, theta):
        tape = forward_streams(self.arch, theta, self.y_bt, order=0)
        return tape, tape.out[0]

    def _residual_adjoint(self, w, use_obstacle):
        """Adjoint of sum(w * R) on the interior streams."""
        adj = self.coef * np.where(use_obstacle, 0.0, w)
        adj[0] -= np.where(use_obstacle, w, 0.0)
        return adj

    def _bound(self, terms, obstacle):
        """Termwise-absolute bound: max(|H - v|, sum|terms|) (american) or sum|terms|."""
        Labs = np.abs(terms).sum(axis=0)
        if not self.american:
            return Labs, np.zeros_like(Labs, dtype=bool)
        use_obs = np.abs(obstacle) >= Labs
        return np.where(use_obs, np.abs(obstacle), Labs), use_obs

    def _bound_adjoint(self, w, terms, obstacle, use_obs):
        """Adjoint of sum(w * bound) on the interior streams."""
        adj = self.coef * np.sign(terms) * np.where(use_obs, 0.0, w)
        adj[0] += np.where(use_obs, -np.sign(obstacle) * w, 0.0)
        return adj

    # -- modes ----------------------------------------------------------------

    def _fixed(self, theta, lam, grad=True, parts_grads=False):
        p = self.cfg.p
        tape_i, terms, L, v, obstacle, use_obs, R = self._interior(theta)
        tape_b, vb = self._boundary(theta)
        n_i, n_b, n_0 = len(R), self.n_b, len(vb) - self.n_b
        fr, dfr = _pow(R, p)
        fe, dfe = _pow(vb - self.target_bt, p)
        I = fr.mean()
        B = fe[:n_b].mean()
        T0 = fe[n_b:].mean()
        total = lam * I + (1.0 - lam) * (B + T0)
        out = LossBreakdown(float(total), float(I), float(B), float(T0), float(lam))
        if not grad:
            return out, None
        gi = backward_streams(self.arch, theta, tape_i, self._residual_adjoint(dfr / n_i, use_obs))
        wb = dfe.copy()
        wb[:n_b] /= n_b
        wb[n_b:] /= n_0
        gb = backward_streams(self.arch, theta, tape_b, wb[None, :])
        if parts_grads:
            return out, (gi, gb)
        return out, lam * gi + (1.0 - lam) * gb

    def _variance(self, theta, grad=True):
        p = self.cfg.p
        tape_i, terms, L, v, obstacle, use_obs, R = self._interior(theta)
        tape_b, vb = self._boundary(theta)
        n_b, n_0 = self.n_b, len(vb) - self.n_b
        fr, dfr = _pow(R, p)
        D, use_obs_d = self._bound(terms, obstacle)
        fd, dfd = _pow(D, p)
        num_i, den_i = fr.sum(), fd.sum()
        fe, dfe = _pow(vb - self.target_bt, p)
        Bm, Tm = fe[:n_b].mean(), fe[n_b:].mean()
        num_b = Bm + Tm
        spread = vb - vb.mean()
        fs, dfs = _pow(spread, p)
        den_b = fs.mean()
        degenerate = den_i < DENOMINATOR_FLOOR or den_b < DENOMINATOR_FLOOR
        if degenerate:
            total = fr.mean() + num_b
            out = LossBreakdown(float(total), float(fr.mean()), float(Bm), float(Tm), None, True)
        else:
            ratio_i = num_i / den_i
            out = LossBreakdown(float(ratio_i + num_b / den_b), float(ratio_i), float(Bm / den_b),
                                float(Tm / den_b), None)
        if not grad:
            return out, None
        wb = dfe.copy()
        wb[:n_b] /= n_b
        wb[n_b:] /= len(vb) - n_b
        if degenerate:
            adj_i = self._residual_adjoint(dfr / len(R), use_obs)
            adj_b = wb
        else:
            adj_i = (self._residual_adjoint(dfr, use_obs)
                     - ratio_i * self._bound_adjoint(dfd, terms, obstacle, use_obs_d)) / den_i
            n = len(vb)
            dden = (dfs - dfs.mean()) / n
            adj_b = (wb - (num_b / den_b) * dden) / den_b
        g = backward_streams(self.arch, theta, tape_i, adj_i)
        g += backward_streams(self.arch, theta, tape_b, adj_b[None, :])
        return out, g

    # -- public API -------------------------------------------------------------

    def evaluate(self, theta, grad=True):
        self.n_evals += 1
        if self.cfg.mode == "variance_normalization":
            return self._variance(theta, grad)
        return self._fixed(theta, self.lam, grad)

    def value_and_grad(self, theta):
        out, g = self.evaluate(theta, grad=True)
        return out.total, g

    def breakdown(self, theta) -> LossBreakdown:
        return self.evaluate(theta, grad=False)[0]

    def optimal_lambda(self, theta) -> float:
        p = self.cfg.p
        _, terms, _, _, obstacle, _, _ = self._interior(theta)
        D, _ = self._bound(terms, obstacle)
        _, vb = self._boundary(theta)
        num = self.w_bt @ _pow(vb, p)[0]
        den = self.w_int * _pow(D, p)[0].sum() + num
        if den == 0.0:
            return 0.5
        return float(num / den)

    def refresh(self, theta) -> bool:
        """Re-estimate lambda (optimal mode only). Returns True if the objective changed."""
        if self.cfg.mode != "optimal_lambda":
            return False
        self.lam = self.optimal_lambda(theta)
        return True

    def gradient_norms(self, theta) -> tuple[float, float]:
        """Euclidean norms of d(interior term)/dtheta and d(boundary + terminal terms)/dtheta."""
        _, (gi, gb) = self._fixed(theta, 0.5, grad=True, parts_grads=True)
        return float(np.linalg.norm(gi)), float(np.linalg.norm(gb))


def _quadrature_weights(problem: PricingProblem, pts: CollocationSet):
    """Monte Carlo weights turning point sums into integrals over the financial domain.

    Interior points share the volume T * prod(S_inf); points on a spatial face
    share that face's area, and terminal points share prod(S_inf).
    """
    T = problem.market.T
    vol = float(np.prod(problem.s_max))
    w_int = T * vol / len(pts.interior)
    faces = pts.boundary_union_faces
    w_bt = np.zeros(len(faces))
    for f in np.unique(faces):
        sel = faces == f
        area = vol if f == TERMINAL else T * vol / problem.s_max[f // 2]
        w_bt[sel] = area / sel.sum()
    return w_int, w_bt


def _loss(params: NetworkParams, problem, pts, cfg) -> CollocationLoss:
    return CollocationLoss(problem, pts, cfg, params.arch)


def weighted_loss(params: NetworkParams, problem: PricingProblem, pts: CollocationSet, cfg: LossConfig) -> LossBreakdown:
    if cfg.mode != "fixed_lambda":
        raise ValueError("weighted_loss needs mode='fixed_lambda'")
    return _loss(params, problem, pts, cfg).breakdown(params.flatten())


def variance_normalized_loss(params: NetworkParams, problem: PricingProblem, pts: CollocationSet,
                             cfg: LossConfig) -> LossBreakdown:
    if cfg.mode != "variance_normalization":
        raise ValueError("variance_normalized_loss needs mode='variance_normalization'")
    return _loss(params, problem, pts, cfg).breakdown(params.flatten())


def optimal_lambda(params: NetworkParams, problem: PricingProblem, pts: CollocationSet, p: float = 2.0) -> float:
    """Estimate of the optimal loss weight from the current network.

    int_dOmega |v|^p / (int_Omega max(|H - v|, L~(v))^p + int_dOmega |v|^p), with
    L~ the termwise-absolute operator (``|H - v|`` is dropped for european
    problems). Both integrals are taken over the financial domain (0, T) x
    (0, S_inf) and its boundary faces, estimated from the collocation points.
    """
    cfg = LossConfig("optimal_lambda", 0.5, p)
    return _loss(params, problem, pts, cfg).optimal_lambda(params.flatten())


def gradient_norms(params: NetworkParams, problem: PricingProblem, pts: CollocationSet,
                   cfg: LossConfig | None = None) -> tuple[float, float]:
    cfg = cfg or LossConfig()
    if cfg.mode != "fixed_lambda":
        raise ValueError("gradient_norms needs mode='fixed_lambda'")
    return _loss(params, problem, pts, cfg).gradient_norms(params.flatten())
