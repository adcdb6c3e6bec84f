"""Finite-difference reference solver for american options.

Crank-Nicolson in time-to-maturity with a Rannacher start (implicit Euler
half-steps), central differences in space, and projected SOR for the
complementarity problem at every time level. Works for one and two assets on
the uniform grid ``S_j = j * S_max / (n_space - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from pinnprice import kernels
from pinnprice import problems as pb


class PSORError(RuntimeError):
    pass


@dataclass
class PSORConfig:
    omega: float = 1.2
    tol: float = 1e-8
    max_sweeps: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.omega < 2.0:
            raise ValueError("omega must lie in (0, 2)")


@dataclass
class GridSurface:
    """Prices on a tensor grid: ``values[i_t, i_1, ...]`` at ``(t[i_t], axes[0][i_1], ...)``."""

    t: np.ndarray
    axes: list[np.ndarray]
    values: np.ndarray
    problem: pb.PricingProblem | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.t), *(len(a) for a in self.axes))
        if self.values.shape != shape:
            raise ValueError(f"values have shape {self.values.shape}, axes imply {shape}")

    @property
    def dim(self) -> int:
        return len(self.axes)

    def nodes(self) -> np.ndarray:
        """All grid nodes as financial points (N, 1 + dim), in ``values.ravel()`` order."""
        mesh = np.meshgrid(self.t, *self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def same_axes(self, other: "GridSurface") -> bool:
        return (len(self.axes) == len(other.axes) and np.array_equal(self.t, other.t)
                and all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes)))

    def interpolate(self, t, *spots, method="cubic"):
        """Interpolated price at financial coordinates (scalar or arrays).

        Linear in time between the two neighbouring slices, ``method`` in space.
        """
        from scipy.interpolate import RegularGridInterpolator

        arrs = np.broadcast_arrays(np.asarray(t, dtype=float), *(np.asarray(s, dtype=float) for s in spots))
        shape = arrs[0].shape
        tq = arrs[0].ravel()
        xq = np.stack([a.ravel() for a in arrs[1:]], axis=1)
        i = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
        w = (tq - self.t[i]) / (self.t[i + 1] - self.t[i])
        out = np.empty(len(tq))
        for k in np.unique(i):
            sel = i == k
            lo = RegularGridInterpolator(tuple(self.axes), self.values[k], method=method)(xq[sel])
            hi = RegularGridInterpolator(tuple(self.axes), self.values[k + 1], method=method)(xq[sel])
            out[sel] = (1.0 - w[sel]) * lo + w[sel] * hi
        out = out.reshape(shape)
        return float(out) if out.ndim == 0 else out

    def to_csv(self, path) -> None:
        names = ["t"] + [f"S{i + 1}" for i in range(self.dim)]
        with open(path, "w") as fh:
            for name, axis in zip(names, [self.t, *self.axes]):
                fh.write(f"# axis {name}: " + ",".join(f"{v:.17g}" for v in axis) + "\n")
            fh.write(",".join(names + ["value"]) + "\n")
            for node, val in zip(self.nodes(), self.values.ravel()):
                fh.write(",".join(f"{v:.17g}" for v in (*node, val)) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GridSurface":
        axes = []
        with open(path) as fh:
            for line in fh:
                if not line.startswith("# axis"):
                    break
                axes.append(np.array([float(v) for v in line.split(":", 1)[1].split(",")]))
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        shape = tuple(len(a) for a in axes)
        return cls(axes[0], axes[1:], data[:, -1].reshape(shape))


def _operator(problem: pb.PricingProblem, grids) -> sp.csr_matrix:
    """Discrete L v = A v - r v (without d/dt) on all nodes, row-major node order."""
    mk = problem.market
    m = problem.dim
    n = [len(g) for g in grids]
    h = [g[1] - g[0] for g in grids]
    idx = np.arange(int(np.prod(n))).reshape(n)
    mesh = np.meshgrid(*grids, indexing="ij")
    rows, cols, vals = [], [], []

    def add(coef, shift):
        """Couple every node to the neighbour at offset ``shift`` with weight ``coef``."""
        valid = np.ones(n, dtype=bool)
        for k, s in enumerate(shift):
            if s > 0:
                valid_k = np.arange(n[k]) < n[k] - s
            elif s < 0:
                valid_k = np.arange(n[k]) >= -s
            else:
                continue
            shape = [1] * m
            shape[k] = n[k]
            valid &= valid_k.reshape(shape)
        c = np.broadcast_to(coef, n)
        keep = valid & (c != 0)
        src = idx[keep]
        coords = np.nonzero(keep)
        dst_coords = [coords[k] + shift[k] for k in range(m)]
        rows.append(src)
        cols.append(idx[tuple(dst_coords)])
        vals.append(c[keep])

    zero = (0,) * m
    add(np.full(n, -mk.r), zero)
    for k in range(m):
        S = mesh[k]
        diff = 0.5 * mk.sigma[k] ** 2 * S ** 2 / h[k] ** 2
        conv = (mk.r - mk.delta[k]) * S / (2.0 * h[k])
        e = [0] * m
        e[k] = 1
        add(-2.0 * diff, zero)
        add(diff + conv, tuple(e))
        e[k] = -1
        add(diff - conv, tuple(e))
    if m == 2:
        cross = mk.rho * mk.sigma[0] * mk.sigma[1] * mesh[0] * mesh[1] / (4.0 * h[0] * h[1])
        add(cross, (1, 1))
        add(cross, (-1, -1))
        add(-cross, (1, -1))
        add(-cross, (-1, 1))
    N = int(np.prod(n))
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return L.tocsr()


def _dirichlet_nodes(problem: pb.PricingProblem, grids):
    """Boolean mask of nodes whose value is prescribed, and their face ids."""
    n = [len(g) for g in grids]
    face = np.full(n, -2)
    for f, rule in enumerate(problem.boundary_rules):
        if rule == "none":
            continue
        k, hi = divmod(f, 2)
        sel = [slice(None)] * len(n)
        sel[k] = n[k] - 1 if hi else 0
        face[tuple(sel)] = np.where(face[tuple(sel)] == -2, f, face[tuple(sel)])
    if any(rule == "none" and f % 2 == 1 for f, rule in enumerate(problem.boundary_rules)):
        raise ValueError("fd solver needs a condition on every S = S_max face")
    face = face.ravel()
    return face >= 0, face


def fd_american(problem: pb.PricingProblem, n_time: int = 75, n_space: int = 101,
                psor: PSORConfig | None = None, rannacher_steps: int = 4,
                american: bool = True) -> GridSurface:
    """Solve the pricing LCP backward from maturity; ``values[0]`` is t = 0.

    ``american=False`` skips the projection (plain Crank-Nicolson european
    solve, used for cross-checks).
    """
    if american and problem.style != "american":
        raise ValueError("fd_american needs an american problem")
    if problem.dim not in (1, 2):
        raise ValueError("fd solver supports one or two assets")
    if n_time < 1 or n_space < 3:
        raise ValueError("need n_time >= 1 and n_space >= 3")
    psor = psor or PSORConfig()
    mk = problem.market
    grids = [np.linspace(0.0, s, n_space) for s in problem.s_max]
    mesh = np.meshgrid(*grids, indexing="ij")
    spots = np.stack([g.ravel() for g in mesh], axis=1)
    H = np.atleast_1d(pb.payoff(problem, spots))
    fixed, face = _dirichlet_nodes(problem, grids)
    N = len(H)
    L = _operator(problem, grids)
    # prescribed rows: identity
    keep = sp.diags((~fixed).astype(float))
    L = (keep @ L).tocsr()
    I = sp.identity(N, format="csr")

    def system(theta, dt):
        A = (I - theta * dt * L).tocsr()
        B = (I + (1.0 - theta) * dt * L).tocsr()
        A.sort_indices()
        return (A.indptr.astype(np.int32), A.indices.astype(np.int32), A.data.astype(np.float64), A), B

    dt = mk.T / n_time
    half = min(rannacher_steps, 2 * n_time)
    steps = [(1.0, 0.5 * dt)] * half + [(0.5, dt)] * (n_time - half // 2)
    systems = {}
    lower = np.where(fixed, -np.inf, H) if american else np.full(N, -np.inf)
    V = H.copy()
    levels = [V.copy()]
    tau = 0.0
    worst = 0.0
    total_sweeps = 0
    for i, (theta, step_dt) in enumerate(steps):
        key = (theta, step_dt)
        if key not in systems:
            systems[key] = system(theta, step_dt)
        (indptr, indices, data, A), B = systems[key]
        tau += step_dt
        b = B @ V
        t_now = mk.T - tau
        y_fixed = np.column_stack([np.full(fixed.sum(), t_now / mk.T), spots[fixed] / problem.s_max])
        b[fixed] = pb.boundary_values(problem, y_fixed, face[fixed])
        x = np.maximum(V, lower)
        x[fixed] = b[fixed]
        sweeps, change = kernels.psor_csr(indptr, indices, data, b, lower, x, psor.omega, psor.tol,
                                          psor.max_sweeps)
        total_sweeps += sweeps
        resid = _complementarity_residual(A, x, b, lower, fixed)
        worst = max(worst, resid)
        if sweeps >= psor.max_sweeps and change >= psor.tol:
            raise PSORError(f"PSOR did not converge at tau={tau:.6g}: last change {change:.3g}, "
                            f"complementarity residual {resid:.3g}")
        V = x
        # half-steps only land on the output grid every second step
        if theta == 0.5 or (i + 1) % 2 == 0:
            levels.append(V.copy())
    values = np.array(levels[::-1]).reshape(len(levels), *[len(g) for g in grids])
    t = np.linspace(0.0, mk.T, n_time + 1)
    return GridSurface(t, grids, values, problem,
                       info={"max_complementarity_residual": worst, "psor_sweeps": total_sweeps})


def _complementarity_residual(A, x, b, lower, fixed):
    """max over free rows of |min(x - lower, (A x - b) / diag)| (plain residual where unconstrained)."""
    r = (A @ x - b) / A.diagonal()
    free = ~fixed
    gap = x - lower
    res = np.where(np.isfinite(lower), np.minimum(gap, r), r)
    return float(np.max(np.abs(res[free]))) if free.any() else 0.0
