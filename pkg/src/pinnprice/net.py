"""Dense tanh network with exact input jets and parameter gradients.

The network maps scaled inputs ``y = (tau, x_1, ..., x_m)`` in the unit cube to
a price. Besides the value, the forward pass propagates first derivatives with
respect to every input and the second derivatives with respect to the spatial
inputs (including the cross term in 2D). The reverse pass differentiates any
linear combination of those quantities with respect to the parameters, which is
what residual losses need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pinnprice import kernels


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_layers: tuple[int, ...] = (20, 20, 20, 20)
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError("hidden_layers must be non-empty with widths >= 1")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, 1)

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(sizes[i + 1] * (sizes[i] + 1) for i in range(len(sizes) - 1))

    @property
    def spatial_dim(self) -> int:
        return self.input_dim - 1


@dataclass
class NetworkParams:
    """Per-layer weights (shape ``(out, in)``) and biases."""

    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        sizes = self.arch.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match architecture")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i} has shape {W.shape}/{b.shape}")

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    @classmethod
    def from_flat(cls, arch: Architecture, theta) -> "NetworkParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (arch.n_params,):
            raise ValueError(f"expected {arch.n_params} parameters, got {theta.shape}")
        ws, bs = _unflatten(arch, theta.copy())
        return cls(arch, ws, bs)


def _unflatten(arch: Architecture, theta: np.ndarray):
    """Views of ``theta`` as weight/bias arrays (no copy)."""
    sizes = arch.layer_sizes
    ws, bs, pos = [], [], 0
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        ws.append(theta[pos:pos + n_in * n_out].reshape(n_out, n_in))
        pos += n_in * n_out
        bs.append(theta[pos:pos + n_out])
        pos += n_out
    return ws, bs


@dataclass
class Jet:
    """Network value and input derivatives at one or more points.

    Derivatives are taken with respect to the scaled inputs. Arrays carry a
    leading batch axis when built from several points.
    """

    value: np.ndarray
    grad_t: np.ndarray
    grad_x: np.ndarray
    hess_xx: np.ndarray

    def __getitem__(self, idx) -> "Jet":
        return Jet(self.value[idx], self.grad_t[idx], self.grad_x[idx], self.hess_xx[idx])


# -- initialization ---------------------------------------------------------

def init_network(arch: Architecture, v_max: float = 1.0, seed: int = 0) -> NetworkParams:
    """Xavier-uniform weights, zero biases, last layer multiplied by ``v_max``."""
    if not v_max > 0 or not np.isfinite(v_max):
        raise ValueError(f"v_max must be positive, got {v_max}")
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    ws, bs = [], []
    for i in range(len(sizes) - 1):
        bound = np.sqrt(6.0 / (sizes[i] + sizes[i + 1]))
        ws.append(rng.uniform(-bound, bound, size=(sizes[i + 1], sizes[i])))
        bs.append(np.zeros(sizes[i + 1]))
    ws[-1] = ws[-1] * v_max
    return NetworkParams(arch, ws, bs)


# -- forward / reverse passes -------------------------------------------------

def spatial_pairs(spatial_dim: int) -> list[tuple[int, int]]:
    """Second-derivative pairs in input-coordinate indices (0 is time).

    1D: [(1, 1)]; 2D: [(1, 1), (2, 2), (1, 2)].
    """
    diag = [(i, i) for i in range(1, spatial_dim + 1)]
    cross = [(i, j) for i in range(1, spatial_dim + 1) for j in range(i + 1, spatial_dim + 1)]
    return diag + cross


@dataclass
class _Tape:
    order: int
    n_first: int
    pairs: np.ndarray
    y: np.ndarray
    acts: list = field(default_factory=list)   # inputs to layers 1..L (stream stacks)
    cache: list = field(default_factory=list)  # (Z, h, s) per hidden layer
    out: np.ndarray | None = None              # (ns, N)


def forward_streams(arch: Architecture, theta: np.ndarray, y: np.ndarray, order: int = 2) -> _Tape:
    """Run the network on a batch ``y`` of shape (N, input_dim).

    ``order=0`` propagates values only; ``order=2`` adds every first derivative
    and the spatial second derivatives. Result streams are in ``tape.out``.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != arch.input_dim:
        raise ValueError(f"expected points of shape (N, {arch.input_dim}), got {y.shape}")
    ws, bs = _unflatten(arch, theta)
    d = arch.input_dim
    if order == 0:
        n_first, pairs = 0, np.zeros((0, 2), dtype=np.int64)
    elif order == 2:
        n_first = d
        # kernels index streams: d/dy_c lives in stream 1 + c
        pairs = np.array(spatial_pairs(arch.spatial_dim), dtype=np.int64).reshape(-1, 2) + 1
    else:
        raise ValueError("order must be 0 or 2")
    ns = 1 + n_first + len(pairs)
    N = y.shape[0]
    tape = _Tape(order, n_first, pairs, y)

    W, b = ws[0], bs[0]
    Z = np.zeros((ns, N, W.shape[0]))
    Z[0] = y @ W.T + b
    for k in range(n_first):
        Z[1 + k] = W[:, k]
    for layer in range(1, len(ws)):
        A, h, s = kernels.tanh_jet_forward(Z, n_first, pairs)
        tape.cache.append((Z, h, s))
        tape.acts.append(A)
        W, b = ws[layer], bs[layer]
        Z = (A.reshape(ns * N, -1) @ W.T).reshape(ns, N, -1)
        Z[0] += b
    tape.out = Z[..., 0]
    return tape


def backward_streams(arch: Architecture, theta: np.ndarray, tape: _Tape, adjoint: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. ``theta`` of ``sum(adjoint * tape.out)``."""
    ws, _ = _unflatten(arch, theta)
    grad = np.zeros_like(theta)
    gws, gbs = _unflatten(arch, grad)
    ns, N = adjoint.shape
    G = np.ascontiguousarray(adjoint)[..., None]  # (ns, N, 1)
    n_layers = len(ws)
    for layer in range(n_layers - 1, 0, -1):
        A = tape.acts[layer - 1]
        width_in = A.shape[2]
        gws[layer][...] = G.reshape(ns * N, -1).T @ A.reshape(ns * N, width_in)
        gbs[layer][...] = G[0].sum(axis=0)
        GA = (G.reshape(ns * N, -1) @ ws[layer]).reshape(ns, N, width_in)
        Z, h, s = tape.cache[layer - 1]
        G = kernels.tanh_jet_backward(GA, Z, h, s, tape.n_first, tape.pairs)
    # first layer: inputs are y (value stream) and unit vectors (first-order streams)
    gws[0][...] = G[0].T @ tape.y
    for k in range(tape.n_first):
        gws[0][:, k] += G[1 + k].sum(axis=0)
    gbs[0][...] = G[0].sum(axis=0)
    return grad


def _jet_from_streams(arch: Architecture, out: np.ndarray) -> Jet:
    m = arch.spatial_dim
    N = out.shape[1]
    hess = np.zeros((N, m, m))
    for p, (i, j) in enumerate(spatial_pairs(m)):
        hess[:, i - 1, j - 1] = out[1 + arch.input_dim + p]
        hess[:, j - 1, i - 1] = out[1 + arch.input_dim + p]
    return Jet(out[0].copy(), out[1].copy(), out[2:1 + arch.input_dim].T.copy(), hess)


def _as_batch(arch: Architecture, y):
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[-1] != arch.input_dim:
        raise ValueError(f"input has {y.shape[-1]} components, network expects {arch.input_dim}")
    return y, single


def forward(params: NetworkParams, y) -> np.ndarray | float:
    """Network value at one point (returns float) or a batch (returns array)."""
    yb, single = _as_batch(params.arch, y)
    out = forward_streams(params.arch, params.flatten(), yb, order=0).out[0]
    return float(out[0]) if single else out


def input_jet(params: NetworkParams, y) -> Jet:
    """Exact value, gradient and spatial Hessian at ``y``."""
    yb, single = _as_batch(params.arch, y)
    tape = forward_streams(params.arch, params.flatten(), yb, order=2)
    jet = _jet_from_streams(params.arch, tape.out)
    return jet[0] if single else jet


def objective_gradient(params: NetworkParams, objective) -> np.ndarray:
    """Parameter gradient of ``objective`` (anything with ``value_and_grad(theta)``)."""
    value, grad = objective.value_and_grad(params.flatten())
    if not np.isfinite(value):
        raise FloatingPointError(f"objective is not finite ({value})")
    return grad


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(params: NetworkParams, path) -> None:
    arch = params.arch
    doc = {
        "input_dim": arch.input_dim,
        "hidden_layers": list(arch.hidden_layers),
        "activation": arch.activation,
        "theta": [float(v) for v in params.flatten()],
    }
    # repr() of a float round-trips exactly (shortest repr, <= 17 digits)
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> NetworkParams:
    doc = json.loads(Path(path).read_text())
    arch = Architecture(doc["input_dim"], tuple(doc["hidden_layers"]), doc.get("activation", "tanh"))
    return NetworkParams.from_flat(arch, np.array(doc["theta"], dtype=np.float64))
