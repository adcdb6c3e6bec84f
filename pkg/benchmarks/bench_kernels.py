"""Compare the compiled and NumPy kernel backends.

Run with ``python benchmarks/bench_kernels.py``. Times the tanh jet passes at
training size, one full loss evaluation (value and gradient) on a 2D problem,
and one PSOR solve from the finite-difference reference. Each kernel result is
checked against the other backend before timing.
"""

import argparse
import time

import numpy as np
import scipy.sparse as sp

from pinnprice import _pykernels

try:
    from pinnprice import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def jet_case(rng, n_points=1000, width=20):
    ns = 1 + 3 + 3
    Z = rng.standard_normal((ns, n_points, width))
    pairs = np.array([[2, 2], [3, 3], [2, 3]])
    GA = rng.standard_normal((ns, n_points, width))
    return Z, pairs, GA


def psor_case(n=101):
    from pinnprice.problems import MarketParams, PricingProblem
    from pinnprice.reference.fd import _operator

    mk = MarketParams(0.04, (0.25, 0.25), 0.01, 0.5, K=15.0, rho=0.1)
    prob = PricingProblem("american", "max_call", mk, s_max=60.0)
    grids = [np.linspace(0, 60, n)] * 2
    A = (sp.identity(n * n) - 0.5 * (0.5 / 75) * _operator(prob, grids)).tocsr()
    A.sort_indices()
    x = np.linspace(0, 1, n * n)
    b = A @ x
    lower = np.full(n * n, -np.inf)
    lower[::7] = 0.2
    return A.indptr.astype(np.int32), A.indices.astype(np.int32), A.data, b, lower


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not available; timing the NumPy fallback only")

    rng = np.random.default_rng(0)
    Z, pairs, GA = jet_case(rng)
    ref_A, h, s = _pykernels.tanh_jet_forward(Z, 3, pairs)
    ref_G = _pykernels.tanh_jet_backward(GA, Z, h, s, 3, pairs)
    indptr, indices, data, b, lower = psor_case()
    x_ref = np.zeros_like(b)
    _pykernels.psor_csr(indptr, indices, data, b, lower, x_ref, 1.2, 1e-10, 10_000)

    rows = []
    for name, mod in backends.items():
        A, h2, s2 = mod.tanh_jet_forward(Z, 3, pairs)
        assert np.allclose(A, ref_A, atol=1e-13)
        assert np.allclose(mod.tanh_jet_backward(GA, Z, h2, s2, 3, pairs), ref_G, atol=1e-12)
        x = np.zeros_like(b)
        mod.psor_csr(indptr, indices, data, b, lower, x, 1.2, 1e-10, 10_000)
        assert np.allclose(x, x_ref, atol=1e-12)

        fwd = best_of(lambda: mod.tanh_jet_forward(Z, 3, pairs), args.repeat)
        bwd = best_of(lambda: mod.tanh_jet_backward(GA, Z, h2, s2, 3, pairs), args.repeat)

        def solve():
            mod.psor_csr(indptr, indices, data, b, lower, np.zeros_like(b), 1.2, 1e-10, 10_000)

        psor = best_of(solve, max(1, args.repeat // 10))
        rows.append((name, fwd, bwd, psor, loss_eval_time(mod, args.repeat)))

    print(f"{'backend':<8} {'jet fwd':>10} {'jet bwd':>10} {'psor':>10} {'loss+grad':>10}")
    for name, *vals in rows:
        print(f"{name:<8} " + " ".join(f"{v * 1e3:>8.3f}ms" for v in vals))
    if len(rows) == 2:
        py, cy = rows[0][1:], rows[1][1:]
        print("speed-up " + " ".join(f"{p / c:>9.2f}x" for p, c in zip(py, cy)))


def loss_eval_time(mod, repeat):
    """Full 2D loss value + gradient with ``mod`` patched in as the backend."""
    from pinnprice import kernels
    from pinnprice.loss import CollocationLoss, LossConfig
    from pinnprice.net import Architecture, init_network
    from pinnprice.problems import MarketParams, PricingProblem
    from pinnprice.sampling import collocation_set

    saved = (kernels.tanh_jet_forward, kernels.tanh_jet_backward)
    kernels.tanh_jet_forward, kernels.tanh_jet_backward = mod.tanh_jet_forward, mod.tanh_jet_backward
    try:
        mk = MarketParams(0.05, (0.25, 0.25), 0.1, 1.0, rho=0.1)
        prob = PricingProblem("european", "exchange", mk, s_max=60.0)
        arch = Architecture(3)
        loss = CollocationLoss(prob, collocation_set(prob), LossConfig(), arch)
        theta = init_network(arch, 60.0, 0).flatten()
        return best_of(lambda: loss.value_and_grad(theta), repeat)
    finally:
        kernels.tanh_jet_forward, kernels.tanh_jet_backward = saved


if __name__ == "__main__":
    main()
