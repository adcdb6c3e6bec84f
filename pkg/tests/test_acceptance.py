"""Acceptance criteria, run at their stated tolerances.

Each check records a PASS/FAIL line through :func:`record`; the terminal
summary (see ``conftest.py``) prints one verdict per criterion. Checks that
cannot be met with the stated parameters are kept at the stated tolerance and
marked ``xfail`` so they still run and still report FAIL.

The training runs take roughly an hour on one core in total.
"""

import time

import numpy as np
import pytest
from conftest import quad_bvn, quad_exchange, quad_max_call

from pinnprice import cli
from pinnprice.cli import (domain_sweep, initial_gradient_norms, load_shipped_config, relative_l2_error,
                           run_experiment)
from pinnprice.loss import CollocationLoss, LossConfig
from pinnprice.net import Architecture, forward, init_network, input_jet
from pinnprice.problems import MarketParams, PricingProblem, payoff
from pinnprice.reference import (GridSurface, binomial_american, bivar_norm_cdf, bs_european, fd_american, margrabe,
                                 max_call, norm_cdf)
from pinnprice.sampling import collocation_set

RESULTS: dict[int, list[tuple[str, bool, str]]] = {}
TITLES = {
    1: "1D European put",
    2: "2D European exchange option",
    3: "weight-scaling ablation on the 2D max-call",
    4: "1D American put",
    5: "2D American max-call",
    6: "oracle suite",
    7: "property suite",
}
SWEEP = (10.0, 60.0, 120.0, 180.0, 240.0, 300.0, 360.0)


def record(criterion: int, check: str, passed: bool, detail: str = "") -> bool:
    passed = bool(passed)
    RESULTS.setdefault(criterion, []).append((check, passed, detail))
    print(f"criterion {criterion} [{'PASS' if passed else 'FAIL'}] {check}: {detail}")
    return passed


def summary_lines() -> list[str]:
    lines = []
    for c in sorted(TITLES):
        checks = RESULTS.get(c, [])
        if not checks:
            lines.append(f"criterion {c} ({TITLES[c]}): NOT RUN")
            continue
        ok = all(p for _, p, _ in checks)
        failed = [name for name, p, _ in checks if not p]
        tail = f"; failed: {', '.join(failed)}" if failed else ""
        lines.append(f"criterion {c} ({TITLES[c]}): {'PASS' if ok else 'FAIL'} "
                     f"({sum(p for _, p, _ in checks)}/{len(checks)} checks{tail})")
        lines += [f"    [{'PASS' if p else 'FAIL'}] {name}: {detail}" for name, p, detail in checks]
    return lines


# -- shared training runs ---------------------------------------------------------------

@pytest.fixture(scope="module")
def runs_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def put_run(runs_dir):
    return run_experiment(load_shipped_config("european_put"), runs_dir / "european_put")


@pytest.fixture(scope="module")
def exchange_run(runs_dir):
    return run_experiment(load_shipped_config("exchange"), runs_dir / "exchange")


@pytest.fixture(scope="module")
def sweep_scaled(runs_dir):
    return domain_sweep(load_shipped_config("max_call_domain"), SWEEP, "scaled", runs_dir / "sweep_scaled")


@pytest.fixture(scope="module")
def sweep_standard_240(runs_dir):
    return domain_sweep(load_shipped_config("max_call_domain"), [240.0], "standard", runs_dir / "sweep_standard")


@pytest.fixture(scope="module")
def gradient_table():
    base = load_shipped_config("max_call_domain")
    return {mode: [initial_gradient_norms(base, s, mode) for s in SWEEP] for mode in ("standard", "scaled")}


@pytest.fixture(scope="module")
def american_put_runs(runs_dir):
    return {mode: run_experiment(load_shipped_config(f"american_put_{mode}"), runs_dir / f"american_put_{mode}")
            for mode in ("optimal_lambda", "variance_normalization")}


@pytest.fixture(scope="module")
def american_max_call_run(runs_dir):
    return run_experiment(load_shipped_config("american_max_call"), runs_dir / "american_max_call")


# -- criterion 1 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c1_european_put(put_run):
    ok = record(1, "relative L2 error < 1e-3", put_run.error < 1e-3, f"{put_run.error:.3e}")
    ok &= record(1, "wall time <= 10 min", put_run.wall_time <= 600, f"{put_run.wall_time:.0f} s")
    assert ok


# -- criterion 2 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c2_exchange(exchange_run):
    ok = record(2, "relative L2 error vs Margrabe < 2e-3", exchange_run.error < 2e-3, f"{exchange_run.error:.3e}")
    ok &= record(2, "wall time <= 30 min", exchange_run.wall_time <= 1800, f"{exchange_run.wall_time:.0f} s")
    assert ok


# -- criterion 3 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c3_scaled_init_error_at_every_domain_size(sweep_scaled):
    errs = {r["s_max"]: r["error"] for r in sweep_scaled}
    detail = ", ".join(f"{s:g}: {e:.2e}" for s, e in errs.items())
    assert record(3, "scaled init error < 2e-3 for every S_inf", max(errs.values()) < 2e-3, detail)


@pytest.mark.slow
@pytest.mark.xfail(reason="our optimizer trains the unscaled network well below 1e-1; see ledger", strict=False)
def test_c3_standard_init_error_at_240(sweep_standard_240):
    err = sweep_standard_240[0]["error"]
    assert record(3, "standard init error at S_inf = 240 > 1e-1", err > 1e-1, f"{err:.3e}")


def test_c3_standard_init_gradient_signature(gradient_table):
    gi = np.array([g[0] for g in gradient_table["standard"]])
    gb = np.array([g[1] for g in gradient_table["standard"]])
    const = np.allclose(gi, gi[0], rtol=1e-10)
    grows = bool(np.all(np.diff(gb) > 0))
    detail = f"interior {gi[0]:.4g} (spread {np.ptp(gi):.1e}), boundary {gb[0]:.3g} -> {gb[-1]:.3g}"
    assert record(3, "standard init: constant interior norm, boundary norm increasing", const and grows, detail)


@pytest.mark.xfail(reason="ratio at init is ~0.06 and seed dependent; see ledger", strict=False)
def test_c3_scaled_init_gradient_ratio(gradient_table):
    ratios = np.array([gi / gb for gi, gb in gradient_table["scaled"]])
    detail = ", ".join(f"{s:g}: {q:.3f}" for s, q in zip(SWEEP, ratios))
    assert record(3, "scaled init interior/boundary norm ratio in [0.25, 0.45]",
                  np.all((ratios >= 0.25) & (ratios <= 0.45)), detail)


# -- criterion 4 ------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("mode", ["optimal_lambda", "variance_normalization"])
def test_c4_american_put_error(american_put_runs, mode):
    err = american_put_runs[mode].error
    assert record(4, f"{mode} error vs FD < 5e-3", err < 5e-3, f"{err:.3e}")


@pytest.mark.slow
def test_c4_optimal_lambda_at_convergence(american_put_runs):
    lam = american_put_runs["optimal_lambda"].lambda_estimate
    assert record(4, "lambda* in [0.85, 0.95]", 0.85 <= lam <= 0.95, f"{lam:.4f}")


@pytest.mark.slow
def test_c4_variance_normalization_converges_no_slower(american_put_runs):
    vn = american_put_runs["variance_normalization"].first_iteration_below(1e-3)
    ol = american_put_runs["optimal_lambda"].first_iteration_below(1e-3)
    ok = vn is not None and (ol is None or vn <= ol)
    assert record(4, "variance normalization reaches 1e-3 no later than optimal-lambda", ok,
                  f"first iteration below 1e-3: variance normalization {vn}, optimal-lambda {ol}")


# -- criterion 5 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def american_max_call_fd():
    cfg = load_shipped_config("american_max_call")
    r = cfg.reference
    from pinnprice.reference import PSORConfig

    return fd_american(cfg.build_problem(), r.n_time, r.n_space, PSORConfig(r.omega, r.tol, r.max_sweeps))


@pytest.mark.xfail(reason="stated parameters give ~1.95 and ~10.17 (European bound); see ledger", strict=False)
@pytest.mark.parametrize("spots, lo, hi", [((15.0, 15.0), 2.04, 2.09), ((25.0, 5.0), 10.92, 11.02)])
def test_c5_fd_values(american_max_call_fd, spots, lo, hi):
    v = american_max_call_fd.interpolate(0.0, *spots)
    assert record(5, f"FD value at {spots} in [{lo}, {hi}]", lo <= v <= hi, f"{v:.4f}")


@pytest.mark.slow
def test_c5_network_error(american_max_call_run):
    err = american_max_call_run.error
    assert record(5, "network error vs FD < 5e-3", err < 5e-3, f"{err:.3e}")


# -- criterion 6 ------------------------------------------------------------------------

def test_c6_oracle_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(6)

    a, b, rho = rng.uniform(-4, 4, 40), rng.uniform(-4, 4, 40), rng.uniform(-0.95, 0.95, 40)
    bvn_err = max(abs(bivar_norm_cdf(x, y, r) - quad_bvn(x, y, r)) for x, y, r in zip(a, b, rho))
    x = np.linspace(-8, 8, 33)
    from scipy.integrate import quad

    cdf_err = max(abs(norm_cdf(v) - (0.5 + quad(lambda z: np.exp(-z * z / 2) / np.sqrt(2 * np.pi), 0, v)[0]))
                  for v in x)
    ok = record(6, "norm_cdf vs quadrature < 1e-12", cdf_err < 1e-12, f"{cdf_err:.1e}")
    ok &= record(6, "bivar_norm_cdf vs quadrature < 1e-10", bvn_err < 1e-10, f"{bvn_err:.1e}")

    parity = 0.0
    for _ in range(50):
        r, sig, d, S, t = rng.uniform(0, 0.3), rng.uniform(0.05, 0.8), rng.uniform(0, 0.3), rng.uniform(1, 100), \
            rng.uniform(0, 0.99)
        mk = MarketParams(r, sig, d, 1.0, K=15.0)
        c = bs_european(t, np.array([S]), mk, "call")[0]
        p = bs_european(t, np.array([S]), mk, "put")[0]
        tau = 1.0 - t
        parity = max(parity, abs(c - p - (S * np.exp(-d * tau) - 15.0 * np.exp(-r * tau))) / max(1.0, S))
    ok &= record(6, "put-call parity to 1e-12", parity < 1e-12, f"{parity:.1e}")

    two = 0.0
    for _ in range(20):
        mk = MarketParams(rng.uniform(0, 0.1), tuple(rng.uniform(0.1, 0.5, 2)), tuple(rng.uniform(0, 0.1, 2)), 1.0,
                          K=15.0, rho=rng.uniform(-0.9, 0.9))
        S1, S2, t = rng.uniform(5, 30), rng.uniform(5, 30), rng.uniform(0, 0.9)
        two = max(two, abs(max_call(t, np.array([S1]), np.array([S2]), mk)[0] - quad_max_call(1 - t, S1, S2, mk, 15.0)),
                  abs(margrabe(t, np.array([S1]), np.array([S2]), mk)[0] - quad_exchange(1 - t, S1, S2, mk)))
    ok &= record(6, "Margrabe and max_call vs quadrature to 1e-8", two < 1e-8, f"{two:.1e}")

    mk = MarketParams(r=0.04, sigma=0.25, delta=0.0, T=1.0, K=15.0)
    am = fd_american(PricingProblem("american", "call", mk))
    eu = fd_american(PricingProblem("european", "call", mk), american=False)
    gap = float(np.max(np.abs(am.values - eu.values)))
    ok &= record(6, "delta = 0 American call equals European call on the FD grid", gap < 1e-8, f"max gap {gap:.1e}")

    put = PricingProblem("european", "put", mk)
    tree = max(abs(binomial_american(put, 10_000, S, american=False) - bs_european(0.0, np.array([S]), mk, "put")[0])
               for S in (10.0, 15.0, 20.0))
    ok &= record(6, "binomial (10,000 steps) vs closed form to 1e-3", tree < 1e-3, f"{tree:.1e}")

    elapsed = time.perf_counter() - start
    ok &= record(6, "suite runs in under a minute", elapsed < 60, f"{elapsed:.1f} s")
    assert ok


# -- criterion 7 ------------------------------------------------------------------------

def _fd_jets(params, y, h=1e-4):
    """Central differences of the value on a batch: time/space gradient and spatial Hessian."""
    N, d = y.shape
    eye = np.eye(d) * h
    f = lambda z: forward(params, z)  # noqa: E731
    grad = np.stack([(f(y + eye[i]) - f(y - eye[i])) / (2 * h) for i in range(d)], axis=1)
    hess = np.zeros((N, d - 1, d - 1))
    for i in range(1, d):
        for j in range(1, d):
            hess[:, i - 1, j - 1] = (f(y + eye[i] + eye[j]) - f(y + eye[i] - eye[j]) - f(y - eye[i] + eye[j])
                                     + f(y - eye[i] - eye[j])) / (4 * h * h)
    return grad, hess


def test_c7_jets_match_finite_differences():
    rng = np.random.default_rng(7)
    worst, cases = 0.0, 0
    for k in range(50):
        d = int(rng.integers(2, 4))
        widths = tuple(int(w) for w in rng.integers(3, 21, size=int(rng.integers(1, 5))))
        params = init_network(Architecture(d, widths), float(10 ** rng.uniform(-1, 2)), int(rng.integers(1 << 30)))
        y = rng.uniform(0.05, 0.95, size=(20, d))
        jet = input_jet(params, y)
        exact = np.concatenate([np.atleast_2d(jet.grad_t).reshape(-1, 1), np.asarray(jet.grad_x).reshape(20, -1),
                                np.asarray(jet.hess_xx).reshape(20, -1)], axis=1)
        g, H = _fd_jets(params, y)
        approx = np.concatenate([g, H.reshape(20, -1)], axis=1)
        rel = np.linalg.norm(exact - approx, axis=1) / np.linalg.norm(approx, axis=1)
        worst = max(worst, float(rel.max()))
        cases += len(y)
    assert record(7, f"input jets vs finite differences on {cases} cases, rel err < 1e-5", worst < 1e-5,
                  f"worst {worst:.1e}")


def test_c7_loss_gradients_match_finite_differences():
    problems = [
        PricingProblem("american", "put", MarketParams(0.3, 0.25, 0.26, 1.0, K=15.0)),
        PricingProblem("american", "max_call", MarketParams(0.04, (0.25, 0.25), 0.01, 0.5, K=15.0, rho=0.1),
                       s_max=60.0),
        PricingProblem("european", "exchange", MarketParams(0.05, (0.25, 0.25), 0.1, 1.0, rho=0.1), s_max=60.0),
    ]
    worst, n_checked = 0.0, 0
    rng = np.random.default_rng(70)
    for prob in problems:
        for mode in ("fixed_lambda", "variance_normalization", "optimal_lambda"):
            arch = Architecture(prob.dim + 1, (8, 8))
            theta = init_network(arch, 10.0, 0).flatten()
            loss = CollocationLoss(prob, collocation_set(prob, 60, 20, 20, 0), LossConfig(mode), arch)
            if prob.style == "american":
                _, terms, L, v, obstacle, _, _ = loss._interior(theta)
                labs = np.abs(terms).sum(axis=0)
                assert np.all(np.abs(obstacle - L) > 1e-3) and np.all(np.abs(np.abs(obstacle) - labs) > 1e-3)
            f0, g = loss.value_and_grad(theta)
            for k in rng.choice(len(theta), 15, replace=False):
                e = np.zeros_like(theta)
                e[k] = 1e-6
                fd = (loss.value_and_grad(theta + e)[0] - loss.value_and_grad(theta - e)[0]) / 2e-6
                worst = max(worst, abs(g[k] - fd) / max(abs(fd), 1e-6 * max(1.0, abs(f0))))
                n_checked += 1
    assert record(7, f"loss gradients vs finite differences away from ties ({n_checked} entries)", worst < 1e-5,
                  f"worst rel err {worst:.1e}")


@pytest.mark.slow
def test_c7_american_surfaces_dominate_payoff(american_put_runs, american_max_call_run):
    worst = np.inf
    n_nodes = 0
    for rep in [*american_put_runs.values(), american_max_call_run]:
        ref = GridSurface.from_csv(rep.artifacts["reference"])
        cfg = load_shipped_config(rep.name)
        H = np.asarray(payoff(cfg.build_problem(), ref.nodes()[:, 1:])).reshape(ref.values.shape)
        worst = min(worst, float(np.min(ref.values - H)))
        n_nodes += ref.values.size
    assert record(7, f"American value >= payoff - 1e-6 on every exported node ({n_nodes})", worst >= -1e-6,
                  f"min(value - payoff) = {worst:.2e}")


def test_c7_loss_invariants():
    probs = [
        PricingProblem("american", "put", MarketParams(0.3, 0.25, 0.26, 1.0, K=15.0)),
        PricingProblem("american", "max_call", MarketParams(0.04, (0.25, 0.25), 0.01, 0.5, K=15.0, rho=0.1),
                       s_max=60.0),
        PricingProblem("european", "max_call", MarketParams(0.05, (0.2, 0.3), (0.1, 0.05), 1.0, K=15.0, rho=0.3)),
    ]
    ratios, lams = [], []
    for prob in probs:
        arch = Architecture(prob.dim + 1, (8, 8))
        pts = collocation_set(prob, 80, 20, 20, 1)
        vn = CollocationLoss(prob, pts, LossConfig("variance_normalization"), arch)
        ol = CollocationLoss(prob, pts, LossConfig("optimal_lambda"), arch)
        for seed in range(10):
            theta = init_network(arch, 10.0 ** (seed / 3 - 1), seed).flatten()
            ratios.append(vn.breakdown(theta).interior_term)
            lams.append(ol.optimal_lambda(theta))
    ok = record(7, "variance-normalized interior ratio <= 1", max(ratios) <= 1.0 + 1e-12, f"max {max(ratios):.4f}")
    ok &= record(7, "lambda* in [0, 1]", 0.0 <= min(lams) and max(lams) <= 1.0,
                 f"range [{min(lams):.4f}, {max(lams):.4f}]")
    assert ok


def test_c7_determinism(tmp_path):
    doc = {
        "name": "determinism",
        "problem": {"style": "american", "payoff_kind": "put", "r": 0.3, "sigma": [0.25], "delta": [0.26],
                    "T": 1.0, "K": 15.0},
        "network": {"hidden_layers": [8, 8]},
        "sampling": {"n_interior": 100, "n_boundary": 20, "n_terminal": 20, "seed": 5},
        "loss": {"mode": "optimal_lambda"},
        "optimizer": {"max_iterations": 60},
        "outputs": {"n_time": 10, "n_space": 21},
        "reference": {"n_time": 10, "n_space": 21},
    }
    cfg = cli.ExperimentConfig.from_dict(doc)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("network.json", "surface.csv", "reference.csv", "error_surface.csv"))
    same &= a.error == b.error and a.lambda_used == b.lambda_used
    assert record(7, "identical artifacts under fixed seeds", same, f"error {a.error:.6e} twice")


def test_c7_relative_error_definition():
    """The reported error is the discrete relative L2 error on the evaluation grid."""
    t = np.linspace(0, 1, 4)
    ax = [np.linspace(0, 1, 5)]
    ref = GridSurface(t, ax, np.arange(20, dtype=float).reshape(4, 5) + 1)
    cand = GridSurface(t, ax, ref.values + 0.5)
    expected = np.sqrt(np.sum(0.25 * np.ones(20)) / np.sum(ref.values ** 2))
    err = relative_l2_error(cand, ref)
    assert record(7, "relative L2 error definition", abs(err - expected) < 1e-15, f"{err:.6e}")
