"""Experiment runner and command-line interface.

An experiment is one JSON file describing the problem, network, collocation
sets, loss and optimizer. ``run_experiment`` trains the network, evaluates it
on a fixed grid, compares it with a reference surface and writes the
artifacts::

    pinnprice run configs/european_put.json --out runs/put
    pinnprice sweep configs/max_call_domain.json --s-max 10 60 240 --init scaled
    pinnprice reference configs/american_max_call.json --out ref.csv
    pinnprice error runs/put/surface.csv runs/put/reference.csv
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from pinnprice import kernels
from pinnprice.loss import CollocationLoss, LossConfig
from pinnprice.net import Architecture, forward_streams, init_network, save_checkpoint
from pinnprice.optimize import OptimizerConfig, minimize
from pinnprice.problems import MarketParams, PricingProblem, payoff
from pinnprice.reference.fd import GridSurface, PSORConfig, fd_american
from pinnprice.sampling import collocation_set

log = logging.getLogger("pinnprice")

CONVERGED_REASONS = ("gradient_tolerance", "loss_plateau")


# -- configuration ----------------------------------------------------------------

@dataclass
class ProblemBlock:
    style: str = "european"
    payoff_kind: str = "put"
    r: float = 0.04
    sigma: list = field(default_factory=lambda: [0.25])
    delta: list = field(default_factory=lambda: [0.0])
    T: float = 1.0
    K: float | None = 15.0
    rho: float = 0.0
    s_max: list | None = None
    boundary_rules: list | None = None


@dataclass
class NetworkBlock:
    hidden_layers: list = field(default_factory=lambda: [20, 20, 20, 20])
    v_max_mode: str = "auto_payoff_max"
    v_max: float = 1.0
    seed: int = 0


@dataclass
class SamplingBlock:
    n_interior: int = 1000
    n_boundary: int = 150
    n_terminal: int = 150
    seed: int = 0


@dataclass
class LossBlock:
    mode: str = "fixed_lambda"
    lam: float = 0.5
    p: float = 2.0


@dataclass
class OptimizerBlock:
    memory: int = 10
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-8
    loss_tolerance: float = 1e-12
    plateau_window: int = 20
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search_steps: int = 25
    restart_cycle: int = 50


@dataclass
class ReferenceBlock:
    n_time: int = 75
    n_space: int = 101
    omega: float = 1.2
    tol: float = 1e-8
    max_sweeps: int = 10000


@dataclass
class OutputsBlock:
    directory: str = "run"
    n_time: int = 75
    n_space: int = 101
    snapshot_stride: int = 0
    write_surfaces: bool = True


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    description: str = ""
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    network: NetworkBlock = field(default_factory=NetworkBlock)
    sampling: SamplingBlock = field(default_factory=SamplingBlock)
    loss: LossBlock = field(default_factory=LossBlock)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    reference: ReferenceBlock = field(default_factory=ReferenceBlock)
    outputs: OutputsBlock = field(default_factory=OutputsBlock)

    _blocks = {"problem": ProblemBlock, "network": NetworkBlock, "sampling": SamplingBlock,
               "loss": LossBlock, "optimizer": OptimizerBlock, "reference": ReferenceBlock,
               "outputs": OutputsBlock}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        unknown = set(doc) - set(cls._blocks) - {"name", "description"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: doc[k] for k in ("name", "description") if k in doc}
        for key, block in cls._blocks.items():
            sub = doc.get(key, {})
            names = {f.name for f in dataclasses.fields(block)}
            bad = set(sub) - names
            if bad:
                raise ValueError(f"unknown keys in {key!r} block: {sorted(bad)}")
            kwargs[key] = block(**sub)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"optimizer.max_iterations": 0})``."""
        doc = copy.deepcopy(self.to_dict())
        for key, value in changes.items():
            head, _, tail = key.partition(".")
            if tail:
                doc[head][tail] = value
            else:
                doc[head] = value
        return ExperimentConfig.from_dict(doc)

    # the module objects; building them validates every block
    def build_problem(self) -> PricingProblem:
        p = self.problem
        market = MarketParams(p.r, tuple(p.sigma), tuple(p.delta), p.T, p.K, p.rho)
        rules = tuple(p.boundary_rules) if p.boundary_rules is not None else None
        s_max = tuple(p.s_max) if p.s_max is not None else None
        return PricingProblem(p.style, p.payoff_kind, market, s_max, rules)

    def build_architecture(self) -> Architecture:
        return Architecture(self.build_problem().dim + 1, tuple(self.network.hidden_layers))

    def build_loss_config(self) -> LossConfig:
        return LossConfig(self.loss.mode, self.loss.lam, self.loss.p)

    def build_optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(**dataclasses.asdict(self.optimizer))

    def build_psor_config(self) -> PSORConfig:
        r = self.reference
        return PSORConfig(r.omega, r.tol, r.max_sweeps)

    def validate(self) -> None:
        self.build_problem()
        self.build_architecture()
        self.build_loss_config()
        self.build_optimizer_config()
        self.build_psor_config()
        if self.network.v_max_mode not in ("auto_payoff_max", "explicit"):
            raise ValueError("network.v_max_mode must be 'auto_payoff_max' or 'explicit'")
        if not self.network.v_max > 0:
            raise ValueError("network.v_max must be positive")
        if self.outputs.n_time < 1 or self.outputs.n_space < 2:
            raise ValueError("evaluation grid needs n_time >= 1 and n_space >= 2")
        if self.outputs.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be >= 0")


def load_shipped_config(name: str) -> ExperimentConfig:
    """One of the configs bundled with the package, by file stem."""
    text = resources.files("pinnprice").joinpath("configs", f"{name}.json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))


def shipped_configs() -> list[str]:
    folder = resources.files("pinnprice").joinpath("configs")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


# -- evaluation -------------------------------------------------------------------

def evaluation_axes(problem: PricingProblem, n_time: int, n_space: int):
    t = np.linspace(0.0, problem.market.T, n_time + 1)
    return t, [np.linspace(0.0, s, n_space) for s in problem.s_max]


def initial_v_max(cfg: ExperimentConfig, problem: PricingProblem) -> float:
    """Output scale for the last layer; the payoff maximum over the domain corners in auto mode."""
    if cfg.network.v_max_mode == "explicit":
        return float(cfg.network.v_max)
    corners = np.array(np.meshgrid(*[(0.0, s) for s in problem.s_max], indexing="ij")).reshape(problem.dim, -1).T
    v = float(np.max(payoff(problem, corners)))
    # a payoff that vanishes at every corner gives no scale; keep the plain init
    return v if v > 0 else 1.0


def network_surface(problem: PricingProblem, arch: Architecture, theta, t, axes,
                    chunk: int = 100_000) -> GridSurface:
    """Network values on the tensor grid (financial axes)."""
    mesh = np.meshgrid(t, *axes, indexing="ij")
    y = np.stack([m.ravel() for m in mesh], axis=1) / problem.scales
    out = np.empty(len(y))
    for i in range(0, len(y), chunk):
        out[i:i + chunk] = forward_streams(arch, theta, y[i:i + chunk], order=0).out[0]
    return GridSurface(t, list(axes), out.reshape(mesh[0].shape), problem)


def analytic_surface(problem: PricingProblem, t, axes) -> GridSurface:
    from pinnprice.problems import _analytic_price

    mesh = np.meshgrid(t, *axes, indexing="ij")
    x = np.stack([m.ravel() for m in mesh[1:]], axis=1)
    vals = np.asarray(_analytic_price(problem, mesh[0].ravel(), x), dtype=float)
    return GridSurface(t, list(axes), vals.reshape(mesh[0].shape), problem)


def reference_surface(cfg: ExperimentConfig, problem: PricingProblem | None = None) -> GridSurface:
    """Closed form for european problems, finite differences + PSOR for american ones.

    The american reference is solved on the evaluation grid itself, so its
    time and space resolution must match ``outputs``.
    """
    problem = problem or cfg.build_problem()
    t, axes = evaluation_axes(problem, cfg.outputs.n_time, cfg.outputs.n_space)
    if problem.style == "european":
        return analytic_surface(problem, t, axes)
    ref = cfg.reference
    if (ref.n_time, ref.n_space) != (cfg.outputs.n_time, cfg.outputs.n_space):
        raise ValueError("american reference grid must equal the evaluation grid")
    surf = fd_american(problem, ref.n_time, ref.n_space, cfg.build_psor_config())
    if not np.all(surf.values >= np.asarray(payoff(problem, surf.nodes()[:, 1:])).reshape(surf.values.shape) - 1e-6):
        raise RuntimeError("reference surface falls below the payoff")
    return surf


def relative_l2_error(candidate: GridSurface, reference: GridSurface) -> float:
    """||candidate - reference|| / ||reference|| over all grid nodes."""
    if not candidate.same_axes(reference):
        raise ValueError("surfaces are not on identical axes")
    den = np.linalg.norm(reference.values)
    if den == 0.0:
        raise ValueError("reference surface has zero norm")
    return float(np.linalg.norm(candidate.values - reference.values) / den)


# -- runs -----------------------------------------------------------------------------

@dataclass
class RunReport:
    name: str
    error: float
    loss: dict
    lambda_used: float | None
    lambda_estimate: float | None
    wall_time: float
    iterations: int
    n_evals: int
    stop_reason: str
    converged: bool
    v_max: float
    gradient_norms_at_init: tuple[float, float]
    error_history: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    kernel_backend: str = kernels.BACKEND

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def first_iteration_below(self, level: float) -> int | None:
        """First snapshot iteration whose error is below ``level`` (needs snapshots)."""
        for it, err in self.error_history:
            if err < level:
                return it
        return None


def run_experiment(cfg: ExperimentConfig, out_dir=None, reference: GridSurface | None = None) -> RunReport:
    """Train, evaluate against the reference and write the artifacts.

    Artifacts in ``out_dir`` (default ``cfg.outputs.directory``):
    ``effective_config.json``, ``report.json``, ``run_log.tsv``,
    ``network.json`` and, unless disabled, ``surface.csv``,
    ``reference.csv`` and ``error_surface.csv``. A precomputed ``reference``
    surface on the evaluation grid may be passed in to skip that step.
    """
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "effective_config.json")

    problem = cfg.build_problem()
    arch = cfg.build_architecture()
    v_max = initial_v_max(cfg, problem)
    params = init_network(arch, v_max, cfg.network.seed)
    s = cfg.sampling
    pts = collocation_set(problem, s.n_interior, s.n_boundary, s.n_terminal, s.seed)
    loss = CollocationLoss(problem, pts, cfg.build_loss_config(), arch)
    grad_norms = loss.gradient_norms(params.flatten())

    on_restart = None
    if cfg.loss.mode == "optimal_lambda":
        on_restart = loss.refresh
    lam_of = (lambda: loss.lam) if cfg.loss.mode != "variance_normalization" else None
    log.info("%s: training %d parameters on %d interior points", cfg.name, arch.n_params, s.n_interior)
    theta, hist = minimize(loss.value_and_grad, params.flatten(), cfg.build_optimizer_config(),
                           on_restart=on_restart, lam_of=lam_of,
                           snapshot_stride=cfg.outputs.snapshot_stride)
    log.info("%s: stopped after %d iterations (%s)", cfg.name, hist.iterations, hist.reason)

    t, axes = evaluation_axes(problem, cfg.outputs.n_time, cfg.outputs.n_space)
    if reference is None:
        reference = reference_surface(cfg, problem)
    cand = network_surface(problem, arch, theta, t, axes)
    err = relative_l2_error(cand, reference)
    history = [(it, relative_l2_error(network_surface(problem, arch, th, t, axes), reference))
               for it, th in hist.snapshots]

    breakdown = loss.breakdown(theta)
    lam_est = loss.optimal_lambda(theta)
    artifacts = {"effective_config": str(out / "effective_config.json"), "report": str(out / "report.json"),
                 "run_log": str(out / "run_log.tsv"), "network": str(out / "network.json")}
    save_checkpoint(params.from_flat(arch, theta), out / "network.json")
    with open(out / "run_log.tsv", "w") as fh:
        fh.write("iteration\tloss\tgrad_norm\tlambda\tseconds\n")
        fh.write("\n".join(hist.log_lines()) + "\n")
    if cfg.outputs.write_surfaces:
        cand.to_csv(out / "surface.csv")
        reference.to_csv(out / "reference.csv")
        GridSurface(t, list(axes), np.abs(cand.values - reference.values)).to_csv(out / "error_surface.csv")
        artifacts.update(surface=str(out / "surface.csv"), reference=str(out / "reference.csv"),
                         error_surface=str(out / "error_surface.csv"))
    if history:
        with open(out / "error_history.tsv", "w") as fh:
            fh.write("iteration\terror\n")
            fh.writelines(f"{it}\t{e!r}\n" for it, e in history)
        artifacts["error_history"] = str(out / "error_history.tsv")

    report = RunReport(
        name=cfg.name, error=err, loss=dataclasses.asdict(breakdown),
        lambda_used=hist.records[-1].lam, lambda_estimate=lam_est,
        wall_time=time.perf_counter() - start, iterations=hist.iterations, n_evals=hist.n_evals,
        stop_reason=hist.reason, converged=hist.reason in CONVERGED_REASONS, v_max=v_max,
        gradient_norms_at_init=grad_norms, error_history=history, artifacts=artifacts)
    report.save(out / "report.json")
    return report


def _scaled_config(base: ExperimentConfig, s_max: float, init_mode: str) -> ExperimentConfig:
    """Base config moved to domain size ``s_max`` with the strike kept at the same fraction of it."""
    problem = base.build_problem()
    ratio = problem.market.K / problem.s_max[0]
    changes = {"problem.s_max": [float(s_max)] * problem.dim, "problem.K": ratio * s_max,
               "name": f"{base.name}_smax{s_max:g}_{init_mode}"}
    if init_mode == "standard":
        changes.update({"network.v_max_mode": "explicit", "network.v_max": 1.0})
    elif init_mode == "scaled":
        changes["network.v_max_mode"] = "auto_payoff_max"
    else:
        raise ValueError("init_mode must be 'standard' or 'scaled'")
    return base.replace(**changes)


def domain_sweep(base_cfg: ExperimentConfig, s_max_list, init_mode: str, out_dir=None) -> list[dict]:
    """Error and initial gradient norms for each domain size.

    Rows are dicts with keys ``s_max``, ``error``, ``grad_interior`` and
    ``grad_boundary``.
    """
    problem = base_cfg.build_problem()
    if problem.dim != 2 or problem.payoff_kind != "max_call" or problem.style != "european":
        raise ValueError("domain_sweep runs on a 2D european max-call problem")
    root = Path(out_dir if out_dir is not None else base_cfg.outputs.directory)
    rows = []
    for s_max in s_max_list:
        cfg = _scaled_config(base_cfg, s_max, init_mode)
        rep = run_experiment(cfg, root / f"smax_{s_max:g}")
        gi, gb = rep.gradient_norms_at_init
        rows.append({"s_max": float(s_max), "error": rep.error, "grad_interior": gi, "grad_boundary": gb,
                     "converged": rep.converged, "stop_reason": rep.stop_reason, "iterations": rep.iterations})
    with open(root / f"sweep_{init_mode}.tsv", "w") as fh:
        fh.write("s_max\terror\tgrad_interior\tgrad_boundary\n")
        for r in rows:
            fh.write(f"{r['s_max']:g}\t{r['error']!r}\t{r['grad_interior']!r}\t{r['grad_boundary']!r}\n")
    return rows


def initial_gradient_norms(base_cfg: ExperimentConfig, s_max: float, init_mode: str) -> tuple[float, float]:
    """Interior and boundary gradient norms of the untrained network (no training)."""
    cfg = _scaled_config(base_cfg, s_max, init_mode)
    problem = cfg.build_problem()
    arch = cfg.build_architecture()
    params = init_network(arch, initial_v_max(cfg, problem), cfg.network.seed)
    s = cfg.sampling
    pts = collocation_set(problem, s.n_interior, s.n_boundary, s.n_terminal, s.seed)
    return CollocationLoss(problem, pts, cfg.build_loss_config(), arch).gradient_norms(params.flatten())


# -- command line ---------------------------------------------------------------------

def _config_arg(text: str) -> ExperimentConfig:
    path = Path(text)
    if path.exists():
        return ExperimentConfig.load(path)
    if text in shipped_configs():
        return load_shipped_config(text)
    raise argparse.ArgumentTypeError(f"no config file or shipped config named {text!r}")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pinnprice", description="Train and check neural option pricers.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="train one experiment and write its report")
    p.add_argument("config", type=_config_arg, help="JSON file or shipped config name")
    p.add_argument("--out", help="output directory (default: outputs.directory)")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--budget-ok", action="store_true",
                   help="treat stopping at max_iterations as success for the exit code")

    p = sub.add_parser("sweep", help="domain-size sweep on a 2D max-call config")
    p.add_argument("config", type=_config_arg)
    p.add_argument("--s-max", type=float, nargs="+", required=True)
    p.add_argument("--init", choices=("standard", "scaled"), required=True)
    p.add_argument("--out")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--budget-ok", action="store_true")

    p = sub.add_parser("reference", help="compute the reference surface only")
    p.add_argument("config", type=_config_arg)
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("error", help="relative L2 error of surface A against surface B")
    p.add_argument("candidate")
    p.add_argument("reference")

    sub.add_parser("configs", help="list shipped configs")
    return ap


def _acceptable(converged, reason, iterations, budget_ok) -> bool:
    return converged or (budget_ok and reason == "max_iterations" and iterations > 0)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.verb == "configs":
            print("\n".join(shipped_configs()))
            return 0
        if args.verb == "error":
            err = relative_l2_error(GridSurface.from_csv(args.candidate), GridSurface.from_csv(args.reference))
            print(f"{err:.6e}")
            return 0
        cfg = args.config
        if args.verb == "reference":
            reference_surface(cfg).to_csv(args.out)
            print(args.out)
            return 0
        if getattr(args, "max_iterations", None) is not None:
            cfg = cfg.replace(**{"optimizer.max_iterations": args.max_iterations})
        if args.verb == "run":
            rep = run_experiment(cfg, args.out)
            print(json.dumps({"error": rep.error, "iterations": rep.iterations, "stop_reason": rep.stop_reason,
                              "converged": rep.converged, "report": rep.artifacts["report"]}))
            return 0 if _acceptable(rep.converged, rep.stop_reason, rep.iterations, args.budget_ok) else 2
        rows = domain_sweep(cfg, args.s_max, args.init, args.out)
        print("s_max\terror\tgrad_interior\tgrad_boundary")
        for r in rows:
            print(f"{r['s_max']:g}\t{r['error']:.3e}\t{r['grad_interior']:.4g}\t{r['grad_boundary']:.4g}")
        ok = all(_acceptable(r["converged"], r["stop_reason"], r["iterations"], args.budget_ok) for r in rows)
        return 0 if ok else 2
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"pinnprice: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
