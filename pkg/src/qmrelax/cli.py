"""Batch runner: build a model, dispatch a solver, stream logs, emit results.

Two subcommands:

``qmrelax run``
    One solve.  Writes ``convergence.csv`` (one row per iteration),
    ``result.json`` (machine-readable record validated by the published
    schema), and optional periodic ``checkpoint.bin`` files that a later
    invocation can resume from.

``qmrelax sweep``
    A grid of runs over one model parameter and a list of cluster shapes,
    aggregated into ``sweep.csv``.  Failing points are recorded and the sweep
    continues.

Exit codes: 0 success, 2 invalid configuration, 3 solver divergence,
4 checkpoint corruption or mismatch.

Configuration precedence: command-line flags override config-file values
override built-in defaults; the effective configuration is echoed into
``result.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import checkpoint_load, checkpoint_save, restore_state
from .errors import CheckpointError, DivergenceError
from .fermion_models import build_spinless
from .lattice import ClusterDecomposition, Lattice
from .oracle import ground_energy_dense, ground_energy_lanczos
from .problem import ClusterProblem
from .solver import SolverConfig, SolverState, solve
from .solver_ti import TIState, solve_ti
from .spin_models import build_afh, build_tfi

logger = logging.getLogger(__name__)

MODELS = ("tfi", "afh", "sf", "lrsf")
SOLVERS = ("general", "ti")
ORACLE_SITE_CAP = 22
_CSV_HEADER = "iter,energy_per_site,energy_delta,feas_error,wall_ms\n"


@dataclass
class RunConfig:
    """Effective configuration of one run (flags > config file > defaults)."""

    model: str = "tfi"
    lattice: str = "20x1"
    cluster: str = "1x1"
    h: float = 1.0
    u: float = 1.0
    periodic: bool = True
    solver: str = "ti"
    mu: float = 10.0
    nu: float = 10.0
    eps: float = 2.0
    iters: int = 10000
    energy_tol: float = 1e-6
    tol_window: int = 50
    seed: int = 0
    threads: int | None = None
    oracle: bool = False
    output_dir: str = "."
    checkpoint_every: int = 0
    resume_from: str | None = None

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        dims = parse_dims(self.lattice)
        cdims = parse_dims(self.cluster)
        if len(dims) != len(cdims):
            raise ValueError(f"lattice {self.lattice} and cluster {self.cluster} "
                             "have different ranks")
        for d, c in zip(dims, cdims):
            if c < 1 or d % c != 0:
                raise ValueError(f"cluster dims {self.cluster} do not divide "
                                 f"lattice dims {self.lattice}")
        if self.solver == "ti" and not self.periodic:
            raise ValueError("the translation-invariant solver requires a periodic lattice")
        if self.mu <= 0 or self.nu <= 0 or self.eps < 0:
            raise ValueError("mu and nu must be positive and eps nonnegative")
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        n_sites = int(np.prod(dims))
        if self.oracle and n_sites > ORACLE_SITE_CAP:
            raise ValueError(f"--oracle supports at most {ORACLE_SITE_CAP} sites, "
                             f"got {n_sites}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be nonnegative")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(mu=self.mu, nu=self.nu, eps=self.eps,
                            max_iters=self.iters, energy_tol=self.energy_tol,
                            tol_window=self.tol_window, seed=self.seed,
                            threads=self.threads)


def parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.lower().split("x"))
    except ValueError as exc:
        raise ValueError(f"cannot parse dimensions {text!r}; expected e.g. '20x1'") from exc
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"dimensions must be positive: {text!r}")
    return dims


def build_problem(cfg: RunConfig) -> ClusterProblem:
    lattice = Lattice(parse_dims(cfg.lattice), periodic=cfg.periodic)
    clustering = ClusterDecomposition(lattice, parse_dims(cfg.cluster))
    if cfg.model == "tfi":
        return build_tfi(lattice, cfg.h, clustering)
    if cfg.model == "afh":
        return build_afh(lattice, clustering)
    if cfg.model == "sf":
        return build_spinless(lattice, cfg.u, clustering, long_range=False)
    if cfg.model == "lrsf":
        return build_spinless(lattice, cfg.u, clustering, long_range=True)
    raise ValueError(f"unknown model {cfg.model!r}")


def problem_fingerprint(problem: ClusterProblem, cfg: RunConfig) -> bytes:
    """Digest of everything a resumed run must agree on."""
    h = hashlib.sha256()
    ident = {
        "model": cfg.model, "lattice": cfg.lattice, "cluster": cfg.cluster,
        "h": cfg.h, "u": cfg.u, "periodic": cfg.periodic, "solver": cfg.solver,
        "mu": cfg.mu, "nu": cfg.nu, "eps": cfg.eps, "seed": cfg.seed,
    }
    h.update(json.dumps(ident, sort_keys=True).encode())
    h.update(np.ascontiguousarray(problem.h_single, dtype="<f8").tobytes())
    for key in sorted(problem.h_pair):
        h.update(repr(key).encode())
        h.update(np.ascontiguousarray(problem.h_pair[key], dtype="<f8").tobytes())
    return h.digest()


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def compute_oracle_energy(problem: ClusterProblem, seed: int = 0) -> float:
    dim = problem.local_dim ** problem.n_clusters
    if dim <= 2 ** 14:
        return ground_energy_dense(problem)[0]
    return ground_energy_lanczos(problem, seed=seed)


def run_experiment(cfg: RunConfig) -> dict:
    """Execute one configured solve and write its artifacts.

    Returns the result record (the same dict serialized to ``result.json``).
    """
    cfg.validate()
    problem = build_problem(cfg)
    if cfg.solver == "ti" and not problem.translation_invariant:
        raise ValueError("problem is not translation-invariant; use --solver general")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fingerprint = problem_fingerprint(problem, cfg)
    state_cls = TIState if cfg.solver == "ti" else SolverState

    state = None
    if cfg.resume_from:
        fields, kind = checkpoint_load(cfg.resume_from, expected_fingerprint=fingerprint)
        expected_kind = 1 if cfg.solver == "ti" else 0
        if kind != expected_kind:
            raise CheckpointError(f"checkpoint solver kind {kind} does not match "
                                  f"configured solver {cfg.solver!r}")
        state = restore_state(fields, state_cls)
        logger.info("resumed from %s at iteration %d", cfg.resume_from, state.iteration)

    csv_path = out_dir / "convergence.csv"
    ckpt_path = out_dir / "checkpoint.bin"
    mode = "a" if (cfg.resume_from and csv_path.exists()) else "w"
    t_start = time.perf_counter()
    with open(csv_path, mode, buffering=1) as csv_file:
        if mode == "w":
            csv_file.write(_CSV_HEADER)

        def on_iteration(record, live_state):
            csv_file.write(",".join([
                str(record.iteration), _fmt(record.energy_per_site),
                _fmt(record.energy_delta), _fmt(record.feas_error),
                _fmt(record.wall_ms)]) + "\n")
            if cfg.checkpoint_every and record.iteration % cfg.checkpoint_every == 0:
                checkpoint_save(live_state, ckpt_path, fingerprint,
                                1 if cfg.solver == "ti" else 0)

        solver_fn = solve_ti if cfg.solver == "ti" else solve
        result = solver_fn(problem, cfg.solver_config(), state=state,
                           callback=on_iteration)
    wall = time.perf_counter() - t_start

    oracle_energy = None
    if cfg.oracle:
        oracle_energy = compute_oracle_energy(problem, seed=cfg.seed)
    oracle_per_site = (oracle_energy / problem.n_sites
                       if oracle_energy is not None else None)
    relaxation_error = (oracle_per_site - result.energy_per_site
                        if oracle_per_site is not None else None)

    record = {
        "config": dataclasses.asdict(cfg),
        "version": __version__,
        "energy": result.energy,
        "energy_per_site": result.energy_per_site,
        "iterations_run": result.iterations,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "final_feas_error": (result.history[-1].feas_error if result.history
                             else None),
        "oracle_energy": oracle_energy,
        "oracle_energy_per_site": oracle_per_site,
        "relaxation_error_per_site": relaxation_error,
        "wall_clock_s": wall,
        "n_sites": problem.n_sites,
        "n_clusters": problem.n_clusters,
    }
    (out_dir / "result.json").write_text(json.dumps(record, indent=2) + "\n")
    return record


def run_sweep(base: RunConfig, param: str, values: list[float],
              clusters: list[str], sweep_dir: Path) -> Path:
    """Run a parameter x cluster grid, aggregating one CSV row per point."""
    if not values:
        raise ValueError("sweep requires a non-empty list of parameter values")
    if param not in ("h", "u"):
        raise ValueError(f"sweep parameter must be 'h' or 'u', got {param!r}")
    sweep_dir.mkdir(parents=True, exist_ok=True)
    table = sweep_dir / "sweep.csv"
    with open(table, "w", buffering=1) as fh:
        fh.write("model,lattice,cluster,param,value,energy_per_site,"
                 "relaxation_error_per_site,status,detail\n")
        for cluster in clusters:
            for value in values:
                cfg = dataclasses.replace(
                    base, cluster=cluster,
                    output_dir=str(sweep_dir / f"{cluster}_{param}{value:g}"))
                setattr(cfg, param, float(value))
                try:
                    rec = run_experiment(cfg)
                    err = rec["relaxation_error_per_site"]
                    fh.write(f"{cfg.model},{cfg.lattice},{cluster},{param},"
                             f"{value:g},{_fmt(rec['energy_per_site'])},"
                             f"{'' if err is None else _fmt(err)},ok,\n")
                except Exception as exc:  # noqa: BLE001 - sweep must continue
                    logger.error("sweep point %s %s=%g failed: %s",
                                 cluster, param, value, exc)
                    fh.write(f"{cfg.model},{cfg.lattice},{cluster},{param},"
                             f"{value:g},,,error,{type(exc).__name__}\n")
    return table


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with RunConfig fields")
    parser.add_argument("--model", choices=MODELS)
    parser.add_argument("--lattice", help="lattice dims, e.g. 20x1")
    parser.add_argument("--cluster", help="cluster dims, e.g. 2x1")
    parser.add_argument("--h", type=float, help="transverse field (tfi)")
    parser.add_argument("--U", dest="u", type=float, help="interaction strength (sf/lrsf)")
    parser.add_argument("--open-boundary", dest="periodic", action="store_false",
                        default=None, help="use open boundary conditions")
    parser.add_argument("--solver", choices=SOLVERS)
    parser.add_argument("--mu", type=float)
    parser.add_argument("--nu", type=float)
    parser.add_argument("--eps", type=float)
    parser.add_argument("--iters", type=int)
    parser.add_argument("--energy-tol", dest="energy_tol", type=float)
    parser.add_argument("--tol-window", dest="tol_window", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--oracle", action="store_true", default=None,
                        help="compare against exact diagonalization")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    parser.add_argument("--resume-from", dest="resume_from")


def _merge_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config file {args.config}: {exc}") from exc
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        for key, value in loaded.items():
            setattr(cfg, key, value)
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmrelax",
        description="Lower bounds on lattice ground-state energies via "
                    "a first-order two-marginal SDP solver")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log per-iteration progress")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="solve one configured problem")
    _add_run_arguments(run_p)
    sweep_p = sub.add_parser("sweep", help="run a parameter/cluster grid")
    _add_run_arguments(sweep_p)
    sweep_p.add_argument("--param", choices=("h", "u"), default="h")
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated parameter values, e.g. 0.5,1,1.5")
    sweep_p.add_argument("--clusters",
                         help="comma-separated cluster shapes, e.g. 1x1,2x1,4x1")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = _merge_config(args)
        if args.command == "run":
            record = run_experiment(cfg)
            print(f"energy_per_site {_fmt(record['energy_per_site'])} "
                  f"({record['iterations_run']} iterations, "
                  f"{record['stop_reason']})")
            if record["relaxation_error_per_site"] is not None:
                print(f"relaxation_error_per_site "
                      f"{_fmt(record['relaxation_error_per_site'])}")
        else:
            values = [float(v) for v in args.values.split(",") if v != ""]
            clusters = (args.clusters.split(",") if args.clusters
                        else [cfg.cluster])
            table = run_sweep(cfg, args.param, values, clusters,
                              Path(cfg.output_dir))
            print(f"sweep table written to {table}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return 3
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
