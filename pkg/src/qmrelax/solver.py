"""General (non-translation-invariant) splitting solver.

Each iteration runs six phases in strict order: effective Hamiltonians from
the current dual certificate, the closed-form pair-marginal update, the cone
projection of the auxiliary pair variables, the trace-constrained site
update, the local multiplier ascent, and the projected ascent step on the
global dual matrix.  Within a phase all pair/site slots are independent and
are evaluated as batched array operations.

A reference mode is also provided that converges the inner splitting scheme
between consecutive dual-ascent steps; it is exact-but-slow and exists to
validate the practical interleaved scheme at desk scale.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError
from .linalg import (embed_first, embed_second, pair_quadratic_inverse,
                     partial_trace_first, partial_trace_second, psd_project,
                     sym_part)
from .problem import ClusterProblem
from .sdp_core import (DualState, MarginalSet, lift_block_diag, lift_block_pair,
                       moment_block_diag, moment_block_pair, pair_list)
from .util import thread_limit

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6
LOG_EVERY = 500


@dataclass
class SolverConfig:
    """Algorithmic parameters of the splitting scheme.

    ``mu``/``nu`` are the quadratic penalty weights, ``eps`` the dual ascent
    step.  Iterations stop at ``max_iters`` or once the per-site energy
    change stays below ``energy_tol`` for ``tol_window`` consecutive
    iterations (set ``energy_tol=0`` to always run the full budget).
    ``inner_iters``/``inner_tol`` only affect the reference mode.
    """

    mu: float = 10.0
    nu: float = 10.0
    eps: float = 2.0
    max_iters: int = 10000
    energy_tol: float = 1e-6
    tol_window: int = 50
    inner_iters: int = 200
    inner_tol: float = 1e-9
    seed: int = 0
    threads: int | None = None
    symmetrized_site_update: bool = False

    def validate(self) -> None:
        if self.mu <= 0 or self.nu <= 0:
            raise ValueError(f"penalties must be positive: mu={self.mu}, nu={self.nu}")
        if self.eps < 0:
            raise ValueError(f"dual step must be nonnegative: eps={self.eps}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol_window < 1:
            raise ValueError("tol_window must be at least 1")


@dataclass
class ConvergenceRecord:
    iteration: int
    energy_per_site: float
    energy_delta: float
    feas_error: float
    wall_ms: float


@dataclass
class SolverState:
    """Mutable iterate of the general solver (stacked over the pair list)."""

    rho: np.ndarray          # (M, m, m)
    rho_pair: np.ndarray     # (P, m^2, m^2)
    rho_tilde: np.ndarray    # (P, m^2, m^2)
    lam_pair: np.ndarray     # (P, m^2, m^2)
    lam_left: np.ndarray     # (P, m, m)
    lam_right: np.ndarray    # (P, m, m)
    x: np.ndarray            # (M n, M n)
    iteration: int = 0
    prev_energy_per_site: float = np.nan
    below_count: int = 0


@dataclass
class SolveResult:
    energy: float
    energy_per_site: float
    marginals: MarginalSet
    duals: DualState
    history: list[ConvergenceRecord]
    iterations: int
    converged: bool
    stop_reason: str
    state: object = None


class StopTracker:
    """Counts consecutive iterations with a small per-site energy change."""

    def __init__(self, config: SolverConfig, initial_energy: float, count: int = 0):
        self.tol = config.energy_tol
        self.window = config.tol_window
        self.prev = initial_energy
        self.count = count

    def update(self, energy_per_site: float) -> tuple[float, bool]:
        delta = energy_per_site - self.prev
        self.prev = energy_per_site
        if self.tol > 0 and abs(delta) < self.tol:
            self.count += 1
        else:
            self.count = 0
        return delta, self.count >= self.window


def _check_divergence(energy_per_site: float, scale: float) -> None:
    if not np.isfinite(energy_per_site) or abs(energy_per_site) > DIVERGENCE_FACTOR * scale:
        raise DivergenceError(
            f"per-site energy {energy_per_site:.3e} exceeded {DIVERGENCE_FACTOR:.0e} x "
            f"the Hamiltonian scale {scale:.3e}; the iteration has diverged")


# ---------------------------------------------------------------------------
# Stacked problem view
# ---------------------------------------------------------------------------

class _StackedProblem:
    """Pair-indexed dense views of a cluster problem for batched updates."""

    def __init__(self, problem: ClusterProblem):
        self.problem = problem
        self.pairs = pair_list(problem.n_clusters)
        self.left = np.array([i for (i, _) in self.pairs])
        self.right = np.array([j for (_, j) in self.pairs])
        m2 = problem.pair_dim
        self.h_pair = np.zeros((len(self.pairs), m2, m2))
        for k, (i, j) in enumerate(self.pairs):
            h = problem.h_pair.get((i, j))
            if h is not None:
                self.h_pair[k] = h
        self.h_single = problem.h_single
        self.norm = problem.hamiltonian_norm()

    def energy(self, rho: np.ndarray, rho_pair: np.ndarray) -> float:
        total = float(np.einsum('ipq,iqp->', self.h_single, rho))
        total += float(np.einsum('kpq,kqp->', self.h_pair, rho_pair))
        return total


def initial_state(problem: ClusterProblem) -> SolverState:
    """Identity-based start: unit-trace identity marginals, zero multipliers,
    identity dual certificate."""
    m_cl, m, n = problem.n_clusters, problem.local_dim, problem.basis.n_ops
    if m_cl < 2:
        raise ValueError("need at least two clusters")
    pairs = pair_list(m_cl)
    p = len(pairs)
    m2 = m * m
    eye_pair = np.eye(m2) / m2
    return SolverState(
        rho=np.tile(np.eye(m) / m, (m_cl, 1, 1)),
        rho_pair=np.tile(eye_pair, (p, 1, 1)),
        rho_tilde=np.tile(eye_pair, (p, 1, 1)),
        lam_pair=np.zeros((p, m2, m2)),
        lam_left=np.zeros((p, m, m)),
        lam_right=np.zeros((p, m, m)),
        x=np.eye(m_cl * n),
    )


def effective_pair_blocks(problem: ClusterProblem, x: np.ndarray,
                          pairs: list[tuple[int, int]],
                          h_pair_stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacked effective Hamiltonians for the current dual certificate."""
    basis = problem.basis
    m_cl, n = problem.n_clusters, basis.n_ops
    x4 = x.reshape(m_cl, n, m_cl, n)
    diag_blocks = np.stack([x4[i, :, i, :] for i in range(m_cl)])
    h_single_eff = sym_part(problem.h_single - lift_block_diag(diag_blocks, basis))
    off_blocks = np.stack([x4[i, :, j, :] for (i, j) in pairs])
    lifted = lift_block_pair(off_blocks, basis)
    h_pair_eff = h_pair_stack - (lifted + lifted.transpose(0, 2, 1))
    return h_single_eff, h_pair_eff


def update_pair_marginals(rho: np.ndarray, rho_tilde: np.ndarray,
                          lam_pair: np.ndarray, lam_left: np.ndarray,
                          lam_right: np.ndarray, h_pair_eff: np.ndarray,
                          left: np.ndarray, right: np.ndarray,
                          mu: float, nu: float) -> np.ndarray:
    """Exact minimizer of the per-pair quadratic model (all pairs at once)."""
    m = rho.shape[-1]
    shape = (m, m)
    rhs = (mu * rho_tilde
           + embed_second(nu * rho[left] - lam_left, shape)
           + embed_first(nu * rho[right] - lam_right, shape)
           + lam_pair - h_pair_eff)
    return sym_part(pair_quadratic_inverse(rhs, shape, mu, nu))


def update_aux(rho_pair: np.ndarray, lam_pair: np.ndarray, mu: float) -> np.ndarray:
    """Cone projection of the dualized pair split."""
    return psd_project(rho_pair - lam_pair / mu)


def update_site_marginals(rho_pair: np.ndarray, lam_left: np.ndarray,
                          lam_right: np.ndarray, h_single_eff: np.ndarray,
                          left: np.ndarray, right: np.ndarray,
                          n_clusters: int, nu: float) -> np.ndarray:
    """Trace-constrained least-squares site update (exact unit trace)."""
    if n_clusters < 2:
        raise ValueError("site update requires at least two clusters")
    m = h_single_eff.shape[-1]
    shape = (m, m)
    acc = -h_single_eff.copy()
    np.add.at(acc, left, nu * partial_trace_second(rho_pair, shape) + lam_left)
    np.add.at(acc, right, nu * partial_trace_first(rho_pair, shape) + lam_right)
    rho_new = acc / (nu * (n_clusters - 1))
    z = (1.0 - np.trace(rho_new, axis1=-2, axis2=-1)) / m
    rho_new += z[:, None, None] * np.eye(m)
    return sym_part(rho_new)


def update_local_duals(state: SolverState, nu: float, mu: float,
                       left: np.ndarray, right: np.ndarray) -> None:
    """Multiplier ascent on the split and partial-trace constraints (in place)."""
    m = state.rho.shape[-1]
    shape = (m, m)
    state.lam_pair += mu * (state.rho_tilde - state.rho_pair)
    state.lam_left += nu * (partial_trace_second(state.rho_pair, shape) - state.rho[left])
    state.lam_right += nu * (partial_trace_first(state.rho_pair, shape) - state.rho[right])


def assemble_moments(problem: ClusterProblem, rho: np.ndarray,
                     rho_pair: np.ndarray, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Dense moment matrix from stacked marginals."""
    basis = problem.basis
    m_cl, n = problem.n_clusters, basis.n_ops
    g = np.zeros((m_cl * n, m_cl * n))
    diag = moment_block_diag(rho, basis)
    for i in range(m_cl):
        g[i * n:(i + 1) * n, i * n:(i + 1) * n] = diag[i]
    off = moment_block_pair(rho_pair, basis)
    for k, (i, j) in enumerate(pairs):
        g[i * n:(i + 1) * n, j * n:(j + 1) * n] = off[k]
        g[j * n:(j + 1) * n, i * n:(i + 1) * n] = off[k].T
    return sym_part(g)


def update_global_dual(x: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    """Projected ascent step on the global dual certificate.

    The dual objective's gradient in the certificate is the negative of the
    moment matrix (the certificate enters the Lagrangian as ``-<X, G>``), so
    ascent steps against ``g``; stepping along ``+g`` drives the dual value
    to minus infinity and the iteration diverges.
    """
    return psd_project(x - eps * g)


def _feas_error(state: SolverState, n_clusters: int, left: np.ndarray,
                right: np.ndarray) -> float:
    m = state.rho.shape[-1]
    shape = (m, m)
    tr2 = partial_trace_second(state.rho_pair, shape)
    tr1 = partial_trace_first(state.rho_pair, shape)
    total = float(np.sum((tr2 - state.rho[left]) ** 2))
    total += float(np.sum((tr1 - state.rho[right]) ** 2))
    total += float(np.sum((state.rho_pair - state.rho_tilde) ** 2))
    return float(np.sqrt(total / (n_clusters - 1)))


def _primal_phases(stacked: _StackedProblem, state: SolverState,
                   config: SolverConfig, h_single_eff: np.ndarray,
                   h_pair_eff: np.ndarray) -> None:
    """Pair, aux, site, and local-dual phases (everything except the X step)."""
    left, right = stacked.left, stacked.right
    state.rho_pair = update_pair_marginals(
        state.rho, state.rho_tilde, state.lam_pair, state.lam_left,
        state.lam_right, h_pair_eff, left, right, config.mu, config.nu)
    state.rho_tilde = update_aux(state.rho_pair, state.lam_pair, config.mu)
    state.rho = update_site_marginals(
        state.rho_pair, state.lam_left, state.lam_right, h_single_eff,
        left, right, stacked.problem.n_clusters, config.nu)
    update_local_duals(state, config.nu, config.mu, left, right)


def _result_from_state(problem: ClusterProblem, stacked: _StackedProblem,
                       state: SolverState, history: list[ConvergenceRecord],
                       converged: bool, reason: str) -> SolveResult:
    pairs = stacked.pairs
    marginals = MarginalSet(
        rho_single=state.rho.copy(),
        rho_pair={pk: state.rho_pair[k].copy() for k, pk in enumerate(pairs)})
    duals = DualState(
        x=state.x.copy(),
        lam_pair={pk: state.lam_pair[k].copy() for k, pk in enumerate(pairs)},
        lam_left={pk: state.lam_left[k].copy() for k, pk in enumerate(pairs)},
        lam_right={pk: state.lam_right[k].copy() for k, pk in enumerate(pairs)})
    energy = stacked.energy(state.rho, state.rho_pair)
    return SolveResult(
        energy=energy,
        energy_per_site=energy / problem.n_sites,
        marginals=marginals, duals=duals, history=history,
        iterations=state.iteration, converged=converged, stop_reason=reason,
        state=state)


def solve(problem: ClusterProblem, config: SolverConfig | None = None,
          state: SolverState | None = None, callback=None,
          eps_schedule=None) -> SolveResult:
    """Run the practical interleaved scheme until convergence or ``max_iters``.

    ``callback(record, state)`` is invoked once per iteration (convergence
    streaming, checkpointing).  ``eps_schedule(iteration) -> float`` overrides
    the constant dual step when provided.
    """
    config = config or SolverConfig()
    config.validate()
    stacked = _StackedProblem(problem)
    if state is None:
        state = initial_state(problem)
    n_sites = problem.n_sites
    tracker = StopTracker(
        config,
        initial_energy=(stacked.energy(state.rho, state.rho_pair) / n_sites
                        if np.isnan(state.prev_energy_per_site)
                        else state.prev_energy_per_site),
        count=state.below_count)
    history: list[ConvergenceRecord] = []
    converged = False
    reason = "max_iters"
    with thread_limit(config.threads):
        for _ in range(config.max_iters - state.iteration):
            t0 = time.perf_counter()
            eps = config.eps if eps_schedule is None else float(eps_schedule(state.iteration))
            h_single_eff, h_pair_eff = effective_pair_blocks(
                problem, state.x, stacked.pairs, stacked.h_pair)
            _primal_phases(stacked, state, config, h_single_eff, h_pair_eff)
            g = assemble_moments(problem, state.rho, state.rho_pair, stacked.pairs)
            state.x = update_global_dual(state.x, g, eps)
            state.iteration += 1

            e_site = stacked.energy(state.rho, state.rho_pair) / n_sites
            _check_divergence(e_site, stacked.norm)
            delta, stop = tracker.update(e_site)
            state.prev_energy_per_site = e_site
            state.below_count = tracker.count
            record = ConvergenceRecord(
                iteration=state.iteration, energy_per_site=e_site,
                energy_delta=delta,
                feas_error=_feas_error(state, problem.n_clusters,
                                       stacked.left, stacked.right),
                wall_ms=(time.perf_counter() - t0) * 1e3)
            history.append(record)
            if callback is not None:
                callback(record, state)
            if state.iteration % LOG_EVERY == 0:
                logger.info("iter %6d  energy/site % .9f  delta % .3e  feas %.3e",
                            record.iteration, e_site, delta, record.feas_error)
            if stop:
                converged = True
                reason = "energy_tol"
                break
    return _result_from_state(problem, stacked, state, history, converged, reason)


def solve_reference(problem: ClusterProblem, config: SolverConfig | None = None
                    ) -> SolveResult:
    """Exact dual ascent with a converged inner splitting loop (desk scale).

    Between dual steps, the pair/aux/site/multiplier phases iterate until the
    inner energy stabilizes below ``inner_tol`` (or ``inner_iters`` is hit),
    approximating the exact partial-dual oracle; the outer loop then takes
    the projected ascent step.  Used to validate the practical scheme.
    """
    config = config or SolverConfig()
    config.validate()
    stacked = _StackedProblem(problem)
    state = initial_state(problem)
    n_sites = problem.n_sites
    tracker = StopTracker(config, stacked.energy(state.rho, state.rho_pair) / n_sites)
    history: list[ConvergenceRecord] = []
    converged = False
    reason = "max_iters"
    for outer in range(config.max_iters):
        t0 = time.perf_counter()
        h_single_eff, h_pair_eff = effective_pair_blocks(
            problem, state.x, stacked.pairs, stacked.h_pair)
        inner_prev = np.inf
        for _ in range(config.inner_iters):
            _primal_phases(stacked, state, config, h_single_eff, h_pair_eff)
            e_inner = stacked.energy(state.rho, state.rho_pair) / n_sites
            if abs(e_inner - inner_prev) < config.inner_tol:
                break
            inner_prev = e_inner
        g = assemble_moments(problem, state.rho, state.rho_pair, stacked.pairs)
        state.x = update_global_dual(state.x, g, config.eps)
        state.iteration = outer + 1
        e_site = stacked.energy(state.rho, state.rho_pair) / n_sites
        _check_divergence(e_site, stacked.norm)
        delta, stop = tracker.update(e_site)
        history.append(ConvergenceRecord(
            iteration=state.iteration, energy_per_site=e_site, energy_delta=delta,
            feas_error=_feas_error(state, problem.n_clusters, stacked.left,
                                   stacked.right),
            wall_ms=(time.perf_counter() - t0) * 1e3))
        if stop:
            converged = True
            reason = "energy_tol"
            break
    return _result_from_state(problem, stacked, state, history, converged, reason)
