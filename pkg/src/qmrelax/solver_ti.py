"""Translation-invariant splitting solver.

Stores one site marginal, one pair marginal per lattice displacement, and
only the first block row of the global dual certificate.  The projected
ascent step diagonalizes the (block-circulant) certificate through the block
discrete Fourier transform: transform the block row, project each Fourier
block onto the PSD cone, transform back.  Conjugate-mirror displacement
pairs share one projection, and the residual imaginary part of the output is
checked against tolerance before being discarded.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .errors import BrokenSymmetryError
from .linalg import (block_dft, block_idft, embed_first, embed_second,
                     hermitize_blocks, pair_quadratic_inverse,
                     partial_trace_first, partial_trace_second, psd_project,
                     sym_part)
from .problem import ClusterProblem
from .sdp_core import (DualState, MarginalSet, lift_block_diag, lift_block_pair,
                       moment_block_diag, moment_block_pair)
from .solver import (ConvergenceRecord, SolveResult, SolverConfig, StopTracker,
                     _check_divergence)
from .util import thread_limit

logger = logging.getLogger(__name__)

LOG_EVERY = 500
IMAG_RTOL = 1e-9


@dataclass
class TIState:
    """Mutable iterate of the translation-invariant solver.

    Displacement-indexed arrays use the row-major linearization of the
    cluster grid; index 0 is the zero displacement, so pair quantities are
    stored in entries ``1..M-1``.
    """

    rho0: np.ndarray        # (m, m)
    rho_pair: np.ndarray    # (M-1, m^2, m^2), displacement j = index + 1
    rho_tilde: np.ndarray   # (M-1, m^2, m^2)
    lam_pair: np.ndarray    # (M-1, m^2, m^2)
    lam_left: np.ndarray    # (M-1, m, m)
    lam_right: np.ndarray   # (M-1, m, m)
    x_row: np.ndarray       # (M, n, n) real, index 0 = diagonal block
    iteration: int = 0
    prev_energy_per_site: float = np.nan
    below_count: int = 0


def initial_state_ti(problem: ClusterProblem) -> TIState:
    m_cl, m, n = problem.n_clusters, problem.local_dim, problem.basis.n_ops
    if m_cl < 2:
        raise ValueError("need at least two clusters")
    m2 = m * m
    d = m_cl - 1
    x_row = np.zeros((m_cl, n, n))
    x_row[0] = np.eye(n)
    return TIState(
        rho0=np.eye(m) / m,
        rho_pair=np.tile(np.eye(m2) / m2, (d, 1, 1)),
        rho_tilde=np.tile(np.eye(m2) / m2, (d, 1, 1)),
        lam_pair=np.zeros((d, m2, m2)),
        lam_left=np.zeros((d, m, m)),
        lam_right=np.zeros((d, m, m)),
        x_row=x_row,
    )


def _mirror_partition(grid: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split grid indices into self-mirror points and (canonical, mirror) pairs.

    The mirror of a displacement ``k`` is ``-k`` modulo the grid; Fourier
    blocks of a real block row at mirrored indices are complex conjugates,
    so only canonical representatives need projecting.
    """
    total = int(np.prod(grid))
    coords = np.array(list(np.ndindex(*grid)))
    mirror = np.ravel_multi_index(((-coords) % np.array(grid)).T, grid)
    idx = np.arange(total)
    self_m = idx[mirror == idx]
    canon = idx[(mirror > idx)]
    return self_m, canon, mirror[canon]


def row_symmetry_defect(x_row: np.ndarray, grid: tuple[int, ...]) -> float:
    """Max deviation from the mirror-transpose symmetry of a real block row."""
    total = x_row.shape[0]
    coords = np.array(list(np.ndindex(*grid)))
    mirror = np.ravel_multi_index(((-coords) % np.array(grid)).T, grid)
    return float(np.abs(x_row - x_row[mirror].transpose(0, 2, 1)).max())


def update_x_ti(x_row: np.ndarray, g_row: np.ndarray, eps: float,
                grid: tuple[int, ...], rtol: float = IMAG_RTOL) -> np.ndarray:
    """Projected dual ascent step on the block row of a block-circulant matrix.

    ``x_row - eps * g_row`` (ascent is against the moment row, which is the
    negative dual gradient) is transformed entrywise by the unitary block
    DFT, each Fourier block is Hermitized (tolerance ``rtol``, beyond which a
    broken-symmetry error is raised) and projected onto the PSD cone, and the
    row is transformed back.  The imaginary residue of the result must vanish
    by conjugate symmetry and is discarded after a tolerance check.
    """
    total = int(np.prod(grid))
    n = x_row.shape[-1]
    if x_row.shape != (total, n, n) or g_row.shape != (total, n, n):
        raise ValueError("block rows must be shaped (grid points, n, n)")
    xp = x_row - eps * g_row
    xhat = block_dft(xp, grid).reshape(total, n, n)
    xhat = hermitize_blocks(xhat, rtol=rtol)
    self_m, canon, canon_mirror = _mirror_partition(grid)
    y = np.empty_like(xhat)
    if len(self_m):
        # self-mirror blocks are real symmetric up to round-off
        y[self_m] = psd_project(xhat[self_m].real).astype(complex)
    if len(canon):
        proj = psd_project(xhat[canon])
        y[canon] = proj
        y[canon_mirror] = np.conj(proj)
    x_new = block_idft(y.reshape(grid + (n, n)), grid).reshape(total, n, n)
    imag = np.abs(x_new.imag).max()
    scale = max(np.abs(x_new.real).max(), 1.0)
    if imag > rtol * scale:
        raise BrokenSymmetryError(
            f"imaginary residue {imag:.3e} of the projected block row exceeds "
            f"tolerance; translation symmetry is broken upstream", dim=n)
    out = x_new.real
    # keep the mirror-transpose row symmetry exact against round-off drift
    coords = np.array(list(np.ndindex(*grid)))
    mirror = np.ravel_multi_index(((-coords) % np.array(grid)).T, grid)
    return 0.5 * (out + out[mirror].transpose(0, 2, 1))


def _energy_per_cluster(problem: ClusterProblem, h_pair_row: np.ndarray,
                        rho0: np.ndarray, rho_pair: np.ndarray) -> float:
    e = float(np.trace(problem.h_single[0] @ rho0))
    e += 0.5 * float(np.einsum('kpq,kqp->', h_pair_row[1:], rho_pair))
    return e


def _feas_error_ti(state: TIState, m: int, m_cl: int) -> float:
    shape = (m, m)
    tr2 = partial_trace_second(state.rho_pair, shape)
    tr1 = partial_trace_first(state.rho_pair, shape)
    total = float(np.sum((tr2 - state.rho0) ** 2))
    total += float(np.sum((tr1 - state.rho0) ** 2))
    total += float(np.sum((state.rho_pair - state.rho_tilde) ** 2))
    return float(np.sqrt(total / (m_cl - 1)))


def marginal_set_from_ti(problem: ClusterProblem, state: TIState) -> MarginalSet:
    """Expand the reduced representation to a full marginal set (desk scale)."""
    m_cl = problem.n_clusters
    rho_single = np.tile(state.rho0, (m_cl, 1, 1))
    rho_pair = {}
    for i in range(m_cl):
        for j in range(i + 1, m_cl):
            d = problem.clustering.displacement_index(i, j)
            rho_pair[(i, j)] = state.rho_pair[d - 1].copy()
    return MarginalSet(rho_single=rho_single, rho_pair=rho_pair)


def solve_ti(problem: ClusterProblem, config: SolverConfig | None = None,
             state: TIState | None = None, callback=None,
             eps_schedule=None) -> SolveResult:
    """Run the translation-invariant scheme until convergence or ``max_iters``.

    Requires a translation-invariant problem (periodic lattice, congruent
    clusters, displacement-dependent couplings).  Phases mirror the general
    solver with all sites sharing one marginal; the site update accumulates
    the first-factor partial traces and multipliers over all displacements
    (``symmetrized_site_update`` additionally averages in the second-factor
    family).
    """
    config = config or SolverConfig()
    config.validate()
    if not problem.translation_invariant:
        raise ValueError("solve_ti requires a translation-invariant problem")
    problem.validate_translation_invariance()
    grid = problem.clustering.grid_dims
    m_cl, m, n = problem.n_clusters, problem.local_dim, problem.basis.n_ops
    m2 = m * m
    basis = problem.basis
    h0 = problem.h_single[0]
    h_pair_row = problem.displacement_hamiltonians()
    h_norm = problem.hamiltonian_norm()
    sites = problem.n_sites
    shape = (m, m)

    if state is None:
        state = initial_state_ti(problem)
    tracker = StopTracker(
        config,
        initial_energy=(m_cl * _energy_per_cluster(problem, h_pair_row, state.rho0,
                                                   state.rho_pair) / sites
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

            h0_eff = sym_part(h0 - lift_block_diag(state.x_row[0], basis))
            lifted = lift_block_pair(state.x_row[1:], basis)
            h_pair_eff = h_pair_row[1:] - (lifted + lifted.transpose(0, 2, 1))

            rhs = (config.mu * state.rho_tilde
                   + embed_second(config.nu * state.rho0 - state.lam_left, shape)
                   + embed_first(config.nu * state.rho0 - state.lam_right, shape)
                   + state.lam_pair - h_pair_eff)
            state.rho_pair = sym_part(
                pair_quadratic_inverse(rhs, shape, config.mu, config.nu))

            state.rho_tilde = psd_project(state.rho_pair - state.lam_pair / config.mu)

            tr2 = partial_trace_second(state.rho_pair, shape)
            tr1 = partial_trace_first(state.rho_pair, shape)
            acc = (config.nu * tr2 + state.lam_left).sum(axis=0)
            if config.symmetrized_site_update:
                acc = 0.5 * (acc + (config.nu * tr1 + state.lam_right).sum(axis=0))
            rho0_new = (acc - h0_eff) / (config.nu * (m_cl - 1))
            z = (1.0 - np.trace(rho0_new)) / m
            state.rho0 = sym_part(rho0_new + z * np.eye(m))

            state.lam_pair += config.mu * (state.rho_tilde - state.rho_pair)
            state.lam_left += config.nu * (tr2 - state.rho0)
            state.lam_right += config.nu * (tr1 - state.rho0)

            g_row = np.empty((m_cl, n, n))
            g_row[0] = moment_block_diag(state.rho0, basis)
            g_row[1:] = moment_block_pair(state.rho_pair, basis)
            state.x_row = update_x_ti(state.x_row, g_row, eps, grid)
            state.iteration += 1

            e_site = m_cl * _energy_per_cluster(problem, h_pair_row, state.rho0,
                                                state.rho_pair) / sites
            _check_divergence(e_site, h_norm)
            delta, stop = tracker.update(e_site)
            state.prev_energy_per_site = e_site
            state.below_count = tracker.count
            record = ConvergenceRecord(
                iteration=state.iteration, energy_per_site=e_site,
                energy_delta=delta, feas_error=_feas_error_ti(state, m, m_cl),
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

    energy = m_cl * _energy_per_cluster(problem, h_pair_row, state.rho0,
                                        state.rho_pair)
    duals = DualState(x=state.x_row.copy())
    return SolveResult(
        energy=energy, energy_per_site=energy / sites,
        marginals=MarginalSet(
            rho_single=state.rho0[None, :, :].copy(),
            rho_pair={(0, j): state.rho_pair[j - 1].copy()
                      for j in range(1, m_cl)}),
        duals=duals, history=history, iterations=state.iteration,
        converged=converged, stop_reason=reason, state=state)
