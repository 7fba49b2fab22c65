"""Problem-level assembly shared by the solvers.

This module turns marginal sets into the moment matrix of observable
correlations, turns the global dual matrix into effective cluster
Hamiltonians, and evaluates the primal objective and the feasibility metric.

For the complete matrix-unit observable basis (the default), moment blocks
and dual lifts are pure index permutations of the m^2 x m^2 pair matrices,
i.e. O(m^4) per block; graded (fermionic) bases add a diagonal parity twist.
Arbitrary bases fall back to an einsum contraction over the operator stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import partial_trace_first, partial_trace_second, sym_part
from .problem import ClusterProblem, OperatorBasis


@dataclass
class MarginalSet:
    """Primal variables: one density matrix per cluster and per cluster pair.

    ``rho_single[i]`` is m x m with unit trace; ``rho_pair[(i, j)]`` for
    ``i < j`` is m^2 x m^2 with cluster ``i`` in the first tensor factor.
    """

    rho_single: np.ndarray
    rho_pair: dict[tuple[int, int], np.ndarray]

    @property
    def n_clusters(self) -> int:
        return self.rho_single.shape[0]

    @property
    def local_dim(self) -> int:
        return self.rho_single.shape[-1]

    def pair(self, i: int, j: int) -> np.ndarray:
        """Pair marginal with cluster ``i`` first, swapping factors if needed."""
        if i < j:
            return self.rho_pair[(i, j)]
        m = self.local_dim
        r = self.rho_pair[(j, i)].reshape(m, m, m, m)
        return r.transpose(1, 0, 3, 2).reshape(m * m, m * m)


@dataclass
class DualState:
    """Dual variables of the splitting scheme.

    ``x`` is the global PSD certificate matrix (size M n x M n).  The three
    multiplier families live per ordered pair ``i < j``: ``lam_pair`` in pair
    space, and ``lam_left`` / ``lam_right`` in the single-cluster space (the
    natural codomain of the two partial-trace constraints; embedding them
    into pair space is handled by the adjoint maps where needed).
    """

    x: np.ndarray
    lam_pair: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    lam_left: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    lam_right: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


def pair_list(n_clusters: int) -> list[tuple[int, int]]:
    """All ordered cluster pairs ``i < j`` in row-major order."""
    return [(i, j) for i in range(n_clusters) for j in range(i + 1, n_clusters)]


# ---------------------------------------------------------------------------
# Moment-matrix blocks
# ---------------------------------------------------------------------------

def _column_parity_mask(basis: OperatorBasis) -> np.ndarray:
    """Per-operator odd-grading indicator as a float mask."""
    return basis.parities.astype(float)


def moment_block_diag(rho: np.ndarray, basis: OperatorBasis) -> np.ndarray:
    """Diagonal moment block ``B[a, b] = Tr[ops[a]^T ops[b] rho]`` (batched)."""
    rho = np.asarray(rho)
    m = basis.local_dim
    if basis.matrix_units:
        # B[(p,q),(r,s)] = delta_pr rho[s,q]  ->  I (x) rho^T
        eye = np.eye(m)
        out = np.einsum('pr,...sq->...pqrs', eye, rho)
        return out.reshape(rho.shape[:-2] + (m * m, m * m))
    ops = basis.ops
    return np.einsum('aji,bjk,...ki->...ab', ops, ops, rho, optimize=True)


def moment_block_pair(rho_pair: np.ndarray, basis: OperatorBasis) -> np.ndarray:
    """Off-diagonal moment block of a pair marginal (batched).

    ``B[a, b] = Tr[(ops[a]^T Z^p(b) (x) ops[b]) rho_pair]`` with ``Z`` the
    first factor's parity operator; the twist vanishes for ungraded bases.
    """
    rho_pair = np.asarray(rho_pair)
    m = basis.local_dim
    n = basis.n_ops
    lead = rho_pair.shape[:-2]
    if basis.matrix_units:
        r5 = rho_pair.reshape(lead + (m, m, m, m))
        perm = tuple(range(len(lead))) + tuple(len(lead) + k for k in (0, 2, 3, 1))
        g_even = r5.transpose(perm).reshape(lead + (n, n))
        if not basis.graded:
            return g_even
        z = basis.state_parity.reshape((1,) * len(lead) + (m, 1, 1, 1))
        r5_tw = r5 * z                            # (Z (x) I) rho
        g_odd = r5_tw.transpose(perm).reshape(lead + (n, n))
        pmask = _column_parity_mask(basis)
        return g_even * (1.0 - pmask) + g_odd * pmask
    ops = basis.ops
    odag = np.swapaxes(ops, -1, -2)
    r5 = rho_pair.reshape(lead + (m, m, m, m))
    g_even = np.einsum('aij,bkl,...jlik->...ab', odag, ops, r5, optimize=True)
    if not basis.graded:
        return g_even
    z = np.diag(basis.state_parity)
    odag_z = odag @ z
    g_odd = np.einsum('aij,bkl,...jlik->...ab', odag_z, ops, r5, optimize=True)
    pmask = _column_parity_mask(basis)
    return g_even * (1.0 - pmask) + g_odd * pmask


def lift_block_diag(x_block: np.ndarray, basis: OperatorBasis) -> np.ndarray:
    """Adjoint of :func:`moment_block_diag`: ``sum_ab X[a,b] ops[a]^T ops[b]``."""
    x_block = np.asarray(x_block)
    m = basis.local_dim
    if basis.matrix_units:
        return partial_trace_first(x_block, (m, m))
    ops = basis.ops
    return np.einsum('...ab,aji,bjk->...ik', x_block, ops, ops, optimize=True)


def lift_block_pair(x_block: np.ndarray, basis: OperatorBasis) -> np.ndarray:
    """One-sided pair lift ``sum_ab X[a,b] (ops[a]^T Z^p(b) (x) ops[b])`` (batched).

    Callers add the transposed term themselves where a symmetrized lift is
    required.
    """
    x_block = np.asarray(x_block)
    m = basis.local_dim
    n = basis.n_ops
    lead = x_block.shape[:-2]
    if basis.matrix_units:
        if basis.graded:
            pmask = _column_parity_mask(basis)
            x_even = x_block * (1.0 - pmask)
            x_odd = x_block * pmask
        else:
            x_even, x_odd = x_block, None
        w5 = x_even.reshape(lead + (m, m, m, m))
        perm = tuple(range(len(lead))) + tuple(len(lead) + k for k in (1, 2, 0, 3))
        lifted = w5.transpose(perm)
        if x_odd is not None:
            w5o = x_odd.reshape(lead + (m, m, m, m))
            lo = w5o.transpose(perm)
            # right-multiply by (Z (x) I): scale the first column factor index
            z = basis.state_parity.reshape((1,) * len(lead) + (1, 1, m, 1))
            lifted = lifted + lo * z
        return lifted.reshape(lead + (m * m, m * m))
    ops = basis.ops
    odag = np.swapaxes(ops, -1, -2)
    if basis.graded:
        pmask = _column_parity_mask(basis)
        z = np.diag(basis.state_parity)
        le = np.einsum('...ab,aij,bkl->...ikjl', x_block * (1.0 - pmask), odag, ops,
                       optimize=True)
        lo = np.einsum('...ab,aij,bkl->...ikjl', x_block * pmask, odag @ z, ops,
                       optimize=True)
        lifted = le + lo
    else:
        lifted = np.einsum('...ab,aij,bkl->...ikjl', x_block, odag, ops, optimize=True)
    return lifted.reshape(lead + (m * m, m * m))


# ---------------------------------------------------------------------------
# Whole-problem assembly
# ---------------------------------------------------------------------------

def moment_matrix(problem: ClusterProblem, marginals: MarginalSet) -> np.ndarray:
    """Assemble the full symmetric moment matrix (M n x M n).

    Diagonal blocks come from the one-cluster marginals, off-diagonal blocks
    from the pair marginals (transposed across the diagonal); the result is
    symmetrized defensively.
    """
    basis = problem.basis
    m_cl = problem.n_clusters
    n = basis.n_ops
    if marginals.rho_single.shape[0] != m_cl:
        raise ValueError("marginal set does not match problem size")
    g = np.zeros((m_cl * n, m_cl * n))
    for i in range(m_cl):
        g[i * n:(i + 1) * n, i * n:(i + 1) * n] = moment_block_diag(
            marginals.rho_single[i], basis)
    for (i, j) in pair_list(m_cl):
        if (i, j) not in marginals.rho_pair:
            raise ValueError(f"missing pair marginal ({i}, {j})")
        block = moment_block_pair(marginals.rho_pair[(i, j)], basis)
        g[i * n:(i + 1) * n, j * n:(j + 1) * n] = block
        g[j * n:(j + 1) * n, i * n:(i + 1) * n] = block.T
    return sym_part(g)


def effective_hamiltonians(problem: ClusterProblem, x: np.ndarray
                           ) -> tuple[np.ndarray, dict[tuple[int, int], np.ndarray]]:
    """Cluster Hamiltonians dressed by the global dual matrix.

    The single-cluster term subtracts the lift of the corresponding diagonal
    dual block; the pair term subtracts the symmetrized lift of the
    off-diagonal block.  (Dimensional consistency forces the pair coupling,
    an operator on the doubled space, as the base operator of the pair term.)
    Both outputs are symmetrized.
    """
    basis = problem.basis
    m_cl = problem.n_clusters
    n = basis.n_ops
    if x.shape != (m_cl * n, m_cl * n):
        raise ValueError(f"dual matrix shape {x.shape} does not match "
                         f"({m_cl * n}, {m_cl * n})")
    x4 = x.reshape(m_cl, n, m_cl, n)
    h_single_eff = np.empty_like(problem.h_single)
    for i in range(m_cl):
        h_single_eff[i] = sym_part(problem.h_single[i]
                                   - lift_block_diag(x4[i, :, i, :], basis))
    h_pair_eff: dict[tuple[int, int], np.ndarray] = {}
    for (i, j) in pair_list(m_cl):
        lifted = lift_block_pair(x4[i, :, j, :], basis)
        h_pair_eff[(i, j)] = problem.pair_hamiltonian(i, j) - (lifted + lifted.T)
    return h_single_eff, h_pair_eff


def primal_energy(problem: ClusterProblem, marginals: MarginalSet) -> float:
    """Objective value ``sum_i Tr[H_i rho_i] + sum_{i<j} Tr[H_ij rho_ij]``."""
    total = float(np.einsum('ipq,iqp->', problem.h_single, marginals.rho_single))
    for (i, j), h in problem.h_pair.items():
        total += float(np.trace(h @ marginals.rho_pair[(i, j)]))
    return total


def energy_per_site(problem: ClusterProblem, marginals: MarginalSet) -> float:
    return primal_energy(problem, marginals) / problem.n_sites


def feasibility_error(problem: ClusterProblem, marginals: MarginalSet,
                      aux: dict[tuple[int, int], np.ndarray]) -> float:
    """Root-mean-square violation of the coupling constraints.

    Sums, over all pairs ``i < j``, the squared Frobenius errors of the two
    partial-trace constraints and the primal/auxiliary split, normalized by
    ``M - 1``.
    """
    m = problem.local_dim
    m_cl = problem.n_clusters
    total = 0.0
    for (i, j) in pair_list(m_cl):
        r = marginals.rho_pair[(i, j)]
        total += float(np.sum((partial_trace_second(r, (m, m))
                               - marginals.rho_single[i]) ** 2))
        total += float(np.sum((partial_trace_first(r, (m, m))
                               - marginals.rho_single[j]) ** 2))
        total += float(np.sum((r - aux[(i, j)]) ** 2))
    return float(np.sqrt(total / (m_cl - 1)))
