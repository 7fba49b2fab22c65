"""Reference energies and exact reduced marginals for small problems.

The global Hamiltonian is assembled from the exact same cluster terms the
relaxation solvers consume, lifted by Kronecker products in cluster-major
tensor order.  For graded (fermionic) problems a pair term splits into its
even-even and odd-odd graded components; the odd-odd component carries the
parity string of the clusters sitting between the pair, which is what makes
the lifted operator agree with the abstract fermionic one for any cluster
distance, wrap-around bonds included.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import sym_part
from .problem import ClusterProblem
from .sdp_core import MarginalSet

logger = logging.getLogger(__name__)

DENSE_DIM_CAP = 2 ** 14
LANCZOS_DIM_CAP = 2 ** 22


def _grading_bits(problem: ClusterProblem) -> np.ndarray:
    """Z2 grading of the cluster basis states (all even for spins)."""
    return (problem.basis.state_parity < 0).astype(np.uint8)


def _split_graded(w: np.ndarray, bits: np.ndarray, tol: float = 1e-12
                  ) -> tuple[np.ndarray, np.ndarray | None]:
    """Split a pair term into even-even and odd-odd graded 4-tensors."""
    m = bits.shape[0]
    w4 = w.reshape(m, m, m, m)
    if not bits.any():
        return w4, None
    odd_left = (bits[:, None] ^ bits[None, :]).astype(bool)    # index pair (a, c)
    mask_oo = odd_left[:, None, :, None] & odd_left[None, :, None, :]
    mask_ee = ~odd_left[:, None, :, None] & ~odd_left[None, :, None, :]
    w_ee = np.where(mask_ee, w4, 0.0)
    w_oo = np.where(mask_oo, w4, 0.0)
    resid = np.abs(w4 - w_ee - w_oo).max()
    if resid > tol * max(1.0, np.abs(w4).max()):
        raise ValueError("pair term has parity-violating components; "
                         "cannot be lifted to the global space")
    return w_ee, (w_oo if np.abs(w_oo).max() > 0 else None)


class GlobalHamiltonianOperator:
    """Matrix-free action of the assembled problem Hamiltonian.

    The state vector is indexed cluster-major: factor ``i`` of the tensor
    product is cluster ``i``'s local space, most significant first.
    """

    def __init__(self, problem: ClusterProblem):
        m_cl = problem.n_clusters
        m = problem.local_dim
        self.dim = m ** m_cl
        self.n_clusters = m_cl
        self.local_dim = m
        bits = _grading_bits(problem)
        z_local = 1.0 - 2.0 * bits.astype(float)
        self._singles = [(g, problem.h_single[g]) for g in range(m_cl)
                         if np.abs(problem.h_single[g]).max() > 0]
        self._pairs = []
        for (g, d), w in problem.h_pair.items():
            w_ee, w_oo = _split_graded(w, bits)
            zgap = None
            if w_oo is not None:
                gap = d - g - 1
                zgap = np.ones(1)
                for _ in range(gap):
                    zgap = np.kron(zgap, z_local)
            self._pairs.append((g, d, w_ee, w_oo, zgap))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        m, m_cl = self.local_dim, self.n_clusters
        out = np.zeros_like(v)
        for g, h in self._singles:
            v3 = v.reshape(m ** g, m, -1)
            out += np.einsum('ab,xbz->xaz', h, v3).reshape(v.shape)
        for g, d, w_ee, w_oo, zgap in self._pairs:
            gapdim = m ** (d - g - 1)
            v5 = v.reshape(m ** g, m, gapdim, m, -1)
            out += np.einsum('abcd,ecgdf->eagbf', w_ee, v5,
                             optimize=True).reshape(v.shape)
            if w_oo is not None:
                v5z = v5 * zgap[None, None, :, None, None]
                out += np.einsum('abcd,ecgdf->eagbf', w_oo, v5z,
                                 optimize=True).reshape(v.shape)
        return out

    def dense(self) -> np.ndarray:
        """Materialize the operator (column by column in chunks)."""
        if self.dim > DENSE_DIM_CAP:
            raise ValueError(f"refusing to densify dimension {self.dim} > {DENSE_DIM_CAP}; "
                             "use the Lanczos path")
        h = np.empty((self.dim, self.dim))
        chunk = max(1, min(self.dim, 2 ** 22 // self.dim))
        eye = np.eye(self.dim)
        for start in range(0, self.dim, chunk):
            cols = eye[start:start + chunk]
            h[:, start:start + chunk] = np.stack(
                [self.matvec(c) for c in cols], axis=1)
        return sym_part(h)


def dense_hamiltonian(problem: ClusterProblem) -> np.ndarray:
    return GlobalHamiltonianOperator(problem).dense()


def ground_energy_dense(problem: ClusterProblem) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and eigenvector of the assembled global Hamiltonian.

    Refuses dimensions beyond ``2**14``; use :func:`ground_energy_lanczos`
    there instead.
    """
    op = GlobalHamiltonianOperator(problem)
    if op.dim > DENSE_DIM_CAP:
        raise ValueError(f"Hilbert dimension {op.dim} exceeds the dense cap "
                         f"{DENSE_DIM_CAP}; use ground_energy_lanczos")
    w, v = np.linalg.eigh(op.dense())
    return float(w[0]), v[:, 0]


@dataclass
class LanczosResult:
    energy: float
    residual: float
    converged: bool
    iterations: int
    vector: np.ndarray | None = None


def lanczos_min(matvec, dim: int, krylov_dim: int = 300, tol: float = 1e-10,
                seed: int = 0, return_vector: bool = False) -> LanczosResult:
    """Smallest eigenvalue by Lanczos with full reorthogonalization.

    The Krylov basis is kept explicitly (the dimension caps keep that
    affordable) and every new direction is orthogonalized against all of it,
    twice, which suppresses ghost eigenvalues.  Convergence is declared when
    the Ritz residual ``beta * |s_last|`` drops below ``tol``; running out of
    ``krylov_dim`` steps returns the best estimate flagged as unconverged.
    """
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    basis = np.empty((krylov_dim + 1, dim))
    basis[0] = q
    alphas: list[float] = []
    betas: list[float] = []
    theta = np.inf
    svec = np.array([1.0])
    resid = np.inf
    k = 0
    for k in range(krylov_dim):
        w = matvec(basis[k])
        alphas.append(float(basis[k] @ w))
        active = basis[:k + 1]
        for _ in range(2):
            w -= active.T @ (active @ w)
        beta = float(np.linalg.norm(w))
        tmat = np.diag(alphas)
        if betas:
            off = np.array(betas)
            tmat += np.diag(off, 1) + np.diag(off, -1)
        evals, evecs = np.linalg.eigh(tmat)
        theta, svec = float(evals[0]), evecs[:, 0]
        resid = beta * abs(svec[-1])
        if resid < tol or beta < 1e-13 * max(1.0, abs(theta)):
            vector = basis[:k + 1].T @ svec if return_vector else None
            if vector is not None:
                vector /= np.linalg.norm(vector)
            return LanczosResult(theta, resid, True, k + 1, vector)
        betas.append(beta)
        basis[k + 1] = w / beta
    vector = basis[:len(svec)].T @ svec if return_vector else None
    if vector is not None:
        vector /= np.linalg.norm(vector)
    return LanczosResult(theta, resid, False, k + 1, vector)


def ground_state_lanczos(problem: ClusterProblem, krylov_dim: int = 300,
                         tol: float = 1e-10, seed: int = 0,
                         return_vector: bool = False) -> LanczosResult:
    op = GlobalHamiltonianOperator(problem)
    if op.dim > LANCZOS_DIM_CAP:
        raise ValueError(f"Hilbert dimension {op.dim} exceeds the Lanczos cap "
                         f"{LANCZOS_DIM_CAP}")
    result = lanczos_min(op.matvec, op.dim, krylov_dim=krylov_dim, tol=tol,
                         seed=seed, return_vector=return_vector)
    if not result.converged:
        warnings.warn(f"Lanczos did not converge in {krylov_dim} steps: "
                      f"residual {result.residual:.2e}; energy is a best estimate",
                      stacklevel=2)
    return result


def ground_energy_lanczos(problem: ClusterProblem, krylov_dim: int = 300,
                          tol: float = 1e-10, seed: int = 0) -> float:
    """Lowest eigenvalue via matrix-free Lanczos (dimensions up to ``2**22``)."""
    return ground_state_lanczos(problem, krylov_dim=krylov_dim, tol=tol,
                                seed=seed).energy


# ---------------------------------------------------------------------------
# Exact reduced marginals
# ---------------------------------------------------------------------------

def _fermionic_reorder(vec: np.ndarray, n_modes: int, front: list[int]) -> np.ndarray:
    """Reorder fermionic modes so ``front`` comes first, with exchange signs.

    The amplitude of each occupation basis state picks up the parity of the
    permutation restricted to its occupied modes.
    """
    rest = [p for p in range(n_modes) if p not in front]
    order = front + rest
    pos = np.empty(n_modes, dtype=int)
    for new, old in enumerate(order):
        pos[old] = new
    dim = vec.shape[0]
    idx = np.arange(dim, dtype=np.int64)
    occ = [((idx >> (n_modes - 1 - p)) & 1).astype(np.int64) for p in range(n_modes)]
    inv = np.zeros(dim, dtype=np.int64)
    for p in range(n_modes):
        for q in range(p + 1, n_modes):
            if pos[p] > pos[q]:
                inv += occ[p] & occ[q]
    signed = vec * (1 - 2 * (inv & 1)).astype(vec.dtype)
    tens = signed.reshape((2,) * n_modes)
    return tens.transpose(order).reshape(-1)


def _cluster_modes(problem: ClusterProblem, cluster: int) -> list[int]:
    length = problem.clustering.sites_per_cluster
    return list(range(cluster * length, (cluster + 1) * length))


def _reduced(vec: np.ndarray, keep_dim: int) -> np.ndarray:
    v = vec.reshape(keep_dim, -1)
    return v @ v.conj().T


def exact_marginals(ground_vector: np.ndarray, problem: ClusterProblem) -> MarginalSet:
    """All one- and two-cluster reduced density matrices of a global state.

    The vector is interpreted in the oracle's cluster-major tensor order.
    For graded problems the pair marginal for clusters ``(i, j)`` is taken in
    the pair context (cluster ``i``'s modes first), which requires reordering
    modes with fermionic exchange signs before tracing.
    """
    m_cl = problem.n_clusters
    m = problem.local_dim
    vec = np.asarray(ground_vector)
    if vec.shape != (m ** m_cl,):
        raise ValueError("ground vector length does not match the problem")
    nrm = np.linalg.norm(vec)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("ground vector must be normalized")
    fermionic = problem.fermionic
    n_modes = problem.clustering.sites_per_cluster * m_cl

    rho_single = np.empty((m_cl, m, m))
    if fermionic:
        for i in range(m_cl):
            w = _fermionic_reorder(vec, n_modes, _cluster_modes(problem, i))
            rho_single[i] = np.real(_reduced(w, m))
    else:
        tens = vec.reshape((m,) * m_cl)
        for i in range(m_cl):
            w = np.moveaxis(tens, i, 0).reshape(-1)
            rho_single[i] = np.real(_reduced(w, m))

    rho_pair: dict[tuple[int, int], np.ndarray] = {}
    for i in range(m_cl):
        for j in range(i + 1, m_cl):
            if fermionic:
                front = _cluster_modes(problem, i) + _cluster_modes(problem, j)
                w = _fermionic_reorder(vec, n_modes, front)
            else:
                tens = vec.reshape((m,) * m_cl)
                w = np.moveaxis(tens, (i, j), (0, 1)).reshape(-1)
            rho_pair[(i, j)] = np.real(_reduced(w, m * m))
    return MarginalSet(rho_single=rho_single, rho_pair=rho_pair)


def free_fermion_energy(lattice) -> float:
    """Filled-negative-mode energy of the U=0 hopping model.

    The one-body hopping matrix has ``-1`` on every bond; the many-body
    ground energy is the sum of its negative eigenvalues.
    """
    n = lattice.n_sites
    t = np.zeros((n, n))
    for (i, j) in lattice.bonds:
        t[i, j] = t[j, i] = -1.0
    evals = np.linalg.eigvalsh(t)
    return float(evals[evals < 0].sum())
