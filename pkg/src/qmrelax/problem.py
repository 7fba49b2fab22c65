"""Shared problem containers: observable bases and assembled cluster problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .lattice import ClusterDecomposition, Lattice


@dataclass(frozen=True)
class OperatorBasis:
    """Collection of single-cluster observables entering the moment matrix.

    Parameters
    ----------
    ops : ndarray, shape (n, m, m)
        Real operators on one cluster's local space (not necessarily
        symmetric individually).
    parities : ndarray, shape (n,), optional
        Z2 grading of each operator.  Zero for spin problems.  For fermionic
        clusters an operator of odd grading picks up the cluster parity
        operator when lifted into the left slot of a pair context.
    state_parity : ndarray, shape (m,), optional
        Diagonal of the cluster parity operator, entries +-1.  All ones for
        spin problems.
    matrix_units : bool
        True when ``ops`` is exactly the complete matrix-unit family in
        p-major order; enables permutation-based fast paths downstream.
    """

    ops: np.ndarray
    parities: np.ndarray | None = None
    state_parity: np.ndarray | None = None
    matrix_units: bool = False

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=float)
        if ops.ndim != 3 or ops.shape[-1] != ops.shape[-2]:
            raise ValueError("ops must be a stack of square matrices")
        object.__setattr__(self, "ops", ops)
        m = ops.shape[-1]
        par = self.parities
        par = np.zeros(len(ops), dtype=np.uint8) if par is None else np.asarray(par, dtype=np.uint8)
        if par.shape != (len(ops),):
            raise ValueError("parities must have one entry per operator")
        object.__setattr__(self, "parities", par)
        sp = self.state_parity
        sp = np.ones(m) if sp is None else np.asarray(sp, dtype=float)
        if sp.shape != (m,):
            raise ValueError("state_parity must have one entry per basis state")
        object.__setattr__(self, "state_parity", sp)

    @property
    def n_ops(self) -> int:
        return self.ops.shape[0]

    @property
    def local_dim(self) -> int:
        return self.ops.shape[-1]

    @property
    def graded(self) -> bool:
        """Whether any operator carries odd parity (fermionic grading)."""
        return bool(np.any(self.parities))

    def column_signs(self) -> np.ndarray:
        """+-1 per operator: +1 for even grading, -1 for odd."""
        return 1.0 - 2.0 * self.parities.astype(float)


def complete_basis(m: int, state_parity: np.ndarray | None = None) -> OperatorBasis:
    """Complete matrix-unit basis ``E_pq`` of an m-dimensional local space.

    Ordering is p-major: ``ops[p * m + q] = E_pq``.  When ``state_parity`` is
    given (fermionic cluster), each unit inherits the grading
    ``parity(p) XOR parity(q)`` of the states it connects.
    """
    if m < 2:
        raise ValueError(f"local dimension must be at least 2, got {m}")
    ops = np.zeros((m * m, m, m))
    for p in range(m):
        for q in range(m):
            ops[p * m + q, p, q] = 1.0
    parities = None
    if state_parity is not None:
        sp = np.asarray(state_parity, dtype=float)
        bit = (sp < 0).astype(np.uint8)
        parities = np.array([bit[p] ^ bit[q] for p in range(m) for q in range(m)],
                            dtype=np.uint8)
    return OperatorBasis(ops=ops, parities=parities, state_parity=state_parity,
                         matrix_units=True)


@dataclass
class ClusterProblem:
    """A pairwise lattice Hamiltonian coarse-grained onto clusters.

    Single-cluster terms are accumulated in ``h_single`` and inter-cluster
    terms in ``h_pair``; cluster pairs without direct couplings are absent
    from the dict (they still carry relaxation variables downstream).  For
    translation-invariant problems ``h_pair[(gamma, delta)]`` depends only on
    the grid displacement ``delta - gamma`` and ``h_single`` is uniform.
    """

    clustering: ClusterDecomposition
    h_single: np.ndarray                      # (M, m, m)
    h_pair: dict[tuple[int, int], np.ndarray] # gamma < delta -> (m^2, m^2)
    basis: OperatorBasis
    translation_invariant: bool = False
    fermionic: bool = False
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def lattice(self) -> Lattice:
        return self.clustering.lattice

    @property
    def n_clusters(self) -> int:
        return self.clustering.n_clusters

    @property
    def local_dim(self) -> int:
        return int(self.h_single.shape[-1])

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def pair_dim(self) -> int:
        return self.local_dim ** 2

    def pair_hamiltonian(self, gamma: int, delta: int) -> np.ndarray:
        """Pair term for ``gamma < delta`` (zeros when the clusters are uncoupled)."""
        if not 0 <= gamma < delta < self.n_clusters:
            raise ValueError(f"invalid cluster pair ({gamma}, {delta})")
        h = self.h_pair.get((gamma, delta))
        if h is None:
            d = self.pair_dim
            return np.zeros((d, d))
        return h

    def displacement_hamiltonians(self) -> np.ndarray:
        """Stacked pair terms ``H[0, j]`` indexed by linear grid displacement.

        Entry 0 (zero displacement) is left as zeros; entry ``j`` is the pair
        term between cluster 0 and the cluster at displacement ``j``.  Only
        meaningful for translation-invariant problems.
        """
        if not self.translation_invariant:
            raise ValueError("displacement form requires a translation-invariant problem")
        grid = self.clustering.grid_dims
        total = int(np.prod(grid))
        d = self.pair_dim
        out = np.zeros((total, d, d))
        for j in range(1, total):
            out[j] = self.pair_hamiltonian(0, j)
        return out

    def hamiltonian_norm(self) -> float:
        """Crude overall scale used by divergence guards."""
        total = float(np.sum(np.linalg.norm(self.h_single, axis=(-2, -1))))
        total += float(sum(np.linalg.norm(h) for h in self.h_pair.values()))
        return max(total, 1.0)

    def validate_translation_invariance(self, rtol: float = 1e-12) -> None:
        """Check ``h_pair`` depends only on displacement and ``h_single`` is uniform."""
        if not self.translation_invariant:
            return
        if np.abs(self.h_single - self.h_single[0]).max() > rtol * max(1.0, np.abs(self.h_single).max()):
            raise ValueError("h_single varies across clusters in a TI problem")
        row = self.displacement_hamiltonians()
        for (g, dlt), h in self.h_pair.items():
            j = self.clustering.displacement_index(g, dlt)
            if np.abs(h - row[j]).max() > rtol * max(1.0, np.abs(h).max()):
                raise ValueError(f"pair term ({g},{dlt}) deviates from its displacement class")
