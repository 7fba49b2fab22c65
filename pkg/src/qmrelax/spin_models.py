"""Transverse-field Ising and antiferromagnetic Heisenberg cluster problems.

Bond bookkeeping convention: a bond with both endpoints inside one cluster is
lifted (by Kronecker products respecting the cluster's internal site order)
into that cluster's single term; a bond crossing clusters ``gamma != delta``
is lifted into the pair term of the ordered pair ``(min, max)``, with the
lower-indexed cluster occupying the first tensor factor.  Every lattice bond
lands in exactly one term.
"""

from __future__ import annotations

import numpy as np

from .lattice import ClusterDecomposition, Lattice
from .problem import ClusterProblem, OperatorBasis, complete_basis

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y_IMAG = np.array([[0.0, -1.0], [1.0, 0.0]])   # sigma_y = i * this
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])

__all__ = ["SIGMA_X", "SIGMA_Z", "build_tfi", "build_afh", "complete_basis",
           "lift_site_operator", "heisenberg_bond"]


def lift_site_operator(op: np.ndarray, position: int, n_sites: int) -> np.ndarray:
    """Kronecker-lift a single-site operator to ``position`` among ``n_sites``."""
    out = np.array([[1.0]])
    for k in range(n_sites):
        out = np.kron(out, op if k == position else np.eye(2))
    return out


def heisenberg_bond() -> np.ndarray:
    """Two-site bond ``sx sx + sy sy + sz sz`` (real: the yy product is real)."""
    yy = -np.kron(SIGMA_Y_IMAG, SIGMA_Y_IMAG)   # (i A)(x)(i B) = -A(x)B
    return np.kron(SIGMA_X, SIGMA_X) + yy + np.kron(SIGMA_Z, SIGMA_Z)


def _accumulate_bond(problem_pairs: dict, h_single: np.ndarray,
                     clustering: ClusterDecomposition,
                     i: int, j: int, op_i: np.ndarray, op_j: np.ndarray,
                     coeff: float) -> None:
    """Add ``coeff * op_i(site i) op_j(site j)`` to the owning cluster term."""
    gi = int(clustering.cluster_of_site[i])
    gj = int(clustering.cluster_of_site[j])
    length = clustering.sites_per_cluster
    pi = clustering.position_in_cluster(i)
    pj = clustering.position_in_cluster(j)
    if gi == gj:
        lifted = lift_site_operator(op_i, pi, length) @ lift_site_operator(op_j, pj, length)
        h_single[gi] += coeff * lifted
    else:
        a, b = (gi, gj) if gi < gj else (gj, gi)
        lift_a = lift_site_operator(op_i if a == gi else op_j, pi if a == gi else pj, length)
        lift_b = lift_site_operator(op_j if a == gi else op_i, pj if a == gi else pi, length)
        term = coeff * np.kron(lift_a, lift_b)
        key = (a, b)
        if key in problem_pairs:
            problem_pairs[key] = problem_pairs[key] + term
        else:
            problem_pairs[key] = term


def _accumulate_field(h_single: np.ndarray, clustering: ClusterDecomposition,
                      i: int, op: np.ndarray, coeff: float) -> None:
    g = int(clustering.cluster_of_site[i])
    p = clustering.position_in_cluster(i)
    h_single[g] += coeff * lift_site_operator(op, p, clustering.sites_per_cluster)


def _is_translation_invariant(lattice: Lattice, clustering: ClusterDecomposition) -> bool:
    return lattice.periodic and clustering.n_clusters >= 2


def build_tfi(lattice: Lattice, h: float,
              clustering: ClusterDecomposition,
              basis: OperatorBasis | None = None) -> ClusterProblem:
    """Transverse-field Ising problem ``-h sum_i sx_i - sum_{i~j} sz_i sz_j``.

    Field terms and intra-cluster bonds accumulate into the single-cluster
    terms; inter-cluster bonds into the pair terms.
    """
    if clustering.lattice != lattice:
        raise ValueError("clustering was built for a different lattice")
    m = clustering.local_dim
    h_single = np.zeros((clustering.n_clusters, m, m))
    h_pair: dict[tuple[int, int], np.ndarray] = {}
    for site in range(lattice.n_sites):
        _accumulate_field(h_single, clustering, site, SIGMA_X, -h)
    for (i, j) in lattice.bonds:
        _accumulate_bond(h_pair, h_single, clustering, i, j, SIGMA_Z, SIGMA_Z, -1.0)
    return ClusterProblem(
        clustering=clustering,
        h_single=h_single,
        h_pair=h_pair,
        basis=basis if basis is not None else complete_basis(m),
        translation_invariant=_is_translation_invariant(lattice, clustering),
        metadata={"model": "tfi", "h": float(h)},
    )


def build_afh(lattice: Lattice, clustering: ClusterDecomposition,
              basis: OperatorBasis | None = None) -> ClusterProblem:
    """Antiferromagnetic Heisenberg problem ``sum_{i~j} (sx sx + sy sy + sz sz)``."""
    if clustering.lattice != lattice:
        raise ValueError("clustering was built for a different lattice")
    m = clustering.local_dim
    h_single = np.zeros((clustering.n_clusters, m, m))
    h_pair: dict[tuple[int, int], np.ndarray] = {}
    for (i, j) in lattice.bonds:
        _accumulate_bond(h_pair, h_single, clustering, i, j, SIGMA_X, SIGMA_X, 1.0)
        # sy(x)sy = -(i sy)(x)(i sy); both factors real
        _accumulate_bond(h_pair, h_single, clustering, i, j, SIGMA_Y_IMAG, SIGMA_Y_IMAG, -1.0)
        _accumulate_bond(h_pair, h_single, clustering, i, j, SIGMA_Z, SIGMA_Z, 1.0)
    return ClusterProblem(
        clustering=clustering,
        h_single=h_single,
        h_pair=h_pair,
        basis=basis if basis is not None else complete_basis(m),
        translation_invariant=_is_translation_invariant(lattice, clustering),
        metadata={"model": "afh"},
    )
