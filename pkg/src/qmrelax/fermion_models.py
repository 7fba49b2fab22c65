"""Spinless-fermion cluster problems via per-context Jordan-Wigner encodings.

Fermionic operators only acquire a matrix representation relative to an
ordering of the modes involved.  Each cluster uses its internal site order;
each cluster pair ``gamma < delta`` uses the concatenated order (all of
``gamma``'s sites first), which restricts to the single-cluster orders.  With
these contexts fixed, an operator supported on the lower cluster lifts into a
pair context as ``op (x) I``, while an operator on the upper cluster lifts as
``Z^p (x) op`` where ``Z`` is the lower cluster's parity operator and ``p``
the operator's Z2 grading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import ClusterDecomposition, Lattice
from .problem import ClusterProblem, OperatorBasis, complete_basis

__all__ = ["JordanWignerContext", "PairOrdering", "jw_creation", "jw_annihilation",
           "state_parity_diag", "pair_orderings", "build_spinless",
           "jw_pair_observables", "fermionic_basis"]

_A_DAG = np.array([[0.0, 0.0], [1.0, 0.0]])
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True)
class JordanWignerContext:
    """A fixed ordering of ``n_modes`` fermionic modes.

    Creation/annihilation matrices generated here satisfy the canonical
    anticommutation relations; position arguments are 1-based.
    """

    n_modes: int

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("need at least one mode")

    @property
    def dim(self) -> int:
        return 2 ** self.n_modes

    def creation(self, position: int) -> np.ndarray:
        return jw_creation(self, position)

    def annihilation(self, position: int) -> np.ndarray:
        return jw_creation(self, position).T

    def number(self, position: int) -> np.ndarray:
        a_dag = self.creation(position)
        return a_dag @ a_dag.T


def jw_creation(ctx: JordanWignerContext, position: int) -> np.ndarray:
    """Creation matrix at ``position`` (1-based): sz strings before, identity after."""
    n = ctx.n_modes
    if not 1 <= position <= n:
        raise ValueError(f"mode position {position} out of range 1..{n}")
    out = np.array([[1.0]])
    for k in range(1, n + 1):
        if k < position:
            out = np.kron(out, _SZ)
        elif k == position:
            out = np.kron(out, _A_DAG)
        else:
            out = np.kron(out, np.eye(2))
    return out


def jw_annihilation(ctx: JordanWignerContext, position: int) -> np.ndarray:
    return jw_creation(ctx, position).T


def state_parity_diag(n_modes: int) -> np.ndarray:
    """Diagonal of the parity operator: (-1)^(occupied modes) per basis state."""
    diag = np.array([1.0])
    for _ in range(n_modes):
        diag = np.kron(diag, np.array([1.0, -1.0]))
    return diag


def fermionic_basis(n_modes: int) -> OperatorBasis:
    """Complete graded observable basis for a cluster of ``n_modes`` modes.

    The matrix units of the 2^n-dimensional cluster space are (up to sign)
    the Jordan-Wigner images of the monomials in the cluster's creation and
    annihilation operators; each unit connects occupation states of definite
    total parity, which fixes its grading.
    """
    return complete_basis(2 ** n_modes, state_parity=state_parity_diag(n_modes))


@dataclass(frozen=True)
class PairOrdering:
    """Mode orderings for clusters and cluster pairs.

    ``kappa_single[g]`` lists cluster ``g``'s sites in context order;
    ``kappa_pair[(g, d)]`` (for ``g < d``) is the concatenation placing all of
    ``g``'s sites before ``d``'s, so the pair ordering restricts to the
    single-cluster orderings.
    """

    kappa_single: tuple[tuple[int, ...], ...]
    kappa_pair: dict[tuple[int, int], tuple[int, ...]]


def pair_orderings(clustering: ClusterDecomposition) -> PairOrdering:
    """Default orderings: cluster-internal row-major order, lower cluster first."""
    singles = tuple(tuple(clustering.cluster_sites(g)) for g in range(clustering.n_clusters))
    pairs: dict[tuple[int, int], tuple[int, ...]] = {}
    for g in range(clustering.n_clusters):
        for d in range(g + 1, clustering.n_clusters):
            pairs[(g, d)] = singles[g] + singles[d]
    return PairOrdering(kappa_single=singles, kappa_pair=pairs)


def _jw_term(ctx: JordanWignerContext, ordering: tuple[int, ...],
             kind: str, i: int, j: int, coeff: float) -> np.ndarray:
    """Matrix of a two-site term under ``ordering`` (positions are 1-based)."""
    pi = ordering.index(i) + 1
    pj = ordering.index(j) + 1
    if kind == "hop":
        ai = ctx.creation(pi)
        aj = ctx.creation(pj)
        return coeff * (ai @ aj.T + aj @ ai.T)
    if kind == "density":
        half = 0.5 * np.eye(ctx.dim)
        ni = ctx.number(pi) - half
        nj = ctx.number(pj) - half
        return coeff * (ni @ nj)
    raise ValueError(f"unknown term kind {kind!r}")


def _interaction_pairs(lattice: Lattice, u: float, long_range: bool):
    """Yield ``(i, j, coefficient)`` for the density-density interaction.

    Short range: each bond once with coefficient ``u``.  Long range: every
    unordered site pair with coefficient ``2 u / d(i, j)`` -- the ordered-pair
    double sum collapsed onto unordered pairs -- using minimum-image Euclidean
    distance on periodic lattices.
    """
    if not long_range:
        for (i, j) in lattice.bonds:
            yield i, j, u
        return
    n = lattice.n_sites
    for i in range(n):
        for j in range(i + 1, n):
            yield i, j, 2.0 * u / lattice.min_image_distance(i, j)


def build_spinless(lattice: Lattice, u: float,
                   clustering: ClusterDecomposition,
                   long_range: bool = False,
                   basis: OperatorBasis | None = None) -> ClusterProblem:
    """Half-filling-symmetric spinless fermions on a lattice.

    Hopping ``-(a_i^+ a_j + a_j^+ a_i)`` acts on every bond; the interaction
    ``u (n_i - 1/2)(n_j - 1/2)`` acts on bonds (short range) or on all site
    pairs weighted by inverse distance (``long_range=True``).  Terms with both
    sites in one cluster are encoded under that cluster's ordering into the
    single term; terms crossing clusters are encoded under the pair ordering
    into the pair term.  All resulting matrices are real symmetric.
    """
    if clustering.lattice != lattice:
        raise ValueError("clustering was built for a different lattice")
    orderings = pair_orderings(clustering)
    length = clustering.sites_per_cluster
    m = clustering.local_dim
    ctx_single = JordanWignerContext(length)
    ctx_pair = JordanWignerContext(2 * length)

    h_single = np.zeros((clustering.n_clusters, m, m))
    h_pair: dict[tuple[int, int], np.ndarray] = {}

    def add(kind: str, i: int, j: int, coeff: float) -> None:
        gi = int(clustering.cluster_of_site[i])
        gj = int(clustering.cluster_of_site[j])
        if gi == gj:
            h_single[gi] += _jw_term(ctx_single, orderings.kappa_single[gi],
                                     kind, i, j, coeff)
        else:
            key = (min(gi, gj), max(gi, gj))
            term = _jw_term(ctx_pair, orderings.kappa_pair[key], kind, i, j, coeff)
            if key in h_pair:
                h_pair[key] = h_pair[key] + term
            else:
                h_pair[key] = term

    for (i, j) in lattice.bonds:
        add("hop", i, j, -1.0)
    for i, j, coeff in _interaction_pairs(lattice, u, long_range):
        add("density", i, j, coeff)

    return ClusterProblem(
        clustering=clustering,
        h_single=h_single,
        h_pair=h_pair,
        basis=basis if basis is not None else fermionic_basis(length),
        translation_invariant=lattice.periodic and clustering.n_clusters >= 2,
        fermionic=True,
        metadata={"model": "lrsf" if long_range else "sf", "U": float(u),
                  "distance_convention": "minimum-image"},
    )


@dataclass(frozen=True)
class ObservableProducts:
    """Explicitly lifted observable products for moment-matrix assembly.

    With congruent clusters and order-preserving pair contexts the products
    are the same for every cluster pair, so one array of each kind suffices:
    ``pair[a, b]`` is the pair-space matrix of (lifted op a on the lower
    cluster)^T (lifted op b on the upper cluster), and ``single[a, b]`` the
    cluster-space product ``ops[a]^T ops[b]``.
    """

    pair: np.ndarray     # (n, n, m^2, m^2)
    single: np.ndarray   # (n, n, m, m)


def jw_pair_observables(clustering: ClusterDecomposition,
                        orderings: PairOrdering,
                        basis: OperatorBasis) -> ObservableProducts:
    """Lift a graded cluster basis into pair contexts and form all products.

    The lower-cluster operator lifts as ``op (x) I``; the upper-cluster
    operator as ``Z^p (x) op`` with ``Z`` the lower cluster's parity operator.
    Intended for tests and small problems: the array is O(n^2 m^4).
    """
    del orderings  # congruent order-preserving contexts: products are pair-independent
    m = basis.local_dim
    if m != clustering.local_dim:
        raise ValueError("basis dimension does not match the clustering")
    n = basis.n_ops
    eye = np.eye(m)
    z = np.diag(basis.state_parity)
    lift_lower = np.stack([np.kron(op, eye) for op in basis.ops])
    lift_upper = np.stack([np.kron(z if p else eye, op)
                           for op, p in zip(basis.ops, basis.parities)])
    pair = np.einsum('aij,bjk->abik', lift_lower.transpose(0, 2, 1), lift_upper)
    single = np.einsum('aij,bjk->abik', basis.ops.transpose(0, 2, 1), basis.ops)
    return ObservableProducts(pair=pair, single=single)
