"""Rectangular lattice geometry and cluster (supersite) decompositions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Lattice:
    """A d-dimensional rectangular lattice with nearest-neighbor adjacency.

    Parameters
    ----------
    dims : tuple of int
        Extent along each axis.  Axes of extent 1 carry no bonds.
    periodic : bool
        Wrap bonds around each axis of extent >= 2.  With extent 2 the wrap
        bond coincides with the interior bond and is counted once (adjacency
        is a set of unordered pairs).
    """

    dims: tuple[int, ...]
    periodic: bool = True

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"lattice dims must be positive, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    def site_index(self, coords: tuple[int, ...]) -> int:
        """Row-major linear index of a site multi-index."""
        return int(np.ravel_multi_index(coords, self.dims))

    def site_coords(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(index, self.dims))

    @cached_property
    def bonds(self) -> list[tuple[int, int]]:
        """All unordered nearest-neighbor pairs, each exactly once."""
        seen: set[tuple[int, int]] = set()
        for idx in range(self.n_sites):
            coords = self.site_coords(idx)
            for axis, extent in enumerate(self.dims):
                if extent < 2:
                    continue
                nxt = list(coords)
                nxt[axis] += 1
                if nxt[axis] == extent:
                    if not self.periodic:
                        continue
                    nxt[axis] = 0
                j = self.site_index(tuple(nxt))
                if j == idx:
                    continue
                seen.add((min(idx, j), max(idx, j)))
        return sorted(seen)

    def min_image_distance(self, i: int, j: int) -> float:
        """Euclidean distance between sites, minimum-image under periodicity."""
        a = np.array(self.site_coords(i), dtype=float)
        b = np.array(self.site_coords(j), dtype=float)
        delta = np.abs(a - b)
        if self.periodic:
            delta = np.minimum(delta, np.array(self.dims, dtype=float) - delta)
        return float(np.sqrt(np.sum(delta**2)))


@dataclass(frozen=True)
class ClusterDecomposition:
    """Partition of a lattice into congruent rectangular clusters.

    Clusters tile the lattice on a coarse grid; ``shape`` must divide the
    lattice dims axis by axis.  Sites within a cluster are ordered row-major
    by their offset inside the cluster rectangle, and clusters themselves are
    ordered row-major on the coarse grid.  Both orderings are relied on by
    the Hamiltonian builders and by the Jordan-Wigner pair contexts, so they
    are fixed here once.
    """

    lattice: Lattice
    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != self.lattice.ndim:
            raise ValueError(f"cluster shape {shape} has wrong rank for lattice "
                             f"dims {self.lattice.dims}")
        if any(s < 1 for s in shape):
            raise ValueError(f"cluster shape must be positive, got {shape}")
        for s, d in zip(shape, self.lattice.dims):
            if d % s != 0:
                raise ValueError(f"cluster shape {shape} does not divide lattice "
                                 f"dims {self.lattice.dims}")
        object.__setattr__(self, "shape", shape)

    @property
    def grid_dims(self) -> tuple[int, ...]:
        """Extent of the coarse cluster grid along each axis."""
        return tuple(d // s for d, s in zip(self.lattice.dims, self.shape))

    @property
    def n_clusters(self) -> int:
        return int(np.prod(self.grid_dims))

    @property
    def sites_per_cluster(self) -> int:
        return int(np.prod(self.shape))

    @property
    def local_dim(self) -> int:
        """Hilbert dimension of one cluster of spin-1/2 (or fermion-mode) sites."""
        return 2 ** self.sites_per_cluster

    def cluster_coords(self, cluster: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(cluster, self.grid_dims))

    def cluster_index(self, coords: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(coords, self.grid_dims, mode="wrap"))

    @cached_property
    def site_assignment(self) -> list[list[int]]:
        """Per-cluster ordered site lists; disjoint and covering the lattice."""
        out: list[list[int]] = []
        for c in range(self.n_clusters):
            cc = self.cluster_coords(c)
            base = tuple(g * s for g, s in zip(cc, self.shape))
            sites = []
            for off in np.ndindex(self.shape):
                coords = tuple(b + o for b, o in zip(base, off))
                sites.append(self.lattice.site_index(coords))
            out.append(sites)
        return out

    def cluster_sites(self, cluster: int) -> list[int]:
        return self.site_assignment[cluster]

    @cached_property
    def cluster_of_site(self) -> np.ndarray:
        owner = np.full(self.lattice.n_sites, -1, dtype=int)
        for c, sites in enumerate(self.site_assignment):
            for s in sites:
                owner[s] = c
        return owner

    def position_in_cluster(self, site: int) -> int:
        """0-based position of a site in its cluster's internal ordering."""
        c = int(self.cluster_of_site[site])
        return self.site_assignment[c].index(site)

    def displacement(self, gamma: int, delta: int) -> tuple[int, ...]:
        """Cluster-grid displacement ``delta - gamma`` modulo the grid."""
        a = self.cluster_coords(gamma)
        b = self.cluster_coords(delta)
        return tuple((y - x) % g for x, y, g in zip(a, b, self.grid_dims))

    def displacement_index(self, gamma: int, delta: int) -> int:
        return int(np.ravel_multi_index(self.displacement(gamma, delta), self.grid_dims))
