"""Dense linear-algebra kernels for the marginal-relaxation solvers.

Everything here operates on plain ndarrays and supports leading batch
dimensions, so the solver phase loops can be expressed as single vectorized
calls.  Pair-space matrices use the row-major composite index convention
``(p, s) -> p * m2 + s`` for a tensor product of an ``m1``- and an
``m2``-dimensional factor; every partial trace, embedding and Kronecker
product in the package shares it.
"""

from __future__ import annotations

import numpy as np

from .errors import BrokenSymmetryError, NumericalError

#: Relative asymmetry accepted before symmetrization is considered an error.
SYMMETRY_RTOL = 1e-9


def sym_part(a: np.ndarray) -> np.ndarray:
    """Return the (conjugate-)symmetric part ``(a + a^H) / 2``."""
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def check_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL, what: str = "matrix") -> np.ndarray:
    """Symmetrize ``a`` defensively, rejecting gross asymmetry.

    Parameters
    ----------
    a : ndarray
        Square matrix (or stack of square matrices), real or complex.
    rtol : float
        Largest relative asymmetry ``|a - a^H| / |a|`` tolerated.
    what : str
        Label used in the error message.

    Returns
    -------
    ndarray
        ``(a + a^H) / 2``.
    """
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")
    skew = np.abs(a - np.conj(np.swapaxes(a, -1, -2))).max()
    scale = max(np.abs(a).max(), 1.0)
    if skew > rtol * scale:
        raise ValueError(f"{what} is not symmetric/Hermitian: asymmetry {skew:.3e} "
                         f"exceeds {rtol:.1e} relative")
    return sym_part(a)


def eigh_or_raise(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``np.linalg.eigh`` wrapped so failures carry the block dimension."""
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise NumericalError(f"eigendecomposition failed: {exc}", dim=a.shape[-1]) from exc


def psd_project(s: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Project onto the positive-semidefinite cone in Frobenius norm.

    The input is symmetrized defensively, eigendecomposed, and rebuilt with
    all negative eigenvalues clamped to zero.  Works for real-symmetric and
    complex-Hermitian inputs alike, and for stacks of matrices.

    Raises
    ------
    ValueError
        If entries are non-finite or the asymmetry exceeds ``rtol``.
    NumericalError
        If the eigensolver fails.
    """
    s = check_symmetric(s, rtol=rtol, what="psd_project input")
    w, v = eigh_or_raise(s)
    w = np.maximum(w, 0.0)
    out = (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return sym_part(out)


# ---------------------------------------------------------------------------
# Partial traces and their adjoints on a bipartite space
# ---------------------------------------------------------------------------

def _pair_shape(r: np.ndarray, shape: tuple[int, int]) -> tuple[int, int]:
    m1, m2 = int(shape[0]), int(shape[1])
    if m1 <= 0 or m2 <= 0:
        raise ValueError(f"invalid bipartite shape {shape}")
    if r.shape[-1] != m1 * m2 or r.shape[-2] != m1 * m2:
        raise ValueError(f"matrix of dimension {r.shape[-1]} does not match "
                         f"bipartite shape {m1}x{m2}")
    return m1, m2


def partial_trace_second(r: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Trace out the second tensor factor: ``out[p, q] = sum_s r[(p,s), (q,s)]``."""
    r = np.asarray(r)
    m1, m2 = _pair_shape(r, shape)
    r5 = r.reshape(r.shape[:-2] + (m1, m2, m1, m2))
    return np.einsum('...psqs->...pq', r5)


def partial_trace_first(r: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Trace out the first tensor factor: ``out[s, t] = sum_p r[(p,s), (p,t)]``."""
    r = np.asarray(r)
    m1, m2 = _pair_shape(r, shape)
    r5 = r.reshape(r.shape[:-2] + (m1, m2, m1, m2))
    return np.einsum('...pspt->...st', r5)


def embed_second(y: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`partial_trace_second`: ``y -> y (x) I_m2``."""
    y = np.asarray(y)
    m1, m2 = int(shape[0]), int(shape[1])
    if y.shape[-1] != m1 or y.shape[-2] != m1:
        raise ValueError(f"factor of dimension {y.shape[-1]} does not match m1={m1}")
    eye = np.eye(m2, dtype=y.dtype)
    out = np.einsum('...pq,st->...psqt', y, eye)
    return out.reshape(y.shape[:-2] + (m1 * m2, m1 * m2))


def embed_first(y: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`partial_trace_first`: ``y -> I_m1 (x) y``."""
    y = np.asarray(y)
    m1, m2 = int(shape[0]), int(shape[1])
    if y.shape[-1] != m2 or y.shape[-2] != m2:
        raise ValueError(f"factor of dimension {y.shape[-1]} does not match m2={m2}")
    eye = np.eye(m1, dtype=y.dtype)
    out = np.einsum('pq,...st->...psqt', eye, y)
    return out.reshape(y.shape[:-2] + (m1 * m2, m1 * m2))


def pair_quadratic_inverse(b: np.ndarray, shape: tuple[int, int],
                           mu: float, nu: float) -> np.ndarray:
    """Solve ``(mu + nu A1*A1 + nu A2*A2) R = B`` in closed form.

    ``A1``/``A2`` are the partial traces over the second/first factor and
    ``A1*``/``A2*`` their embedding adjoints.  The linear map is diagonal on
    the orthogonal decomposition of pair space into ``span(I (x) I)``, the
    traceless ``Y (x) I`` and ``I (x) Z`` slices, and their bi-traceless
    complement, with eigenvalues ``mu + 2 nu m``, ``mu + nu m`` (twice) and
    ``mu``.  The map is never materialized as a dense matrix.

    Requires ``m1 == m2``; ``nu = 0`` degenerates to division by ``mu``.
    """
    b = np.asarray(b, dtype=float)
    m1, m2 = _pair_shape(b, shape)
    if m1 != m2:
        raise ValueError("pair_quadratic_inverse requires equal factor dimensions")
    if mu <= 0:
        raise ValueError(f"penalty mu must be positive, got {mu}")
    if nu < 0:
        raise ValueError(f"penalty nu must be nonnegative, got {nu}")
    m = m1
    tr2 = partial_trace_second(b, shape)
    tr1 = partial_trace_first(b, shape)
    full = np.trace(b, axis1=-2, axis2=-1)[..., None, None]

    eye = np.eye(m)
    y = tr2 / m - (full / m**2) * eye       # traceless part of Tr_2[B] / m
    z = tr1 / m - (full / m**2) * eye
    c0 = full / m**2

    comp0 = c0 * np.einsum('pq,st->psqt', eye, eye).reshape(m * m, m * m)
    comp_y = embed_second(y, shape)
    comp_z = embed_first(z, shape)
    rest = b - comp0 - comp_y - comp_z

    return (comp0 / (mu + 2 * nu * m)
            + comp_y / (mu + nu * m)
            + comp_z / (mu + nu * m)
            + rest / mu)


def pair_quadratic_apply(r: np.ndarray, shape: tuple[int, int],
                         mu: float, nu: float) -> np.ndarray:
    """Forward map ``mu R + nu (Tr_2 R)(x)I + nu I(x)(Tr_1 R)`` (round-trip checks)."""
    r = np.asarray(r, dtype=float)
    return (mu * r
            + nu * embed_second(partial_trace_second(r, shape), shape)
            + nu * embed_first(partial_trace_first(r, shape), shape))


# ---------------------------------------------------------------------------
# Block discrete Fourier transforms
# ---------------------------------------------------------------------------

def _block_grid(blocks: np.ndarray, lattice_dims: tuple[int, ...]) -> np.ndarray:
    blocks = np.asarray(blocks)
    dims = tuple(int(d) for d in lattice_dims)
    total = int(np.prod(dims))
    if blocks.ndim < 2 or blocks.shape[-1] != blocks.shape[-2]:
        raise ValueError("blocks must be square matrices")
    if blocks.ndim == 3 and blocks.shape[0] == total:
        blocks = blocks.reshape(dims + blocks.shape[-2:])
    if blocks.shape[:-2] != dims:
        raise ValueError(f"expected one block per lattice point {dims}, "
                         f"got leading shape {blocks.shape[:-2]}")
    return blocks


def block_dft(blocks: np.ndarray, lattice_dims: tuple[int, ...]) -> np.ndarray:
    """Unitary block DFT over the lattice index.

    ``blocks`` holds one square block per lattice point, either shaped
    ``(*lattice_dims, n, n)`` or flattened row-major to ``(prod(dims), n, n)``.
    The transform is applied entrywise across block entries with the
    ``1 / sqrt(prod(dims))`` normalization, so :func:`block_idft` is its exact
    inverse.
    """
    blocks = _block_grid(blocks, lattice_dims)
    d = len(lattice_dims)
    norm = np.sqrt(np.prod(lattice_dims))
    return np.fft.fftn(blocks, axes=tuple(range(d))) / norm


def block_idft(blocks: np.ndarray, lattice_dims: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`block_dft` (conjugate kernel, same normalization)."""
    blocks = _block_grid(blocks, lattice_dims)
    d = len(lattice_dims)
    norm = np.sqrt(np.prod(lattice_dims))
    return np.fft.ifftn(blocks, axes=tuple(range(d))) * norm


def hermitize_blocks(blocks: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Hermitize nearly-Hermitian blocks, raising on large residue.

    Fourier blocks of a consistent translation-invariant family are Hermitian
    up to round-off; anything bigger means the symmetry was broken upstream.
    """
    if not np.all(np.isfinite(blocks)):
        raise ValueError("blocks contain non-finite entries")
    skew = np.abs(blocks - np.conj(np.swapaxes(blocks, -1, -2))).max()
    scale = max(np.abs(blocks).max(), 1.0)
    if skew > rtol * scale:
        raise BrokenSymmetryError(
            f"Fourier blocks deviate from Hermitian by {skew:.3e} "
            f"(relative tolerance {rtol:.1e}); translation symmetry is broken upstream",
            dim=blocks.shape[-1])
    return sym_part(blocks)
