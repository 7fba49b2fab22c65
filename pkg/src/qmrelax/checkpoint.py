"""Versioned binary checkpoints for long solver runs.

Layout (all integers little-endian):

    magic       8 bytes  b"QMRXCKP1"
    payload     framed fields, see below
    checksum    32 bytes sha256 of the payload

Payload framing:

    version         u32
    fingerprint     32 bytes (sha256 of the problem + algorithm parameters)
    solver kind     u8 (0 = general, 1 = translation-invariant)
    iteration       u64
    prev energy     f64 (per site)
    below count     u64 (consecutive iterations under the stop tolerance)
    n arrays        u32
    per array:      u16 name length + utf-8 name, u8 ndim, u64 per dim,
                    raw '<f8' data

Floats are stored as raw little-endian 64-bit words, so a save/load round
trip is bit-exact and a resumed run continues identically to an
uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, FingerprintMismatchError

MAGIC = b"QMRXCKP1"
FORMAT_VERSION = 1

_SCALAR_FIELDS = ("iteration", "prev_energy_per_site", "below_count")


def state_arrays(state) -> dict[str, np.ndarray]:
    """All ndarray fields of a solver state dataclass, in declaration order."""
    out: dict[str, np.ndarray] = {}
    for f in dataclasses.fields(state):
        value = getattr(state, f.name)
        if isinstance(value, np.ndarray):
            out[f.name] = value
    return out


def checkpoint_save(state, path: str | Path, fingerprint: bytes,
                    solver_kind: int) -> None:
    """Serialize a solver state; the write is atomic (tmp file + rename)."""
    if len(fingerprint) != 32:
        raise ValueError("fingerprint must be a 32-byte digest")
    arrays = state_arrays(state)
    chunks = [struct.pack("<I", FORMAT_VERSION), fingerprint,
              struct.pack("<B", solver_kind),
              struct.pack("<Q", int(state.iteration)),
              struct.pack("<d", float(state.prev_energy_per_site)),
              struct.pack("<Q", int(state.below_count)),
              struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        encoded = name.encode()
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = b"".join(chunks)
    digest = hashlib.sha256(payload).digest()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(MAGIC + payload + digest)
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_load(path: str | Path, expected_fingerprint: bytes | None = None
                    ) -> tuple[dict, int]:
    """Read a checkpoint back into a plain dict of fields.

    Returns ``(fields, solver_kind)`` where ``fields`` holds the scalar
    counters and the named arrays.  Raises :class:`CheckpointError` on any
    corruption and :class:`FingerprintMismatchError` when the stored problem
    fingerprint differs from ``expected_fingerprint``.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 32 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    payload, digest = raw[len(MAGIC):-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (file corrupted)")
    r = _Reader(payload)
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    fingerprint = r.take(32)
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise FingerprintMismatchError(
            f"{path}: checkpoint was written for a different problem/configuration")
    (solver_kind,) = r.unpack("<B")
    (iteration,) = r.unpack("<Q")
    (prev_energy,) = r.unpack("<d")
    (below,) = r.unpack("<Q")
    (n_arrays,) = r.unpack("<I")
    fields: dict = {"iteration": int(iteration),
                    "prev_energy_per_site": float(prev_energy),
                    "below_count": int(below)}
    for _ in range(n_arrays):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(count * 8), dtype="<f8").reshape(shape)
        fields[name] = data.astype(np.float64).copy()
    if r.pos != len(payload):
        raise CheckpointError(f"{path}: trailing bytes in checkpoint payload")
    return fields, int(solver_kind)


def restore_state(fields: dict, state_cls):
    """Rebuild a solver state dataclass from loaded checkpoint fields."""
    names = {f.name for f in dataclasses.fields(state_cls)}
    missing = names - set(fields)
    if missing:
        raise CheckpointError(f"checkpoint is missing fields {sorted(missing)}")
    kwargs = {k: v for k, v in fields.items() if k in names}
    return state_cls(**kwargs)
