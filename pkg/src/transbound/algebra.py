"""Complex-vector arithmetic, embedding tables, initialization and checkpoints.

A complex vector is a ``complex128`` numpy array: its real and imaginary
parts are the paired coordinate arrays. Real-mode tables keep every
imaginary coordinate at exactly zero.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

NORMS = ("L1", "L2")
MODES = ("real", "complex")

CHECKPOINT_MAGIC = b"TBCKPT01"


class DimensionError(ValueError):
    pass


def as_complex(re, im=None) -> np.ndarray:
    re = np.asarray(re, dtype=np.float64)
    im = np.zeros_like(re) if im is None else np.asarray(im, dtype=np.float64)
    if re.shape != im.shape:
        raise DimensionError(f"re/im shape mismatch: {re.shape} vs {im.shape}")
    return re + 1j * im


def conjugate(v: np.ndarray) -> np.ndarray:
    return np.conj(v)


def norm(v: np.ndarray, p: str = "L2", axis=-1):
    """L2: sqrt of the summed squared re/im coordinates. L1: sum of |re| + |im|."""
    v = np.asarray(v)
    if p == "L2":
        # rescale by the largest coordinate so tiny or huge vectors neither underflow nor overflow
        m = np.maximum(np.max(np.abs(v.real), axis=axis, keepdims=True, initial=0.0),
                       np.max(np.abs(v.imag), axis=axis, keepdims=True, initial=0.0))
        safe = np.where(m > 0, m, 1.0)
        re, im = v.real / safe, v.imag / safe
        return np.squeeze(safe, axis=axis) * np.sqrt(np.sum(re * re + im * im, axis=axis))
    if p == "L1":
        return np.sum(np.abs(v.real) + np.abs(v.imag), axis=axis)
    raise ValueError(f"norm must be one of {NORMS}, got {p!r}")


def norm_grad(v: np.ndarray, p: str = "L2") -> np.ndarray:
    """(Sub)gradient of ``norm`` w.r.t. the re/im coordinates, packed as a complex array.

    Zero at ``v = 0`` for L2 and ``sign(0) = 0`` for L1.
    """
    v = np.asarray(v, dtype=np.complex128)
    if p == "L1":
        return np.sign(v.real) + 1j * np.sign(v.imag)
    if p != "L2":
        raise ValueError(f"norm must be one of {NORMS}, got {p!r}")
    n = norm(v, "L2")
    n = np.expand_dims(n, -1)
    safe = np.where(n > 0, n, 1.0)
    return np.where(n > 0, v / safe, 0.0)


@dataclass
class EmbeddingTable:
    entities: np.ndarray  # (|E|, d) complex128
    relations: np.ndarray  # (|R|, d) complex128
    mode: str = "complex"
    seed: int | None = None
    step: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.entities = np.ascontiguousarray(self.entities, dtype=np.complex128)
        self.relations = np.ascontiguousarray(self.relations, dtype=np.complex128)
        if self.entities.ndim != 2 or self.relations.ndim != 2:
            raise DimensionError("embedding tables must be 2-D")
        if self.entities.shape[1] != self.relations.shape[1]:
            raise DimensionError("entity and relation dimensions differ")
        if self.mode == "real":
            self.zero_imaginary()

    @property
    def dim(self) -> int:
        return self.entities.shape[1]

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relations.shape[0]

    def zero_imaginary(self) -> None:
        self.entities.imag[...] = 0.0
        self.relations.imag[...] = 0.0

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.entities).all() and np.isfinite(self.relations).all())

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            self.entities.copy(), self.relations.copy(), self.mode, self.seed, self.step, dict(self.meta)
        )

    def project_entities_unit(self) -> None:
        # Ablation only: the default training path never renormalizes.
        n = norm(self.entities, "L2")[:, None]
        self.entities /= np.where(n > 0, n, 1.0)

    def equals(self, other: "EmbeddingTable") -> bool:
        return (
            self.mode == other.mode
            and np.array_equal(self.entities, other.entities)
            and np.array_equal(self.relations, other.relations)
        )


def init_table(n_entities: int, n_relations: int, dim: int, mode: str = "complex", seed: int = 0) -> EmbeddingTable:
    """Uniform init on [-6/sqrt(d), 6/sqrt(d)] from a seeded generator."""
    if dim < 1:
        raise DimensionError(f"dimension must be >= 1, got {dim}")
    if n_entities < 1 or n_relations < 1:
        raise DimensionError("need at least one entity and one relation")
    bound = 6.0 / np.sqrt(dim)
    rng = np.random.default_rng(seed)
    ent = rng.uniform(-bound, bound, size=(n_entities, dim, 2))
    rel = rng.uniform(-bound, bound, size=(n_relations, dim, 2))
    table = EmbeddingTable(
        ent[..., 0] + 1j * ent[..., 1], rel[..., 0] + 1j * rel[..., 1], mode=mode, seed=seed
    )
    return table


# Checkpoint layout (all integers and floats little-endian):
#   8 bytes   magic b"TBCKPT01"
#   4 bytes   uint32 header length H
#   H bytes   UTF-8 JSON header: mode, dim, n_entities, n_relations, seed, step, meta
#   float64   entity real parts, row-major (n_entities x dim)
#   float64   entity imaginary parts, row-major
#   float64   relation real parts, row-major (n_relations x dim)
#   float64   relation imaginary parts, row-major


def checkpoint_bytes(table: EmbeddingTable) -> bytes:
    header = {
        "mode": table.mode,
        "dim": table.dim,
        "n_entities": table.n_entities,
        "n_relations": table.n_relations,
        "seed": table.seed,
        "step": table.step,
        "meta": table.meta,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(head)), head]
    for block in (table.entities.real, table.entities.imag, table.relations.real, table.relations.imag):
        parts.append(np.ascontiguousarray(block, dtype="<f8").tobytes())
    return b"".join(parts)


def checkpoint_from_bytes(buf: bytes) -> EmbeddingTable:
    if buf[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a transbound checkpoint")
    (hlen,) = struct.unpack("<I", buf[8:12])
    header = json.loads(buf[12 : 12 + hlen].decode("utf-8"))
    n_e, n_r, d = header["n_entities"], header["n_relations"], header["dim"]
    body = np.frombuffer(buf[12 + hlen :], dtype="<f8")
    expected = 2 * d * (n_e + n_r)
    if body.size != expected:
        raise ValueError(f"checkpoint body holds {body.size} floats, expected {expected}")
    sizes = [n_e * d, n_e * d, n_r * d, n_r * d]
    offsets = np.cumsum([0] + sizes)
    blocks = [body[offsets[i] : offsets[i + 1]] for i in range(4)]
    ent = blocks[0].reshape(n_e, d) + 1j * blocks[1].reshape(n_e, d)
    rel = blocks[2].reshape(n_r, d) + 1j * blocks[3].reshape(n_r, d)
    return EmbeddingTable(ent, rel, header["mode"], header["seed"], header["step"], header.get("meta", {}))


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, table: EmbeddingTable) -> None:
    atomic_write_bytes(path, checkpoint_bytes(table))


def load_checkpoint(path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())
