"""Versioned binary model file: magic 'ENHP', little-endian layout.

Layout (all integers little-endian unsigned 32-bit unless noted):

    magic 'ENHP' | version | variant (0 high-order, 1 linear)
    H h F m O z c | norm mode (0 none, 1 minmax01, 2 zscore)
    offsets f64[H] | scales f64[H]
    high-order: C f64[(H+1)*F] W f64[F*m] b f64[m] V f64[h*m]
    linear:     A f64[h*H]
    exemplars:  E f64[z*H] labels u32[z]
    class names: count u32, then per name byte-length u32 + utf-8 bytes
                 (count 0 when the training data carried no label names)
    seed u64 | epochs u32 | final validation error f64

Floats are row-major little-endian 64-bit. Loading then saving reproduces
the file byte-identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import NormStats
from .embedding import EmbeddingModel, HighOrderParams, LinearParams
from .exemplars import ExemplarSet

MAGIC = b"ENHP"
VERSION = 1

_NORM_MODES = ["none", "minmax01", "zscore"]


class ModelFileError(ValueError):
    """Raised for malformed model files."""


@dataclass
class ModelBundle:
    """A trained model plus everything needed to use and reproduce it.

    ``label_names`` records the class-id coding of CSV-trained models so a
    test file whose classes appear in a different order can be re-aligned.
    """

    model: EmbeddingModel
    exemplars: ExemplarSet | None
    class_count: int
    seed: int
    epochs: int
    final_val_error: float
    label_names: list[str] | None = None

    @property
    def z(self) -> int:
        return self.exemplars.z if self.exemplars is not None else 0


def _f64_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def save_model(bundle: ModelBundle, path: str) -> None:
    m = bundle.model
    p = m.params
    high_order = isinstance(p, HighOrderParams)
    H = m.input_dim
    h = m.embed_dim
    F = p.n_factors if high_order else 0
    hidden = p.n_hidden if high_order else 0
    order = p.order if high_order else 0
    z = bundle.z

    norm = m.norm
    if norm is None:
        norm = NormStats("none", np.zeros(H), np.ones(H))
    parts = [
        MAGIC,
        struct.pack("<II", VERSION, 0 if high_order else 1),
        struct.pack("<7I", H, h, F, hidden, order, z, bundle.class_count),
        struct.pack("<I", _NORM_MODES.index(norm.mode)),
        _f64_bytes(norm.offset),
        _f64_bytes(norm.scale),
    ]
    if high_order:
        parts += [_f64_bytes(p.C), _f64_bytes(p.W), _f64_bytes(p.b), _f64_bytes(p.V)]
    else:
        parts.append(_f64_bytes(p.A))
    if z:
        parts.append(_f64_bytes(bundle.exemplars.vectors))
        parts.append(np.ascontiguousarray(bundle.exemplars.labels, dtype="<u4").tobytes())
    names = bundle.label_names or []
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    parts.append(struct.pack("<QI", bundle.seed, bundle.epochs))
    parts.append(_f64_bytes(np.float64(bundle.final_val_error)))
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, path: str) -> None:
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise ModelFileError(
                f"{self.path}: truncated while reading {what} at byte offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def f64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").copy()

    def u32(self, count: int, what: str) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count, what))


def load_model(path: str) -> ModelBundle:
    with open(path, "rb") as f:
        r = _Reader(f.read(), str(path))
    if r.take(4, "magic") != MAGIC:
        raise ModelFileError(f"{path}: bad magic (expected {MAGIC!r})")
    version, variant = r.u32(2, "header")
    if version != VERSION:
        raise ModelFileError(f"{path}: unsupported format version {version}")
    if variant not in (0, 1):
        raise ModelFileError(f"{path}: unknown variant tag {variant}")
    H, h, F, hidden, order, z, c = r.u32(7, "dimensions")
    (norm_mode,) = r.u32(1, "normalization mode")
    if norm_mode >= len(_NORM_MODES):
        raise ModelFileError(f"{path}: unknown normalization mode {norm_mode}")
    norm = NormStats(_NORM_MODES[norm_mode], r.f64(H, "offsets"), r.f64(H, "scales"))
    if variant == 0:
        C = r.f64((H + 1) * F, "factor matrix").reshape(H + 1, F)
        W = r.f64(F * hidden, "projection matrix").reshape(F, hidden)
        b = r.f64(hidden, "biases")
        V = r.f64(h * hidden, "output projection").reshape(h, hidden)
        model = EmbeddingModel(HighOrderParams(C, W, b, V, order), norm)
    else:
        A = r.f64(h * H, "linear map").reshape(h, H)
        model = EmbeddingModel(LinearParams(A), norm)
    exemplars = None
    if z:
        E = r.f64(z * H, "exemplars").reshape(z, H)
        labels = np.frombuffer(r.take(4 * z, "exemplar labels"), dtype="<u4").astype(np.int64)
        exemplars = ExemplarSet(E, labels)
    (name_count,) = r.u32(1, "class name count")
    label_names = None
    if name_count:
        label_names = []
        for i in range(name_count):
            (length,) = r.u32(1, f"class name {i} length")
            label_names.append(r.take(length, f"class name {i}").decode("utf-8"))
    seed, epochs = struct.unpack("<QI", r.take(12, "training metadata"))
    final_val = float(np.frombuffer(r.take(8, "validation error"), dtype="<f8")[0])
    if r.pos != len(r.buf):
        raise ModelFileError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return ModelBundle(model, exemplars, c, seed, epochs, final_val, label_names)
