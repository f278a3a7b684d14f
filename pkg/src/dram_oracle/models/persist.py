"""Binary model files.

Layout (little-endian)::

    magic b"DOML", version u16, kind tag u8,
    metadata pairs (as in trace files): feature_set, target_kind, device_encoding,
        then one ``column=`` entry per feature column and one ``device=`` per device,
    scaler: n u32, mean f64[n], sd f64[n], constant u8[n],
    params: count u32, then per entry name (u16 length + utf-8), type u8, payload,
    crc32 u32 of everything before it.

Parameter payloads: ``i`` i64, ``f`` f64, ``F``/``I`` f64/i64 array (ndim u8,
dims u64 each, data), ``S`` string list (count u32, then u32 length + utf-8 each).
"""
from __future__ import annotations

import io
import os
import struct
import zlib

import numpy as np

from ..trace import decode_pairs, encode_pairs
from .common import KINDS, ModelError, Scaler, TrainedModel

MODEL_MAGIC = b"DOML"
MODEL_VERSION = 1
KIND_TAGS = {k: i for i, k in enumerate(KINDS)}


class ModelFormatError(ModelError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class ModelKindError(ModelFormatError):
    pass


def _put_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def _encode_param(name: str, value) -> bytes:
    head = _put_str(name)
    if isinstance(value, (bool, int, np.integer)):
        return head + b"i" + struct.pack("<q", int(value))
    if isinstance(value, (float, np.floating)):
        return head + b"f" + struct.pack("<d", float(value))
    arr = np.asarray(value)
    if arr.dtype == object or arr.dtype.kind in "US":
        items = [str(v).encode("utf-8") for v in arr.tolist()]
        return head + b"S" + struct.pack("<I", len(items)) + b"".join(
            struct.pack("<I", len(b)) + b for b in items
        )
    if arr.dtype.kind in "iub":
        tag, data = b"I", arr.astype("<i8")
    else:
        tag, data = b"F", arr.astype("<f8")
    dims = struct.pack("<B", arr.ndim) + b"".join(struct.pack("<Q", n) for n in arr.shape)
    return head + tag + dims + np.ascontiguousarray(data).tobytes()


def model_to_bytes(model: TrainedModel) -> bytes:
    pairs = [
        ("feature_set", str(model.feature_set)),
        ("target_kind", model.target_kind),
        ("device_encoding", model.device_encoding),
    ]
    pairs += [("column", c) for c in model.columns]
    pairs += [("device", d) for d in model.devices]
    sc = model.scaler
    n = len(sc.mean)
    body = [
        MODEL_MAGIC,
        struct.pack("<HB", MODEL_VERSION, KIND_TAGS[model.kind]),
        encode_pairs(pairs),
        struct.pack("<I", n),
        np.asarray(sc.mean, "<f8").tobytes(),
        np.asarray(sc.sd, "<f8").tobytes(),
        np.asarray(sc.constant, np.uint8).tobytes(),
        struct.pack("<I", len(model.params)),
    ]
    body += [_encode_param(k, v) for k, v in sorted(model.params.items())]
    blob = b"".join(body)
    return blob + struct.pack("<I", zlib.crc32(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.fh = io.BytesIO(data)

    def take(self, n: int, what: str) -> bytes:
        b = self.fh.read(n)
        if len(b) != n:
            raise ModelFormatError(f"truncated model file ({what})")
        return b

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size, what), dtype=dtype).astype(dtype[1:], copy=True)


def _decode_param(r: _Reader):
    (ln,) = r.unpack("<H", "param name")
    name = r.take(ln, "param name").decode("utf-8")
    tag = r.take(1, "param type")
    if tag == b"i":
        return name, r.unpack("<q", name)[0]
    if tag == b"f":
        return name, r.unpack("<d", name)[0]
    if tag == b"S":
        (count,) = r.unpack("<I", name)
        items = []
        for _ in range(count):
            (bl,) = r.unpack("<I", name)
            items.append(r.take(bl, name).decode("utf-8"))
        return name, np.array(items, dtype=object)
    if tag in (b"F", b"I"):
        (ndim,) = r.unpack("<B", name)
        shape = tuple(r.unpack("<Q", name)[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        arr = r.array("<f8" if tag == b"F" else "<i8", count, name)
        return name, arr.reshape(shape)
    raise ModelFormatError(f"unknown parameter type {tag!r} for {name!r}")


def model_from_bytes(data: bytes, expected_kind: str | None = None) -> TrainedModel:
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"not a model file (magic {data[:4]!r})")
    if len(data) < 11:
        raise ModelFormatError("truncated model file (header)")
    blob, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(blob)
    r.take(4, "magic")
    version, tag = r.unpack("<HB", "header")
    if version != MODEL_VERSION:
        raise ModelVersionError(f"model version {version} unsupported (expected {MODEL_VERSION})")
    if zlib.crc32(blob) != crc:
        raise ModelFormatError("model file is corrupt or truncated (checksum mismatch)")
    kinds = {v: k for k, v in KIND_TAGS.items()}
    if tag not in kinds:
        raise ModelFormatError(f"unknown model kind tag {tag}")
    kind = kinds[tag]
    if expected_kind is not None and kind != expected_kind:
        raise ModelKindError(f"file holds a {kind} model, expected {expected_kind}")
    pairs = decode_pairs(r.fh, error=ModelFormatError)
    meta = {k: v for k, v in pairs if k not in ("column", "device")}
    columns = tuple(v for k, v in pairs if k == "column")
    devices = tuple(v for k, v in pairs if k == "device")
    (n,) = r.unpack("<I", "scaler size")
    mean = r.array("<f8", n, "scaler")
    sd = r.array("<f8", n, "scaler")
    constant = r.array("<u1", n, "scaler").astype(bool)
    (count,) = r.unpack("<I", "param count")
    params = dict(_decode_param(r) for _ in range(count))
    if r.fh.read(1):
        raise ModelFormatError("trailing bytes after model payload")
    try:
        return TrainedModel(
            kind, int(meta["feature_set"]), meta["target_kind"], columns, devices,
            meta["device_encoding"], Scaler(mean, sd, constant), params,
        )
    except KeyError as exc:
        raise ModelFormatError(f"missing metadata {exc.args[0]!r}") from None


def save_model(model: TrainedModel, sink) -> int:
    blob = model_to_bytes(model)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(blob)
    else:
        sink.write(blob)
    return len(blob)


def load_model(source, expected_kind: str | None = None) -> TrainedModel:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    return model_from_bytes(data, expected_kind)
