"""Binary persistence for trained stacks.

Layout (all integers little-endian):

    magic b"DDRL" | u32 version | u32 section count
    per section: u32 name length | name utf-8 | u64 payload length | payload
    u32 CRC-32 over every preceding byte

Sections hold the resolved configuration (canonical JSON), one whitening,
dictionary, and grouping record per layer, and the classifier weights.
Numeric payloads are raw float64 / int64 / uint64 in row-major order, so
a byte-identical model file implies bitwise-identical parameters.
"""

import io
import json
import struct
import zlib

import numpy as np

from .classifier import LinearModel
from .dictionary import Dictionary
from .errors import ModelFileError
from .pipeline import LayerConfig, LayerModel, StackModel
from .preprocessing import PCAWhitener
from .seeding import canonical_json, config_hash

MAGIC = b"DDRL"
VERSION = 1
INPUT_CHANNEL_GROUP = [[0, 1, 2]]


def _pack_whitening(whitener) -> bytes:
    if whitener is None:
        return b""
    d = whitener.mean_.shape[0]
    return b"".join(
        [
            struct.pack("<I", d),
            np.ascontiguousarray(whitener.mean_, dtype=np.float64).tobytes(),
            np.ascontiguousarray(whitener.lambdas_, dtype=np.float64).tobytes(),
            np.ascontiguousarray(whitener.components_, dtype=np.float64).tobytes(),
            struct.pack("<d", float(whitener.epsilon)),
        ]
    )


def _unpack_whitening(payload: bytes):
    if not payload:
        return None
    (d,) = struct.unpack_from("<I", payload, 0)
    need = 4 + 8 * (d + d + d * d) + 8
    if len(payload) != need:
        raise ModelFileError(
            f"whitening section holds {len(payload)} bytes, expected {need}"
        )
    off = 4
    mean = np.frombuffer(payload, dtype="<f8", count=d, offset=off)
    off += 8 * d
    lambdas = np.frombuffer(payload, dtype="<f8", count=d, offset=off)
    off += 8 * d
    components = np.frombuffer(payload, dtype="<f8", count=d * d, offset=off)
    off += 8 * d * d
    (epsilon,) = struct.unpack_from("<d", payload, off)
    return PCAWhitener.from_arrays(mean, lambdas, components.reshape(d, d), epsilon)


def _pack_dictionary(d: Dictionary) -> bytes:
    return b"".join(
        [
            struct.pack("<II", d.dim, d.k),
            np.ascontiguousarray(d.atoms, dtype=np.float64).tobytes(),
            np.ascontiguousarray(d.weights, dtype=np.uint64).tobytes(),
            struct.pack("<Q", int(d.zero_rows)),
        ]
    )


def _unpack_dictionary(payload: bytes) -> Dictionary:
    dim, k = struct.unpack_from("<II", payload, 0)
    need = 8 + 8 * (k * dim + k) + 8
    if len(payload) != need:
        raise ModelFileError(
            f"dictionary section holds {len(payload)} bytes, expected {need}"
        )
    off = 8
    atoms = np.frombuffer(payload, dtype="<f8", count=k * dim, offset=off).reshape(k, dim)
    off += 8 * k * dim
    weights = np.frombuffer(payload, dtype="<u8", count=k, offset=off)
    off += 8 * k
    (zero_rows,) = struct.unpack_from("<Q", payload, off)
    return Dictionary(atoms=atoms.copy(), weights=weights.copy(), zero_rows=int(zero_rows))


def _pack_classifier(m: LinearModel) -> bytes:
    c, f = m.weights.shape
    return b"".join(
        [
            struct.pack("<II", c, f),
            np.ascontiguousarray(m.weights, dtype=np.float64).tobytes(),
            np.ascontiguousarray(m.biases, dtype=np.float64).tobytes(),
            np.ascontiguousarray(m.feature_mean, dtype=np.float64).tobytes(),
            np.ascontiguousarray(m.feature_std, dtype=np.float64).tobytes(),
            np.ascontiguousarray(m.classes, dtype=np.int64).tobytes(),
            struct.pack("<dIQ", float(m.reg), int(m.epochs), int(m.seed)),
        ]
    )


def _unpack_classifier(payload: bytes) -> LinearModel:
    c, f = struct.unpack_from("<II", payload, 0)
    need = 8 + 8 * (c * f + c + f + f + c) + 20
    if len(payload) != need:
        raise ModelFileError(
            f"classifier section holds {len(payload)} bytes, expected {need}"
        )
    off = 8
    weights = np.frombuffer(payload, dtype="<f8", count=c * f, offset=off).reshape(c, f)
    off += 8 * c * f
    biases = np.frombuffer(payload, dtype="<f8", count=c, offset=off)
    off += 8 * c
    mean = np.frombuffer(payload, dtype="<f8", count=f, offset=off)
    off += 8 * f
    std = np.frombuffer(payload, dtype="<f8", count=f, offset=off)
    off += 8 * f
    classes = np.frombuffer(payload, dtype="<i8", count=c, offset=off)
    off += 8 * c
    reg, epochs, seed = struct.unpack_from("<dIQ", payload, off)
    return LinearModel(
        weights=weights.copy(),
        biases=biases.copy(),
        classes=classes.copy(),
        feature_mean=mean.copy(),
        feature_std=std.copy(),
        reg=reg,
        epochs=epochs,
        seed=seed,
    )


def _write_sections(sections) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(sections)))
    for name, payload in sections:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def _read_sections(blob: bytes):
    if len(blob) < len(MAGIC) + 12 or blob[: len(MAGIC)] != MAGIC:
        raise ModelFileError("not a model file: bad magic bytes")
    body, tail = blob[:-4], blob[-4:]
    (crc,) = struct.unpack("<I", tail)
    if zlib.crc32(body) != crc:
        raise ModelFileError("model file is corrupt: CRC-32 mismatch")
    version, count = struct.unpack_from("<II", body, len(MAGIC))
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version {version}")
    off = len(MAGIC) + 8
    sections = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", body, off)
        off += 4
        name = body[off : off + name_len].decode("utf-8")
        off += name_len
        (payload_len,) = struct.unpack_from("<Q", body, off)
        off += 8
        sections[name] = body[off : off + payload_len]
        off += payload_len
    if off != len(body):
        raise ModelFileError("model file has trailing bytes after the last section")
    return sections


def serialize_model(model: StackModel) -> bytes:
    """The model as bytes; identical models yield identical bytes."""
    sections = [("config", canonical_json(model.resolved_config).encode("utf-8"))]
    for i, layer in enumerate(model.layers):
        sections.append((f"layer{i}/meta", canonical_json(layer.cfg.__dict__).encode("utf-8")))
        sections.append((f"layer{i}/whitening", _pack_whitening(layer.whitener)))
        sections.append((f"layer{i}/dictionary", _pack_dictionary(layer.dictionary)))
        sections.append((f"layer{i}/groups", canonical_json(layer.groups).encode("utf-8")))
    sections.append(("classifier", _pack_classifier(model.classifier)))
    return _write_sections(sections)


def deserialize_model(blob: bytes) -> StackModel:
    sections = _read_sections(blob)
    for name in ("config", "classifier"):
        if name not in sections:
            raise ModelFileError(f"model file is missing the {name!r} section")
    resolved = json.loads(sections["config"].decode("utf-8"))
    layers = []
    input_groups = INPUT_CHANNEL_GROUP
    for i in range(len(resolved.get("layers", []))):
        for part in ("meta", "whitening", "dictionary", "groups"):
            if f"layer{i}/{part}" not in sections:
                raise ModelFileError(f"model file is missing the 'layer{i}/{part}' section")
        cfg = LayerConfig(**json.loads(sections[f"layer{i}/meta"].decode("utf-8")))
        groups = json.loads(sections[f"layer{i}/groups"].decode("utf-8"))
        layer = LayerModel(
            cfg=cfg,
            whitener=_unpack_whitening(sections[f"layer{i}/whitening"]),
            dictionary=_unpack_dictionary(sections[f"layer{i}/dictionary"]),
            input_groups=input_groups,
            groups=groups,
        )
        layers.append(layer)
        if groups is not None:
            input_groups = groups
    if not layers:
        raise ModelFileError("model file declares no layers")
    return StackModel(
        layers=layers,
        classifier=_unpack_classifier(sections["classifier"]),
        seed=int(resolved["seed"]),
        config_hash=config_hash(resolved),
        resolved_config=resolved,
    )


def save_model(model: StackModel, path):
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


def load_model(path) -> StackModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
