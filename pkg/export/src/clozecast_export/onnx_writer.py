"""Minimal ONNX protobuf serializer.

Writes the subset of the ONNX wire format a bundle graph needs — model,
graph, node, attribute, tensor, and value-info messages — with no
dependency on the onnx package. Tensors are stored as little-endian
raw data. All helpers return encoded protobuf bytes.
"""

from __future__ import annotations

import struct
from typing import Iterable, Sequence

import numpy as np

# TensorProto.DataType codes
FLOAT, INT32, INT64, BOOL, DOUBLE = 1, 6, 7, 9, 11

_DTYPE_CODES = {
    np.dtype("float32"): FLOAT,
    np.dtype("int32"): INT32,
    np.dtype("int64"): INT64,
    np.dtype("bool"): BOOL,
    np.dtype("float64"): DOUBLE,
}

_MASK64 = (1 << 64) - 1


def _varint(value: int) -> bytes:
    if value < 0:
        raise ValueError(f"varint value must be non-negative, got {value}")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _key(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _uint(field: int, value: int) -> bytes:
    return _key(field, 0) + _varint(value)


def _int(field: int, value: int) -> bytes:
    # negative values use the 64-bit two's-complement varint encoding
    return _key(field, 0) + _varint(value & _MASK64)


def _fixed32(field: int, value: float) -> bytes:
    return _key(field, 5) + struct.pack("<f", value)


def _bytes(field: int, payload: bytes) -> bytes:
    return _key(field, 2) + _varint(len(payload)) + payload


def _string(field: int, text: str) -> bytes:
    return _bytes(field, text.encode("utf-8"))


# -- attributes (AttributeProto) ---------------------------------------------

_ATTR_FLOAT, _ATTR_INT, _ATTR_INTS = 1, 2, 7


def attr_int(name: str, value: int) -> bytes:
    return _string(1, name) + _int(3, int(value)) + _uint(20, _ATTR_INT)


def attr_ints(name: str, values: Iterable[int]) -> bytes:
    body = b"".join(_int(8, int(v)) for v in values)
    return _string(1, name) + body + _uint(20, _ATTR_INTS)


def attr_float(name: str, value: float) -> bytes:
    return _string(1, name) + _fixed32(2, float(value)) + _uint(20, _ATTR_FLOAT)


# -- tensors (TensorProto) ----------------------------------------------------


def tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim:  # ascontiguousarray would promote 0-d scalars to shape (1,)
        array = np.ascontiguousarray(array)
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        raise ValueError(f"tensor {name!r} has unsupported dtype {array.dtype}")
    raw = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes()
    out = b"".join(_uint(1, d) for d in array.shape)
    out += _uint(2, code)
    out += _string(8, name)
    out += _bytes(9, raw)
    return out


# -- nodes, value infos, graph, model ----------------------------------------


def node(
    op_type: str,
    inputs: Sequence[str],
    outputs: Sequence[str],
    name: str = "",
    attrs: Sequence[bytes] = (),
) -> bytes:
    out = b"".join(_string(1, i) for i in inputs)
    out += b"".join(_string(2, o) for o in outputs)
    if name:
        out += _string(3, name)
    out += _string(4, op_type)
    out += b"".join(_bytes(5, a) for a in attrs)
    return out


def value_info(name: str, elem_type: int) -> bytes:
    tensor_type = _uint(1, elem_type)
    type_proto = _bytes(1, tensor_type)
    return _string(1, name) + _bytes(2, type_proto)


def graph(
    name: str,
    nodes: Sequence[bytes],
    initializers: Sequence[bytes],
    inputs: Sequence[bytes],
    outputs: Sequence[bytes],
) -> bytes:
    out = b"".join(_bytes(1, n) for n in nodes)
    out += _string(2, name)
    out += b"".join(_bytes(5, t) for t in initializers)
    out += b"".join(_bytes(11, v) for v in inputs)
    out += b"".join(_bytes(12, v) for v in outputs)
    return out


def model(graph_bytes: bytes, opset: int = 13) -> bytes:
    opset_entry = _uint(2, opset)  # default ("" / ai.onnx) domain
    return _uint(1, 8) + _bytes(7, graph_bytes) + _bytes(8, opset_entry)
