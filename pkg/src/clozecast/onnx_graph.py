"""Self-contained ONNX graph loader and numpy interpreter.

Reads the protobuf wire format directly and executes a fixed operator
subset sufficient for transformer encoder graphs (embeddings, attention,
layer norm, GELU, tied decoder head). Graphs using anything outside that
subset are rejected up front with the offending operator names.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import BundleInvalid, UnsupportedGraph

# --------------------------------------------------------------------------
# protobuf wire format

_VARINT, _FIXED64, _LEN, _FIXED32 = 0, 1, 2, 5


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise BundleInvalid("truncated varint in graph file")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise BundleInvalid("varint wider than 64 bits in graph file")


def _signed(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _fields(data: bytes) -> dict[int, list[tuple[int, object]]]:
    """Decode one message into {field_number: [(wire_type, payload), ...]}."""
    out: dict[int, list[tuple[int, object]]] = {}
    pos = 0
    while pos < len(data):
        key, pos = _read_varint(data, pos)
        number, wire = key >> 3, key & 0x7
        if wire == _VARINT:
            value, pos = _read_varint(data, pos)
        elif wire == _LEN:
            size, pos = _read_varint(data, pos)
            if pos + size > len(data):
                raise BundleInvalid("truncated length-delimited field in graph file")
            value = data[pos : pos + size]
            pos += size
        elif wire == _FIXED32:
            value = data[pos : pos + 4]
            pos += 4
        elif wire == _FIXED64:
            value = data[pos : pos + 8]
            pos += 8
        else:
            raise BundleInvalid(f"unsupported protobuf wire type {wire}")
        out.setdefault(number, []).append((wire, value))
    return out


def _scalar(fields: dict, number: int, default=None):
    entries = fields.get(number)
    if not entries:
        return default
    wire, value = entries[-1]
    return value


def _string(fields: dict, number: int, default: str = "") -> str:
    raw = _scalar(fields, number)
    return raw.decode("utf-8") if isinstance(raw, bytes) else default


def _int_list(fields: dict, number: int, signed: bool = True) -> list[int]:
    """Repeated integer field, accepting both packed and unpacked encodings."""
    out: list[int] = []
    for wire, value in fields.get(number, []):
        if wire == _VARINT:
            out.append(_signed(value) if signed else value)
        elif wire == _LEN:
            pos = 0
            while pos < len(value):
                item, pos = _read_varint(value, pos)
                out.append(_signed(item) if signed else item)
        else:
            raise BundleInvalid(f"integer field {number} has wire type {wire}")
    return out


def _float_list(fields: dict, number: int) -> np.ndarray:
    parts: list[np.ndarray] = []
    for wire, value in fields.get(number, []):
        if wire == _FIXED32:
            parts.append(np.frombuffer(value, dtype="<f4"))
        elif wire == _LEN:
            parts.append(np.frombuffer(value, dtype="<f4"))
        else:
            raise BundleInvalid(f"float field {number} has wire type {wire}")
    if not parts:
        return np.array([], dtype="<f4")
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# ONNX messages

_TENSOR_DTYPES = {
    1: np.dtype("<f4"),  # FLOAT
    6: np.dtype("<i4"),  # INT32
    7: np.dtype("<i8"),  # INT64
    9: np.dtype("bool"),  # BOOL
    11: np.dtype("<f8"),  # DOUBLE
}


def _parse_tensor(data: bytes) -> tuple[str, np.ndarray]:
    f = _fields(data)
    dims = _int_list(f, 1, signed=False)
    data_type = _scalar(f, 2, 0)
    name = _string(f, 8)
    dtype = _TENSOR_DTYPES.get(data_type)
    if dtype is None:
        raise UnsupportedGraph(f"tensor {name!r} has unsupported data type {data_type}")
    raw = _scalar(f, 9)
    if raw is not None:
        if dtype == np.dtype("bool"):
            array = np.frombuffer(raw, dtype="<u1").astype(bool)
        else:
            array = np.frombuffer(raw, dtype=dtype)
    elif data_type == 1:
        array = _float_list(f, 4)
    elif data_type == 7:
        array = np.asarray(_int_list(f, 7), dtype="<i8")
    elif data_type == 6:
        array = np.asarray(_int_list(f, 5), dtype="<i4")
    elif data_type == 11:
        parts = [np.frombuffer(v, dtype="<f8") for _, v in f.get(10, [])]
        array = np.concatenate(parts) if parts else np.array([], dtype="<f8")
    else:
        array = np.array([], dtype=dtype)
    expected = int(np.prod(dims)) if dims else array.size
    if dims and array.size != expected:
        raise BundleInvalid(
            f"tensor {name!r} declares shape {dims} but holds {array.size} values"
        )
    return name, array.reshape(dims) if dims else array.reshape(())


_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


def _parse_attribute(data: bytes):
    f = _fields(data)
    name = _string(f, 1)
    attr_type = _scalar(f, 20, 0)
    if attr_type == _ATTR_FLOAT:
        return name, struct.unpack("<f", _scalar(f, 2))[0]
    if attr_type == _ATTR_INT:
        return name, _signed(_scalar(f, 3, 0))
    if attr_type == _ATTR_STRING:
        return name, _scalar(f, 4, b"").decode("utf-8")
    if attr_type == _ATTR_TENSOR:
        return name, _parse_tensor(_scalar(f, 5))[1]
    if attr_type == _ATTR_FLOATS:
        return name, [float(x) for x in _float_list(f, 7)]
    if attr_type == _ATTR_INTS:
        return name, _int_list(f, 8)
    raise UnsupportedGraph(f"attribute {name!r} has unsupported type {attr_type}")


@dataclass(frozen=True)
class Node:
    op_type: str
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attrs: dict = field(default_factory=dict)

    def attr(self, key: str, default=None):
        return self.attrs.get(key, default)


def _parse_node(data: bytes) -> Node:
    f = _fields(data)
    inputs = tuple(v.decode("utf-8") for _, v in f.get(1, []))
    outputs = tuple(v.decode("utf-8") for _, v in f.get(2, []))
    attrs = dict(_parse_attribute(v) for _, v in f.get(5, []))
    return Node(
        op_type=_string(f, 4),
        name=_string(f, 3),
        inputs=inputs,
        outputs=outputs,
        attrs=attrs,
    )


def _parse_value_info(data: bytes) -> tuple[str, np.dtype | None]:
    f = _fields(data)
    name = _string(f, 1)
    type_raw = _scalar(f, 2)
    elem: np.dtype | None = None
    if type_raw is not None:
        tensor_type = _scalar(_fields(type_raw), 1)
        if tensor_type is not None:
            elem_type = _scalar(_fields(tensor_type), 1, 0)
            elem = _TENSOR_DTYPES.get(elem_type)
    return name, elem


# --------------------------------------------------------------------------
# interpreter

_SUPPORTED_OPS = frozenset(
    {
        "Add",
        "Cast",
        "Constant",
        "Div",
        "Erf",
        "Gather",
        "MatMul",
        "Mul",
        "Range",
        "ReduceMean",
        "Reshape",
        "Shape",
        "Softmax",
        "Sqrt",
        "Sub",
        "Tanh",
        "Transpose",
        "Unsqueeze",
    }
)


class GraphRunner:
    """Parsed ONNX model plus an evaluator for its node list."""

    def __init__(
        self,
        nodes: list[Node],
        initializers: dict[str, np.ndarray],
        inputs: list[tuple[str, np.dtype | None]],
        outputs: list[str],
        opset: int,
        graph_name: str = "",
    ):
        self.nodes = nodes
        self.initializers = initializers
        self.graph_name = graph_name
        self.opset = opset
        self.output_names = outputs
        self.input_names = [name for name, _ in inputs if name not in initializers]
        self._input_dtypes = {name: d for name, d in inputs if name not in initializers}
        unsupported = sorted({n.op_type for n in nodes} - _SUPPORTED_OPS)
        if unsupported:
            raise UnsupportedGraph(
                "graph uses unsupported operators: " + ", ".join(unsupported)
            )

    # -- construction ------------------------------------------------------

    @classmethod
    def from_bytes(cls, data: bytes) -> "GraphRunner":
        try:
            model = _fields(data)
            graph_raw = _scalar(model, 7)
            if graph_raw is None:
                raise BundleInvalid("model file holds no graph")
            opset = 0
            for _, raw in model.get(8, []):
                entry = _fields(raw)
                domain = _string(entry, 1)
                if domain in ("", "ai.onnx"):
                    opset = _scalar(entry, 2, 0)
            g = _fields(graph_raw)
            nodes = [_parse_node(v) for _, v in g.get(1, [])]
            initializers = dict(_parse_tensor(v) for _, v in g.get(5, []))
            inputs = [_parse_value_info(v) for _, v in g.get(11, [])]
            outputs = [_parse_value_info(v)[0] for _, v in g.get(12, [])]
        except (BundleInvalid, UnsupportedGraph):
            raise
        except Exception as exc:
            raise BundleInvalid(f"cannot parse ONNX graph: {exc}") from exc
        if not outputs:
            raise BundleInvalid("graph declares no outputs")
        return cls(nodes, initializers, inputs, outputs, opset, _string(g, 2))

    @classmethod
    def from_file(cls, path) -> "GraphRunner":
        return cls.from_bytes(Path(path).read_bytes())

    # -- execution ---------------------------------------------------------

    def run(self, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        unknown = set(feeds) - set(self.input_names)
        if unknown:
            raise ValueError(f"unexpected graph inputs: {sorted(unknown)}")
        missing = set(self.input_names) - set(feeds)
        if missing:
            raise ValueError(f"missing graph inputs: {sorted(missing)}")
        values: dict[str, np.ndarray] = dict(self.initializers)
        for name, array in feeds.items():
            array = np.asarray(array)
            declared = self._input_dtypes.get(name)
            if declared is not None and array.dtype != declared:
                array = array.astype(declared)
            values[name] = array
        for node in self.nodes:
            for i in node.inputs:
                if i and i not in values:
                    raise BundleInvalid(
                        f"node {node.name or node.op_type!r} reads undefined value {i!r}"
                    )
            args = [values[i] if i else None for i in node.inputs]
            results = getattr(self, f"_op_{node.op_type.lower()}")(node, args)
            if not isinstance(results, tuple):
                results = (results,)
            for out_name, result in zip(node.outputs, results):
                if out_name:
                    values[out_name] = result
        out = {}
        for name in self.output_names:
            if name not in values:
                raise BundleInvalid(f"graph output {name!r} was never produced")
            out[name] = values[name]
        return out

    # -- operators ---------------------------------------------------------

    @staticmethod
    def _op_add(node, args):
        return args[0] + args[1]

    @staticmethod
    def _op_sub(node, args):
        return args[0] - args[1]

    @staticmethod
    def _op_mul(node, args):
        return args[0] * args[1]

    @staticmethod
    def _op_div(node, args):
        return args[0] / args[1]

    @staticmethod
    def _op_sqrt(node, args):
        return np.sqrt(args[0])

    @staticmethod
    def _op_erf(node, args):
        return erf(args[0])

    @staticmethod
    def _op_tanh(node, args):
        return np.tanh(args[0])

    @staticmethod
    def _op_matmul(node, args):
        return np.matmul(args[0], args[1])

    @staticmethod
    def _op_gather(node, args):
        data, indices = args
        axis = int(node.attr("axis", 0))
        return np.take(data, np.asarray(indices), axis=axis)

    def _op_softmax(self, node, args):
        x = args[0]
        axis = int(node.attr("axis", -1 if self.opset >= 13 else 1))
        if self.opset < 13 and axis % x.ndim != x.ndim - 1:
            raise UnsupportedGraph(
                f"Softmax with flattening semantics (opset {self.opset}, axis {axis})"
            )
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        return e / np.sum(e, axis=axis, keepdims=True)

    @staticmethod
    def _op_reducemean(node, args):
        x = args[0]
        axes = node.attr("axes")
        keepdims = bool(node.attr("keepdims", 1))
        axis = tuple(int(a) for a in axes) if axes is not None else None
        return np.mean(x, axis=axis, keepdims=keepdims)

    @staticmethod
    def _op_reshape(node, args):
        data, shape = args
        target = [int(v) for v in np.asarray(shape).ravel()]
        allowzero = bool(node.attr("allowzero", 0))
        if not allowzero:
            target = [
                data.shape[i] if v == 0 else v for i, v in enumerate(target)
            ]
        return data.reshape(target)

    @staticmethod
    def _op_transpose(node, args):
        x = args[0]
        perm = node.attr("perm")
        return np.transpose(x, axes=[int(p) for p in perm] if perm else None)

    def _op_unsqueeze(self, node, args):
        x = args[0]
        if len(args) > 1 and args[1] is not None:
            axes = [int(a) for a in np.asarray(args[1]).ravel()]
        else:
            attr = node.attr("axes")
            if attr is None:
                raise BundleInvalid("Unsqueeze without axes input or attribute")
            axes = [int(a) for a in attr]
        out_rank = x.ndim + len(axes)
        normalized = sorted(a % out_rank for a in axes)
        if len(set(normalized)) != len(normalized):
            raise BundleInvalid(f"Unsqueeze axes repeat after normalization: {axes}")
        for a in normalized:
            x = np.expand_dims(x, a)
        return x

    @staticmethod
    def _op_cast(node, args):
        to = int(node.attr("to", 0))
        dtype = _TENSOR_DTYPES.get(to)
        if dtype is None:
            raise UnsupportedGraph(f"Cast to unsupported data type {to}")
        return args[0].astype(dtype)

    @staticmethod
    def _op_shape(node, args):
        return np.asarray(args[0].shape, dtype="<i8")

    @staticmethod
    def _op_range(node, args):
        start, limit, delta = (np.asarray(a).item() for a in args)
        dtype = np.asarray(args[0]).dtype
        return np.arange(start, limit, delta, dtype=dtype)

    @staticmethod
    def _op_constant(node, args):
        for key in ("value", "value_int", "value_float", "value_ints", "value_floats"):
            if key in node.attrs:
                raw = node.attrs[key]
                if key == "value":
                    return np.asarray(raw)
                if key == "value_int":
                    return np.asarray(raw, dtype="<i8")
                if key == "value_float":
                    return np.asarray(raw, dtype="<f4")
                if key == "value_ints":
                    return np.asarray(raw, dtype="<i8")
                return np.asarray(raw, dtype="<f4")
        raise BundleInvalid("Constant node carries no value attribute")
