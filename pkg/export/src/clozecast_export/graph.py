"""Compose a BERT-style masked-LM forward pass as an ONNX graph.

The graph is emitted against opset 13 using only elementary operators
(Add, Cast, Div, Erf, Gather, MatMul, Mul, Range, ReduceMean, Reshape,
Shape, Softmax, Sqrt, Sub, Transpose, Unsqueeze): layer normalization,
GELU, and multi-head attention are all spelled out from those pieces,
so the bundle needs no fused-kernel support from whatever runs it.

Inputs are ``input_ids`` and ``attention_mask`` (int64, [batch, seq]);
the single output ``logits`` is float32 [batch, seq, vocab]. Token-type
embeddings are folded in as the constant all-zeros segment row, which is
what an unsegmented cloze prompt uses.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from . import onnx_writer as ow
from .errors import ExportError


class _Graph:
    """Accumulates initializers and nodes with collision-checked names."""

    def __init__(self):
        self.nodes: list[bytes] = []
        self.initializers: list[bytes] = []
        self._names: set[str] = set()

    def claim(self, name: str) -> str:
        if name in self._names:
            raise ExportError(f"duplicate tensor name {name!r} in emitted graph")
        self._names.add(name)
        return name

    def init(self, name: str, array: np.ndarray) -> str:
        self.claim(name)
        self.initializers.append(ow.tensor(name, array))
        return name

    def op(self, op_type: str, inputs: list[str], out: str, attrs=()) -> str:
        self.claim(out)
        self.nodes.append(ow.node(op_type, inputs, [out], name=out, attrs=attrs))
        return out


def build_mlm_graph(
    state: Mapping[str, np.ndarray],
    *,
    num_layers: int,
    num_heads: int,
    layer_norm_eps: float,
    graph_name: str = "mlm-encoder",
) -> bytes:
    """Serialize checkpoint weights into a self-contained ONNX model."""

    def get(key: str) -> np.ndarray:
        if key not in state:
            raise ExportError(f"checkpoint state lacks tensor {key!r}")
        return np.asarray(state[key], dtype=np.float32)

    word = get("bert.embeddings.word_embeddings.weight")  # [vocab, hidden]
    hidden = word.shape[1]
    if hidden % num_heads:
        raise ExportError(
            f"hidden size {hidden} is not divisible by {num_heads} attention heads"
        )
    head_dim = hidden // num_heads

    g = _Graph()
    ids = g.claim("input_ids")
    mask = g.claim("attention_mask")

    one_f = g.init("const.one", np.float32(1.0))
    half_f = g.init("const.half", np.float32(0.5))
    sqrt2_f = g.init("const.sqrt2", np.float32(math.sqrt(2.0)))
    eps_f = g.init("const.ln_eps", np.float32(layer_norm_eps))
    scale_f = g.init("const.sqrt_head_dim", np.float32(math.sqrt(head_dim)))
    mask_min = g.init("const.mask_min", np.float32(np.finfo(np.float32).min))
    zero_i = g.init("const.zero", np.int64(0))
    step_i = g.init("const.step", np.int64(1))
    seq_axis = g.init("const.seq_axis", np.int64(1))
    mask_axes = g.init("const.mask_axes", np.asarray([1, 2], dtype=np.int64))
    head_split = g.init(
        "const.head_split", np.asarray([0, 0, num_heads, head_dim], dtype=np.int64)
    )
    head_merge = g.init("const.head_merge", np.asarray([0, 0, hidden], dtype=np.int64))

    def linear(x: str, key: str, out: str) -> str:
        # torch Linear stores weight as [out, in]; MatMul wants [in, out]
        w = g.init(key + ".weight_t", get(key + ".weight").T)
        b = g.init(key + ".bias", get(key + ".bias"))
        mm = g.op("MatMul", [x, w], out + ".matmul")
        return g.op("Add", [mm, b], out)

    def layer_norm(x: str, key: str, out: str) -> str:
        gamma = g.init(key + ".gamma", get(key + ".weight"))
        beta = g.init(key + ".beta", get(key + ".bias"))
        reduce_attrs = [ow.attr_ints("axes", [-1]), ow.attr_int("keepdims", 1)]
        mean = g.op("ReduceMean", [x], out + ".mean", attrs=reduce_attrs)
        centered = g.op("Sub", [x, mean], out + ".centered")
        squared = g.op("Mul", [centered, centered], out + ".squared")
        var = g.op("ReduceMean", [squared], out + ".var", attrs=reduce_attrs)
        var_eps = g.op("Add", [var, eps_f], out + ".var_eps")
        std = g.op("Sqrt", [var_eps], out + ".std")
        norm = g.op("Div", [centered, std], out + ".norm")
        scaled = g.op("Mul", [norm, gamma], out + ".scaled")
        return g.op("Add", [scaled, beta], out)

    def gelu(x: str, out: str) -> str:
        # exact-erf form: 0.5 * x * (1 + erf(x / sqrt(2)))
        arg = g.op("Div", [x, sqrt2_f], out + ".arg")
        erf = g.op("Erf", [arg], out + ".erf")
        gate = g.op("Add", [erf, one_f], out + ".gate")
        half_x = g.op("Mul", [x, half_f], out + ".half_x")
        return g.op("Mul", [half_x, gate], out)

    # -- embeddings: word + segment-zero row, then positions, then LN --------
    word_table = g.init("embeddings.word", word)
    pos_table = g.init(
        "embeddings.position", get("bert.embeddings.position_embeddings.weight")
    )
    segment_zero = g.init(
        "embeddings.segment_zero",
        get("bert.embeddings.token_type_embeddings.weight")[0],
    )
    words = g.op("Gather", [word_table, ids], "embeddings.words")
    typed = g.op("Add", [words, segment_zero], "embeddings.typed")
    ids_shape = g.op("Shape", [ids], "embeddings.ids_shape")
    seq_len = g.op("Gather", [ids_shape, seq_axis], "embeddings.seq_len")
    positions = g.op("Range", [zero_i, seq_len, step_i], "embeddings.positions")
    pos_rows = g.op("Gather", [pos_table, positions], "embeddings.position_rows")
    summed = g.op("Add", [typed, pos_rows], "embeddings.sum")
    x = layer_norm(summed, "bert.embeddings.LayerNorm", "embeddings.out")

    # -- additive attention bias: (1 - mask) * float32_min, [batch,1,1,seq] --
    mask_f = g.op("Cast", [mask], "mask.float", attrs=[ow.attr_int("to", ow.FLOAT)])
    mask_4d = g.op("Unsqueeze", [mask_f, mask_axes], "mask.expanded")
    mask_inv = g.op("Sub", [one_f, mask_4d], "mask.inverted")
    att_bias = g.op("Mul", [mask_inv, mask_min], "mask.bias")

    def heads(x: str, perm: list[int], out: str) -> str:
        split = g.op("Reshape", [x, head_split], out + ".split")
        return g.op("Transpose", [split], out, attrs=[ow.attr_ints("perm", perm)])

    for i in range(num_layers):
        p = f"bert.encoder.layer.{i}"
        o = f"layer{i}"
        q = linear(x, p + ".attention.self.query", o + ".q")
        k = linear(x, p + ".attention.self.key", o + ".k")
        v = linear(x, p + ".attention.self.value", o + ".v")
        qh = heads(q, [0, 2, 1, 3], o + ".q_heads")  # [B, heads, S, dim]
        kh = heads(k, [0, 2, 3, 1], o + ".k_heads")  # [B, heads, dim, S]
        vh = heads(v, [0, 2, 1, 3], o + ".v_heads")
        raw = g.op("MatMul", [qh, kh], o + ".scores_raw")
        scaled = g.op("Div", [raw, scale_f], o + ".scores_scaled")
        scores = g.op("Add", [scaled, att_bias], o + ".scores")
        probs = g.op("Softmax", [scores], o + ".probs")
        ctx = g.op("MatMul", [probs, vh], o + ".context_heads")
        ctx_p = g.op(
            "Transpose", [ctx], o + ".context_perm",
            attrs=[ow.attr_ints("perm", [0, 2, 1, 3])],
        )
        merged = g.op("Reshape", [ctx_p, head_merge], o + ".context")
        proj = linear(merged, p + ".attention.output.dense", o + ".att_proj")
        att_res = g.op("Add", [proj, x], o + ".att_residual")
        x = layer_norm(att_res, p + ".attention.output.LayerNorm", o + ".att_out")
        inter = linear(x, p + ".intermediate.dense", o + ".ffn_dense")
        act = gelu(inter, o + ".ffn_act")
        ffn = linear(act, p + ".output.dense", o + ".ffn_proj")
        ffn_res = g.op("Add", [ffn, x], o + ".ffn_residual")
        x = layer_norm(ffn_res, p + ".output.LayerNorm", o + ".out")

    # -- MLM head: dense + GELU + LN, then tied decoder projection -----------
    h = linear(x, "cls.predictions.transform.dense", "head.dense")
    h = gelu(h, "head.act")
    h = layer_norm(h, "cls.predictions.transform.LayerNorm", "head.norm")
    dec_w = g.init("head.decoder_weight_t", get("cls.predictions.decoder.weight").T)
    dec_b = g.init("head.decoder_bias", get("cls.predictions.bias"))
    mm = g.op("MatMul", [h, dec_w], "logits.matmul")
    g.op("Add", [mm, dec_b], "logits")

    graph_bytes = ow.graph(
        name=graph_name,
        nodes=g.nodes,
        initializers=g.initializers,
        inputs=[ow.value_info(ids, ow.INT64), ow.value_info(mask, ow.INT64)],
        outputs=[ow.value_info("logits", ow.FLOAT)],
    )
    return ow.model(graph_bytes, opset=13)
