"""Dense numeric kernel: adapter downsampling, projection FFN, gate fusion,
cross-entropy, SGD, and a finite-difference gradient checker.

All math is double precision.  Shapes are validated explicitly on every
operation; nothing relies on implicit broadcasting.  Each forward operation
has a matching ``*_grads`` routine with closed-form gradients, so composites
can be trained and checked against central finite differences.

The two-layer projection uses tanh between its layers.  A smooth activation
keeps the finite-difference checks exact near machine precision; the choice
is otherwise unconstrained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_TENSOR_MAGIC = b"#tensors-v1\n"


def _as_vector(name: str, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def _require_shape(name: str, arr: np.ndarray, shape: tuple[int, ...]) -> None:
    if arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class GateParams:
    """Sigmoid gate over the concatenation of two size-d vectors.

    ``weight`` has shape (d, 2d) and ``bias`` shape (d,).
    """

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        d = self.bias.shape[0] if self.bias.ndim == 1 else -1
        if self.bias.ndim != 1 or self.weight.shape != (d, 2 * d):
            raise ValueError(
                f"gate shapes must be (d, 2d) and (d,), got {self.weight.shape} and {self.bias.shape}"
            )

    @property
    def dim(self) -> int:
        return self.bias.shape[0]


@dataclass
class FfnParams:
    """Two-layer feed-forward network: affine, tanh, affine."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ValueError("ffn weights must be 2-D")
        hidden, _ = self.w1.shape
        out, hidden2 = self.w2.shape
        if self.b1.shape != (hidden,) or hidden2 != hidden or self.b2.shape != (out,):
            raise ValueError("ffn layer dimensions do not chain")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]


@dataclass
class AdapterConfig:
    """Frame-stacking speech adapter: concatenate every ``group_size``
    consecutive frames, then project with ``ffn``."""

    ffn: FfnParams
    group_size: int = 5

    def __post_init__(self) -> None:
        if self.group_size < 1:
            raise ValueError(f"group_size must be >= 1, got {self.group_size}")


# ---------------------------------------------------------------------------
# forward operations


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def adapter_downsample(frames, group_size: int) -> np.ndarray:
    """Concatenate every ``group_size`` consecutive frames along the feature
    axis; frames beyond the last full group are dropped.

    ``frames`` is a (T, f) array or a list of equal-length vectors; the result
    has shape (T // group_size, group_size * f).
    """
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    if isinstance(frames, np.ndarray):
        if frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
        stacked = frames.astype(float)
    else:
        rows = [_as_vector("frame", f) for f in frames]
        if not rows:
            return np.zeros((0, 0))
        width = rows[0].shape[0]
        for i, row in enumerate(rows):
            if row.shape[0] != width:
                raise ValueError(
                    f"frame 0 has size {width} but frame {i} has size {row.shape[0]}"
                )
        stacked = np.vstack(rows)
    total, width = stacked.shape
    groups = total // group_size
    return stacked[: groups * group_size].reshape(groups, group_size * width)


def ffn_apply(params: FfnParams, x) -> np.ndarray:
    """affine -> tanh -> affine."""
    x = _as_vector("x", x)
    _require_shape("x", x, (params.in_dim,))
    hidden = np.tanh(params.w1 @ x + params.b1)
    return params.w2 @ hidden + params.b2


def apply_adapter(frames, config: AdapterConfig) -> np.ndarray:
    """Downsample then project each stacked frame through the adapter FFN."""
    stacked = adapter_downsample(frames, config.group_size)
    if stacked.shape[0] == 0:
        return np.zeros((0, config.ffn.out_dim))
    return np.vstack([ffn_apply(config.ffn, row) for row in stacked])


def gate_fuse(params: GateParams, e_hidden, e_emb) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise gated fusion of two size-d vectors.

    Returns ``(g, c)`` where ``g = sigmoid(W [e_hidden ; e_emb] + b)`` and
    ``c = g * e_hidden + (1 - g) * e_emb``.  Components of ``g`` lie strictly
    inside (0, 1) up to float64 saturation of the sigmoid, so ``c`` is an
    elementwise convex combination of its two inputs.
    """
    d = params.dim
    e_hidden = _as_vector("e_hidden", e_hidden)
    e_emb = _as_vector("e_emb", e_emb)
    _require_shape("e_hidden", e_hidden, (d,))
    _require_shape("e_emb", e_emb, (d,))
    gate = sigmoid(params.weight @ np.concatenate([e_hidden, e_emb]) + params.bias)
    fused = gate * e_hidden + (1.0 - gate) * e_emb
    return gate, fused


def embedding_lookup(table: np.ndarray, index: int) -> np.ndarray:
    table = np.asarray(table, dtype=float)
    if table.ndim != 2:
        raise ValueError(f"embedding table must be 2-D, got shape {table.shape}")
    if not 0 <= index < table.shape[0]:
        raise ValueError(f"embedding index {index} out of range [0, {table.shape[0]})")
    return table[index].copy()


def log_softmax(logits) -> np.ndarray:
    logits = _as_vector("logits", logits)
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy(logits, target: int) -> float:
    """Negative log softmax probability of ``target``, via a stable log-sum-exp."""
    logits = _as_vector("logits", logits)
    if not 0 <= target < logits.shape[0]:
        raise ValueError(f"target {target} out of range [0, {logits.shape[0]})")
    return float(-log_softmax(logits)[target])


# ---------------------------------------------------------------------------
# closed-form gradients


def gate_fuse_grads(
    params: GateParams, e_hidden, e_emb, d_fused
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backprop ``d_fused`` through :func:`gate_fuse`.

    Returns ``(d_weight, d_bias, d_e_hidden, d_e_emb)``.
    """
    d = params.dim
    e_hidden = _as_vector("e_hidden", e_hidden)
    e_emb = _as_vector("e_emb", e_emb)
    d_fused = _as_vector("d_fused", d_fused)
    _require_shape("d_fused", d_fused, (d,))
    concat = np.concatenate([e_hidden, e_emb])
    gate = sigmoid(params.weight @ concat + params.bias)
    d_gate = d_fused * (e_hidden - e_emb)
    d_pre = d_gate * gate * (1.0 - gate)
    d_weight = np.outer(d_pre, concat)
    d_concat = params.weight.T @ d_pre
    d_e_hidden = d_fused * gate + d_concat[:d]
    d_e_emb = d_fused * (1.0 - gate) + d_concat[d:]
    return d_weight, d_pre, d_e_hidden, d_e_emb


def ffn_grads(params: FfnParams, x, d_out) -> tuple[FfnParams, np.ndarray]:
    """Backprop ``d_out`` through :func:`ffn_apply`.

    Returns gradients packaged as an :class:`FfnParams` plus ``d_x``.
    """
    x = _as_vector("x", x)
    d_out = _as_vector("d_out", d_out)
    _require_shape("d_out", d_out, (params.out_dim,))
    hidden = np.tanh(params.w1 @ x + params.b1)
    d_w2 = np.outer(d_out, hidden)
    d_hidden = params.w2.T @ d_out
    d_pre = d_hidden * (1.0 - hidden**2)
    d_w1 = np.outer(d_pre, x)
    d_x = params.w1.T @ d_pre
    return FfnParams(d_w1, d_pre, d_w2, d_out.copy()), d_x


def cross_entropy_grads(logits, target: int) -> np.ndarray:
    """d loss / d logits, i.e. ``softmax(logits) - onehot(target)``."""
    probs = softmax(logits)
    if not 0 <= target < probs.shape[0]:
        raise ValueError(f"target {target} out of range [0, {probs.shape[0]})")
    probs[target] -= 1.0
    return probs


# ---------------------------------------------------------------------------
# fused projection pipeline (hidden state + token embedding -> class loss)


@dataclass
class FusionPipelineParams:
    """Everything needed to score one (hidden state, text token) pair:
    projection FFN, token embedding table, gate, and a linear class head."""

    ffn: FfnParams
    embedding: np.ndarray
    gate: GateParams
    head: np.ndarray

    def __post_init__(self) -> None:
        self.embedding = np.asarray(self.embedding, dtype=float)
        self.head = np.asarray(self.head, dtype=float)
        d = self.gate.dim
        if self.ffn.out_dim != d or self.embedding.shape[1] != d or self.head.shape[1] != d:
            raise ValueError("fusion pipeline dimensions do not chain")


def fusion_loss(params: FusionPipelineParams, hidden_state, token_id: int, target: int) -> float:
    """Project, embed, gate-fuse, score, and take cross-entropy against ``target``."""
    e_hidden = ffn_apply(params.ffn, hidden_state)
    e_emb = embedding_lookup(params.embedding, token_id)
    _, fused = gate_fuse(params.gate, e_hidden, e_emb)
    return cross_entropy(params.head @ fused, target)


def fusion_loss_and_grads(
    params: FusionPipelineParams, hidden_state, token_id: int, target: int
) -> tuple[float, FusionPipelineParams]:
    """Loss plus analytic gradients for every parameter of the pipeline."""
    hidden_state = _as_vector("hidden_state", hidden_state)
    e_hidden = ffn_apply(params.ffn, hidden_state)
    e_emb = embedding_lookup(params.embedding, token_id)
    _, fused = gate_fuse(params.gate, e_hidden, e_emb)
    logits = params.head @ fused
    loss = cross_entropy(logits, target)

    d_logits = cross_entropy_grads(logits, target)
    d_head = np.outer(d_logits, fused)
    d_fused = params.head.T @ d_logits
    d_gate_w, d_gate_b, d_e_hidden, d_e_emb = gate_fuse_grads(
        params.gate, e_hidden, e_emb, d_fused
    )
    d_ffn, _ = ffn_grads(params.ffn, hidden_state, d_e_hidden)
    d_embedding = np.zeros_like(params.embedding)
    d_embedding[token_id] = d_e_emb
    grads = FusionPipelineParams(
        ffn=d_ffn,
        embedding=d_embedding,
        gate=GateParams(d_gate_w, d_gate_b),
        head=d_head,
    )
    return loss, grads


# ---------------------------------------------------------------------------
# training utilities


def sgd_step(params, grads, lr: float):
    """``params - lr * grads``, elementwise.  Accepts a single array or a
    dict of arrays; always returns new values."""
    if isinstance(params, np.ndarray):
        grads = np.asarray(grads, dtype=float)
        _require_shape("grads", grads, params.shape)
        return params - lr * grads
    if isinstance(params, dict):
        if set(params) != set(grads):
            raise ValueError("params and grads must have identical keys")
        return {k: sgd_step(v, grads[k], lr) for k, v in params.items()}
    raise TypeError(f"unsupported parameter container {type(params).__name__}")


def pack_arrays(arrays: list[np.ndarray]) -> np.ndarray:
    """Flatten a list of arrays into one vector (for gradient checking)."""
    return np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])


def unpack_arrays(theta: np.ndarray, shapes: list[tuple[int, ...]]) -> list[np.ndarray]:
    """Inverse of :func:`pack_arrays` given the original shapes."""
    out = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        out.append(theta[offset : offset + size].reshape(shape))
        offset += size
    if offset != theta.shape[0]:
        raise ValueError(f"theta has {theta.shape[0]} entries, shapes need {offset}")
    return out


def finite_diff_check(loss_and_grad, theta: np.ndarray, eps: float, loss_fn=None) -> float:
    """Max discrepancy between analytic gradients and central differences.

    ``loss_and_grad(theta)`` must return ``(loss, grad)`` with ``grad`` the
    analytic gradient at ``theta``.  Each coordinate is probed with a central
    difference of step ``eps``; the reported error is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)`` maximized over
    coordinates (relative for large gradients, absolute below magnitude 1).

    The probe points need only the loss; pass ``loss_fn`` to evaluate them
    without the gradient work.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if loss_fn is None:
        loss_fn = lambda t: loss_and_grad(t)[0]
    theta = np.asarray(theta, dtype=float)
    loss, grad = loss_and_grad(theta)
    grad = np.asarray(grad, dtype=float)
    _require_shape("grad", grad, theta.shape)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise ValueError("loss or gradient is not finite at the base point")
    worst = 0.0
    for i in range(theta.shape[0]):
        probe = theta.copy()
        probe[i] = theta[i] + eps
        up = loss_fn(probe)
        probe[i] = theta[i] - eps
        down = loss_fn(probe)
        if not np.isfinite(up) or not np.isfinite(down):
            raise ValueError(f"loss is not finite at probe coordinate {i}")
        numeric = (up - down) / (2.0 * eps)
        denom = max(1.0, abs(grad[i]), abs(numeric))
        worst = max(worst, abs(grad[i] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# tensor persistence

# Format "tensors-v1": a magic line, one JSON header line listing tensor
# names/shapes plus optional metadata, then the raw float64 little-endian
# payloads concatenated in header order.


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {
        "tensors": [
            {"name": name, "shape": list(np.asarray(t).shape)} for name, t in tensors.items()
        ],
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write(_TENSOR_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for tensor in tensors.values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != _TENSOR_MAGIC:
            raise ValueError(f"not a tensors-v1 file: bad magic {magic!r}")
        header = json.loads(fh.readline().decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"truncated payload for tensor {entry['name']!r}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return tensors, header.get("meta", {})
