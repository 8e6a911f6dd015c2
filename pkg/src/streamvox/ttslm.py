"""Toy autoregressive speech-token model driven by the read/write schedule.

The real system this mirrors runs a pretrained decoder-only transformer over
an extended vocabulary.  Here the predictor is pluggable: anything with a
``vocab`` attribute and a ``logits(visible, prev_ids)`` method works, and the
bundled reference implementation is a small linear model over the feature
``[mean of visible fused representations ; embedding of previous token]``.
What the module actually proves is schedule semantics: the masked
interleaved loss conditions each speech token on exactly its visible prefix,
decoding follows the read/write cadence, and all gradients are closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import records
from .numerics import (
    FfnParams,
    GateParams,
    cross_entropy,
    cross_entropy_grads,
    ffn_apply,
    ffn_grads,
    gate_fuse,
    gate_fuse_grads,
    load_tensors,
    log_softmax,
    save_tensors,
    softmax,
)
from .schedule import READ, WRITE, Action, SchedulePolicy, visible_prefix

KIND_TEXT = "text"
KIND_SPEECH = "speech"
KIND_EOS = "eos"

DEFAULT_SPEECH_SIZE = 6561


@dataclass(frozen=True)
class ExtendedVocab:
    """Token-id layout: text ids first, then speech ids, then one
    end-of-speech id.  Ranges are contiguous and disjoint."""

    text_size: int
    speech_size: int = DEFAULT_SPEECH_SIZE

    def __post_init__(self) -> None:
        if self.text_size < 0 or self.speech_size < 1:
            raise ValueError("vocabulary sizes must be non-negative (speech >= 1)")

    @property
    def eos_id(self) -> int:
        return self.text_size + self.speech_size

    @property
    def total_size(self) -> int:
        return self.text_size + self.speech_size + 1

    def kind(self, token_id: int) -> str:
        if not 0 <= token_id < self.total_size:
            raise ValueError(f"token id {token_id} out of range [0, {self.total_size})")
        if token_id < self.text_size:
            return KIND_TEXT
        if token_id < self.text_size + self.speech_size:
            return KIND_SPEECH
        return KIND_EOS

    def split(self, token_id: int) -> tuple[str, int]:
        """Token id -> (kind, index local to that kind)."""
        kind = self.kind(token_id)
        if kind == KIND_TEXT:
            return kind, token_id
        if kind == KIND_SPEECH:
            return kind, token_id - self.text_size
        return kind, 0

    def text_token(self, local: int) -> int:
        if not 0 <= local < self.text_size:
            raise ValueError(f"text index {local} out of range [0, {self.text_size})")
        return local

    def speech_token(self, local: int) -> int:
        if not 0 <= local < self.speech_size:
            raise ValueError(f"speech index {local} out of range [0, {self.speech_size})")
        return self.text_size + local


class Predictor(Protocol):
    vocab: ExtendedVocab

    def logits(self, visible: np.ndarray, prev_ids: Sequence[int]) -> np.ndarray: ...


@dataclass
class PredictorParams:
    """Reference linear predictor.

    ``token_emb`` has one row per vocabulary id plus a final start-of-stream
    row used before any token has been generated.  The feature vector is the
    mean of the visible fused representations concatenated with the embedding
    of the previous token; two stacked affine maps take it to logits over the
    extended vocabulary.
    """

    vocab: ExtendedVocab
    token_emb: np.ndarray
    feat_weight: np.ndarray
    feat_bias: np.ndarray
    out_weight: np.ndarray
    out_bias: np.ndarray

    def __post_init__(self) -> None:
        self.token_emb = np.asarray(self.token_emb, dtype=float)
        self.feat_weight = np.asarray(self.feat_weight, dtype=float)
        self.feat_bias = np.asarray(self.feat_bias, dtype=float)
        self.out_weight = np.asarray(self.out_weight, dtype=float)
        self.out_bias = np.asarray(self.out_bias, dtype=float)
        if self.token_emb.shape[0] != self.vocab.total_size + 1:
            raise ValueError("token_emb must have total_size + 1 rows (last row = start)")
        hidden, feat = self.feat_weight.shape
        if self.feat_bias.shape != (hidden,):
            raise ValueError("feat_bias does not match feat_weight")
        if feat <= self.emb_dim:
            raise ValueError("feature dimension must exceed the embedding dimension")
        if self.out_weight.shape != (self.vocab.total_size, hidden):
            raise ValueError("out_weight must map hidden -> total vocabulary size")
        if self.out_bias.shape != (self.vocab.total_size,):
            raise ValueError("out_bias does not match out_weight")

    @property
    def emb_dim(self) -> int:
        return self.token_emb.shape[1]

    @property
    def fused_dim(self) -> int:
        return self.feat_weight.shape[1] - self.emb_dim

    @property
    def start_row(self) -> int:
        return self.vocab.total_size

    def _feature(self, visible: np.ndarray, prev_ids: Sequence[int]) -> np.ndarray:
        if visible.ndim != 2 or visible.shape[0] < 1 or visible.shape[1] != self.fused_dim:
            raise ValueError(
                f"visible must be (v >= 1, {self.fused_dim}), got {visible.shape}"
            )
        prev = prev_ids[-1] if len(prev_ids) else self.start_row
        return np.concatenate([visible.mean(axis=0), self.token_emb[prev]])

    def logits(self, visible: np.ndarray, prev_ids: Sequence[int]) -> np.ndarray:
        feature = self._feature(np.asarray(visible, dtype=float), prev_ids)
        hidden = self.feat_weight @ feature + self.feat_bias
        return self.out_weight @ hidden + self.out_bias

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "token_emb": self.token_emb,
            "feat_weight": self.feat_weight,
            "feat_bias": self.feat_bias,
            "out_weight": self.out_weight,
            "out_bias": self.out_bias,
        }

    def replace(self, arrays: dict[str, np.ndarray]) -> "PredictorParams":
        return PredictorParams(vocab=self.vocab, **arrays)


def init_predictor(
    vocab: ExtendedVocab,
    fused_dim: int,
    emb_dim: int = 8,
    hidden_dim: int = 16,
    rng: np.random.Generator | None = None,
) -> PredictorParams:
    rng = rng or np.random.default_rng(0)
    scale = 0.1
    return PredictorParams(
        vocab=vocab,
        token_emb=scale * rng.standard_normal((vocab.total_size + 1, emb_dim)),
        feat_weight=scale * rng.standard_normal((hidden_dim, fused_dim + emb_dim)),
        feat_bias=np.zeros(hidden_dim),
        out_weight=scale * rng.standard_normal((vocab.total_size, hidden_dim)),
        out_bias=np.zeros(vocab.total_size),
    )


# ---------------------------------------------------------------------------
# masked interleaved loss


def _check_inputs(C, Y: Sequence[int], vocab: ExtendedVocab) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] < 1:
        raise ValueError(f"fused representations must be a non-empty 2-D array, got {C.shape}")
    for token in Y:
        if vocab.kind(token) == KIND_TEXT:
            raise ValueError(f"token {token} is text-kind; speech streams may not contain it")
    return C


def interleaved_loss_terms(
    C, Y: Sequence[int], policy: SchedulePolicy, model: Predictor
) -> np.ndarray:
    """Per-position negative log probabilities under the schedule mask.

    Position ``i`` is scored with the model conditioned on exactly
    ``visible_prefix(i)`` fused representations and the previously generated
    tokens; representations past the prefix are never passed to the model.
    """
    C = _check_inputs(C, Y, model.vocab)
    n = C.shape[0]
    terms = np.empty(len(Y))
    for i, target in enumerate(Y, start=1):
        v = visible_prefix(i, n, policy)
        logits = model.logits(C[:v], Y[: i - 1])
        terms[i - 1] = cross_entropy(logits, target)
    return terms


def interleaved_loss(C, Y: Sequence[int], policy: SchedulePolicy, model: Predictor) -> float:
    return float(interleaved_loss_terms(C, Y, policy, model).sum())


def predictive_distribution(
    C, prev_ids: Sequence[int], position: int, policy: SchedulePolicy, model: Predictor
) -> np.ndarray:
    """Distribution over the next token at 1-based ``position``."""
    C = np.asarray(C, dtype=float)
    v = visible_prefix(position, C.shape[0], policy)
    return softmax(model.logits(C[:v], prev_ids))


def interleaved_loss_and_grads(
    C, Y: Sequence[int], policy: SchedulePolicy, params: PredictorParams
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Loss, analytic parameter gradients, and the gradient w.r.t. ``C``."""
    C = _check_inputs(C, Y, params.vocab)
    n, d = C.shape
    grads = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    d_C = np.zeros_like(C)
    total = 0.0
    for i, target in enumerate(Y, start=1):
        v = visible_prefix(i, n, policy)
        prev = Y[i - 2] if i >= 2 else params.start_row
        feature = np.concatenate([C[:v].mean(axis=0), params.token_emb[prev]])
        hidden = params.feat_weight @ feature + params.feat_bias
        logits = params.out_weight @ hidden + params.out_bias
        total += cross_entropy(logits, target)

        d_logits = cross_entropy_grads(logits, target)
        grads["out_weight"] += np.outer(d_logits, hidden)
        grads["out_bias"] += d_logits
        d_hidden = params.out_weight.T @ d_logits
        grads["feat_weight"] += np.outer(d_hidden, feature)
        grads["feat_bias"] += d_hidden
        d_feature = params.feat_weight.T @ d_hidden
        d_C[:v] += d_feature[:d] / v
        grads["token_emb"][prev] += d_feature[d:]
    return total, grads, d_C


# ---------------------------------------------------------------------------
# streaming decode


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "greedy"
    temperature: float = 1.0
    max_tokens: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "sampled"):
            raise ValueError(f"mode must be 'greedy' or 'sampled', got {self.mode!r}")
        if self.mode == "sampled" and not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.max_tokens < 0:
            raise ValueError(f"max_tokens must be >= 0, got {self.max_tokens}")


@dataclass
class DecodeResult:
    tokens: list[int]
    trace: list[Action]
    reps_read: int

    def to_record(self) -> dict:
        return {
            "schema": "decode/v1",
            "tokens": list(self.tokens),
            "reps_read": self.reps_read,
            "trace": [{"kind": a.kind, "count": a.count} for a in self.trace],
        }


def decode_stream(
    stream: Iterable, policy: SchedulePolicy, model: Predictor, config: DecodeConfig
) -> DecodeResult:
    """Consume fused representations incrementally and emit speech tokens.

    Reads up to ``read_block`` vectors, writes up to ``write_block`` tokens,
    and repeats; once the stream is exhausted the remaining tokens stream out
    in write-sized blocks until end-of-speech or ``max_tokens``.  The action
    trace of the realized lengths satisfies the schedule invariants.  Greedy
    mode is deterministic; sampled mode is reproducible under ``config.seed``.
    """
    it = iter(stream)
    rng = np.random.default_rng(config.seed)
    consumed: list[np.ndarray] = []
    tokens: list[int] = []
    trace: list[Action] = []
    exhausted = False

    def read_block() -> int:
        nonlocal exhausted
        got = 0
        while got < policy.read_block:
            try:
                vec = next(it)
            except StopIteration:
                exhausted = True
                break
            consumed.append(np.asarray(vec, dtype=float))
            got += 1
        return got

    got = read_block()
    if got:
        trace.append(Action(READ, got))
    if not consumed:
        raise ValueError("stream delivered no fused representations")

    done = False
    while not done:
        wrote = 0
        while wrote < policy.write_block and len(tokens) < config.max_tokens:
            logits = model.logits(np.vstack(consumed), tokens)
            token = _choose_token(logits, config, rng)
            kind = model.vocab.kind(token)
            if kind == KIND_TEXT:
                raise ValueError(f"model emitted text-kind token {token} during speech decoding")
            tokens.append(token)
            wrote += 1
            if kind == KIND_EOS:
                done = True
                break
        if wrote:
            trace.append(Action(WRITE, wrote))
        if len(tokens) >= config.max_tokens:
            done = True
        if not done and not exhausted:
            got = read_block()
            if got:
                trace.append(Action(READ, got))
    return DecodeResult(tokens=tokens, trace=trace, reps_read=len(consumed))


def _choose_token(logits: np.ndarray, config: DecodeConfig, rng: np.random.Generator) -> int:
    if config.mode == "greedy":
        return int(np.argmax(logits))
    probs = np.exp(log_softmax(np.asarray(logits, dtype=float) / config.temperature))
    return int(rng.choice(probs.shape[0], p=probs))


# ---------------------------------------------------------------------------
# toy training


def train_toy(
    dataset: Sequence[tuple],
    policy: SchedulePolicy,
    epochs: int,
    lr: float,
    params: PredictorParams | None = None,
    *,
    vocab: ExtendedVocab | None = None,
    emb_dim: int = 8,
    hidden_dim: int = 16,
    seed: int = 0,
) -> tuple[PredictorParams, list[float]]:
    """Full-batch gradient descent on the masked interleaved loss.

    Returns the trained parameters and the per-epoch loss curve (mean loss
    per sample, evaluated at the start of each epoch, so ``lr == 0`` yields a
    constant curve).  Aborts with a diagnostic if the loss leaves the finite
    range.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if params is None:
        if vocab is None:
            raise ValueError("either params or vocab must be supplied")
        fused_dim = np.asarray(dataset[0][0]).shape[1]
        params = init_predictor(
            vocab, fused_dim, emb_dim, hidden_dim, np.random.default_rng(seed)
        )
    curve: list[float] = []
    for epoch in range(epochs):
        batch = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        total = 0.0
        for C, Y in dataset:
            loss, grads, _ = interleaved_loss_and_grads(C, Y, policy, params)
            total += loss
            for key in batch:
                batch[key] += grads[key]
        mean_loss = total / len(dataset)
        if not np.isfinite(mean_loss):
            raise ValueError(f"non-finite training loss {mean_loss} at epoch {epoch}")
        curve.append(mean_loss)
        arrays = params.arrays()
        params = params.replace(
            {k: arrays[k] - lr * batch[k] / len(dataset) for k in arrays}
        )
    return params, curve


def next_token_accuracy(
    dataset: Sequence[tuple], policy: SchedulePolicy, model: Predictor
) -> float:
    """Fraction of positions where the model's argmax equals the target."""
    hits = 0
    total = 0
    for C, Y in dataset:
        C = np.asarray(C, dtype=float)
        for i, target in enumerate(Y, start=1):
            v = visible_prefix(i, C.shape[0], policy)
            hits += int(np.argmax(model.logits(C[:v], Y[: i - 1])) == target)
            total += 1
    if total == 0:
        raise ValueError("dataset has no positions to score")
    return hits / total


def copy_task_dataset(
    vocab: ExtendedVocab,
    n_samples: int,
    seq_len: int,
    alphabet_size: int,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, list[int]]]:
    """Synthetic copy task: each sample repeats one alphabet symbol.

    The fused representation at every position is the one-hot tag of the
    sample's symbol, and every target is that symbol's speech token, so with
    a 1:1 read/write policy each fused vector deterministically tags its
    target token.
    """
    if alphabet_size > vocab.speech_size:
        raise ValueError("alphabet cannot exceed the speech vocabulary")
    pairs = []
    for _ in range(n_samples):
        symbol = int(rng.integers(alphabet_size))
        C = np.tile(np.eye(alphabet_size)[symbol], (seq_len, 1))
        Y = [vocab.speech_token(symbol)] * seq_len
        pairs.append((C, Y))
    return pairs


# ---------------------------------------------------------------------------
# gate-fused training (upstream fusion trainable, source hidden states frozen)


def fused_representations(
    ffn: FfnParams, gate: GateParams, token_emb: np.ndarray, hidden_states, text_ids: Sequence[int]
) -> np.ndarray:
    """Project each source hidden state, embed its text token, and gate-fuse."""
    hidden_states = np.asarray(hidden_states, dtype=float)
    if hidden_states.ndim != 2 or hidden_states.shape[0] != len(text_ids):
        raise ValueError("hidden_states must be (n, d_in) aligned with text_ids")
    rows = []
    for h, t in zip(hidden_states, text_ids):
        e_hidden = ffn_apply(ffn, h)
        _, fused = gate_fuse(gate, e_hidden, token_emb[t])
        rows.append(fused)
    return np.vstack(rows)


def fused_loss_and_grads(
    hidden_states,
    text_ids: Sequence[int],
    Y: Sequence[int],
    policy: SchedulePolicy,
    ffn: FfnParams,
    gate: GateParams,
    params: PredictorParams,
) -> tuple[float, FfnParams, GateParams, dict[str, np.ndarray]]:
    """Masked loss with gradients for the fusion stack and the predictor.

    The source hidden states are treated as frozen inputs; the projection
    FFN, the gate, the token embeddings, and the predictor all receive
    gradients.  Text embeddings reuse the predictor's token table, so that
    table accumulates gradient from both the fusion path and the
    previous-token path.
    """
    C = fused_representations(ffn, gate, params.token_emb, hidden_states, text_ids)
    loss, grads, d_C = interleaved_loss_and_grads(C, Y, policy, params)
    d_ffn = FfnParams(
        np.zeros_like(ffn.w1), np.zeros_like(ffn.b1), np.zeros_like(ffn.w2), np.zeros_like(ffn.b2)
    )
    d_gate_w = np.zeros_like(gate.weight)
    d_gate_b = np.zeros_like(gate.bias)
    hidden_states = np.asarray(hidden_states, dtype=float)
    for h, t, d_c in zip(hidden_states, text_ids, d_C):
        e_hidden = ffn_apply(ffn, h)
        dw, db, d_e_hidden, d_e_emb = gate_fuse_grads(gate, e_hidden, params.token_emb[t], d_c)
        d_gate_w += dw
        d_gate_b += db
        step, _ = ffn_grads(ffn, h, d_e_hidden)
        d_ffn.w1 += step.w1
        d_ffn.b1 += step.b1
        d_ffn.w2 += step.w2
        d_ffn.b2 += step.b2
        grads["token_emb"][t] += d_e_emb
    return loss, d_ffn, GateParams(d_gate_w, d_gate_b), grads


def train_fused(
    dataset: Sequence[tuple],
    policy: SchedulePolicy,
    ffn: FfnParams,
    gate: GateParams,
    params: PredictorParams,
    epochs: int,
    lr: float,
) -> tuple[FfnParams, GateParams, PredictorParams, list[float]]:
    """Train fusion stack and predictor jointly on (hidden_states, text_ids,
    speech_tokens) triples; source hidden states stay frozen."""
    if not dataset:
        raise ValueError("dataset is empty")
    curve: list[float] = []
    for epoch in range(epochs):
        acc_ffn = [np.zeros_like(ffn.w1), np.zeros_like(ffn.b1), np.zeros_like(ffn.w2), np.zeros_like(ffn.b2)]
        acc_gate_w = np.zeros_like(gate.weight)
        acc_gate_b = np.zeros_like(gate.bias)
        acc_pred = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        total = 0.0
        for hidden_states, text_ids, Y in dataset:
            loss, d_ffn, d_gate, d_pred = fused_loss_and_grads(
                hidden_states, text_ids, Y, policy, ffn, gate, params
            )
            total += loss
            acc_ffn[0] += d_ffn.w1
            acc_ffn[1] += d_ffn.b1
            acc_ffn[2] += d_ffn.w2
            acc_ffn[3] += d_ffn.b2
            acc_gate_w += d_gate.weight
            acc_gate_b += d_gate.bias
            for key in acc_pred:
                acc_pred[key] += d_pred[key]
        mean_loss = total / len(dataset)
        if not np.isfinite(mean_loss):
            raise ValueError(f"non-finite training loss {mean_loss} at epoch {epoch}")
        curve.append(mean_loss)
        scale = lr / len(dataset)
        ffn = FfnParams(
            ffn.w1 - scale * acc_ffn[0],
            ffn.b1 - scale * acc_ffn[1],
            ffn.w2 - scale * acc_ffn[2],
            ffn.b2 - scale * acc_ffn[3],
        )
        gate = GateParams(gate.weight - scale * acc_gate_w, gate.bias - scale * acc_gate_b)
        arrays = params.arrays()
        params = params.replace({k: arrays[k] - scale * acc_pred[k] for k in arrays})
    return ffn, gate, params, curve


# ---------------------------------------------------------------------------
# persistence


def save_predictor(path, params: PredictorParams) -> None:
    save_tensors(
        path,
        params.arrays(),
        meta={"text_size": params.vocab.text_size, "speech_size": params.vocab.speech_size},
    )


def load_predictor(path) -> PredictorParams:
    tensors, meta = load_tensors(path)
    vocab = ExtendedVocab(text_size=int(meta["text_size"]), speech_size=int(meta["speech_size"]))
    return PredictorParams(vocab=vocab, **tensors)


def save_pairs(path, pairs: Sequence[tuple]) -> None:
    """Persist (fused representations, speech tokens) pairs as JSONL."""
    rows = [
        {
            "schema": "fused-pairs/v1",
            "fused": np.asarray(C, dtype=float).tolist(),
            "tokens": [int(t) for t in Y],
        }
        for C, Y in pairs
    ]
    records.write_jsonl(path, rows)


def load_pairs(path) -> list[tuple[np.ndarray, list[int]]]:
    rows = records.read_jsonl(path, schema="fused-pairs/v1")
    return [(np.asarray(r["fused"], dtype=float), list(r["tokens"])) for r in rows]
