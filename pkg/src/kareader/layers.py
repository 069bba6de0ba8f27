"""Embedding tables, LSTM encoders, attentive pooling, Adam, clipping, smoothed BCE."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

log = logging.getLogger(__name__)


def uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape
    return uniform(rng, shape, np.sqrt(6.0 / (fan_in + fan_out)))


class EmbeddingTable:
    def __init__(self, vocab: Sequence[str], dim: int, rng: np.random.Generator,
                 init_scale: float = 0.05, frozen: bool = False):
        self.vocab = list(vocab)
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        if len(self.index) != len(self.vocab):
            raise ValueError("embedding vocabulary has duplicate entries")
        self.dim = dim
        self.frozen = frozen
        self.weight = Tensor(uniform(rng, (len(self.vocab), dim), init_scale),
                             requires_grad=not frozen)

    def __len__(self) -> int:
        return len(self.vocab)

    def ids(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.index[t] for t in tokens], dtype=np.int64)

    def lookup(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and ids.max() >= len(self.vocab):
            raise IndexError(f"embedding index {ids.max()} >= vocabulary size {len(self.vocab)}")
        return T.take(self.weight, ids)

    def load_vectors(self, vectors: Mapping[str, np.ndarray]) -> int:
        """Overwrite rows for tokens present in ``vectors``; returns the hit count."""
        hits = 0
        for tok, vec in vectors.items():
            i = self.index.get(tok)
            if i is None:
                continue
            if vec.shape != (self.dim,):
                raise ValueError(f"vector for {tok!r} has dim {vec.shape}, table dim {self.dim}")
            self.weight.data[i] = vec
            hits += 1
        return hits


def load_glove(path, dim: int | None = None) -> dict[str, np.ndarray]:
    """Read whitespace-separated ``token v1 ... vN`` lines."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            if dim is None:
                dim = vec.size
            if vec.size != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {vec.size}")
            vectors[parts[0]] = vec
    return vectors


class LstmCell:
    """Gate order in the stacked weights is input, forget, candidate, output."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden = hidden
        self.W_ih = Tensor(glorot(rng, (4 * hidden, input_dim)), requires_grad=True)
        self.W_hh = Tensor(glorot(rng, (4 * hidden, hidden)), requires_grad=True)
        self.b = Tensor(np.zeros(4 * hidden), requires_grad=True)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W_ih": self.W_ih, f"{prefix}.W_hh": self.W_hh, f"{prefix}.b": self.b}

    def run(self, X: Tensor) -> Tensor:
        """Unroll over a (batch, time, input) tensor from zero state -> (batch, time, hidden)."""
        if X.ndim != 3 or X.shape[2] != self.input_dim:
            raise T.ShapeError("lstm", X.shape, (self.input_dim,))
        batch, steps, _ = X.shape
        d = self.hidden
        pre = T.linear(X, self.W_ih, self.b)
        h = c = None
        outs = []
        for t in range(steps):
            z = pre[:, t, :]
            if h is not None:
                z = z + T.linear(h, self.W_hh)
            gates = T.sigmoid(z)
            i, f, o = gates[:, :d], gates[:, d:2 * d], gates[:, 3 * d:]
            g = T.tanh(z[:, 2 * d:3 * d])
            c = i * g if c is None else f * c + i * g
            h = o * T.tanh(c)
            outs.append(h)
        return T.stack(outs, axis=1)


def _check_lengths(lengths: np.ndarray) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.size == 0 or lengths.min() < 1:
        raise ValueError("lstm_encode: empty sequence")
    return lengths


def pad_ids(seqs: Sequence[Sequence[int]], max_len: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences with 0; over-long ones are truncated with a warning."""
    if any(len(s) == 0 for s in seqs):
        raise ValueError("lstm_encode: empty sequence")
    seqs = list(seqs)
    if max_len is not None:
        for k, s in enumerate(seqs):
            if len(s) > max_len:
                log.warning("truncating sequence of length %d to %d", len(s), max_len)
                seqs[k] = list(s)[:max_len]
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    ids = np.zeros((len(seqs), int(lengths.max())), dtype=np.int64)
    for k, s in enumerate(seqs):
        ids[k, : len(s)] = s
    return ids, lengths


def length_mask(lengths: np.ndarray, steps: int) -> np.ndarray:
    return np.arange(steps)[None, :] < np.asarray(lengths)[:, None]


def lstm_encode(tokens: Sequence[int], table: EmbeddingTable, cell: LstmCell,
                max_len: int | None = None) -> Tensor:
    """Hidden states (len x d_h) of one token sequence, zero initial state."""
    ids, _ = pad_ids([tokens], max_len)
    return cell.run(table.lookup(ids))[0]


def reverse_within_length(lengths: np.ndarray, steps: int) -> np.ndarray:
    """Flat row indices that reverse each sequence's valid prefix, padding stays put."""
    idx = np.empty((len(lengths), steps), dtype=np.int64)
    for k, n in enumerate(lengths):
        order = np.arange(steps)
        order[:n] = order[:n][::-1]
        idx[k] = k * steps + order
    return idx.reshape(-1)


class BiLstm:
    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator):
        if hidden % 2:
            raise ValueError(f"biLSTM hidden size must be even, got {hidden}")
        self.fwd = LstmCell(input_dim, hidden // 2, rng)
        self.bwd = LstmCell(input_dim, hidden // 2, rng)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {**self.fwd.params(f"{prefix}.fwd"), **self.bwd.params(f"{prefix}.bwd")}

    def run(self, X: Tensor, lengths: np.ndarray) -> Tensor:
        """Right-padded (batch, time, in) -> (batch, time, hidden); row t = [fwd_t; bwd_t]."""
        lengths = _check_lengths(lengths)
        batch, steps, dim = X.shape
        flip = reverse_within_length(lengths, steps)
        fwd = self.fwd.run(X)
        X_rev = T.take(X.reshape(batch * steps, dim), flip).reshape(batch, steps, dim)
        H_rev = self.bwd.run(X_rev)
        half = self.bwd.hidden
        bwd = T.take(H_rev.reshape(batch * steps, half), flip).reshape(batch, steps, half)
        return T.concat([fwd, bwd], axis=2)


def bilstm_encode(inputs: Tensor, net: BiLstm) -> Tensor:
    """Single (len x in) feature sequence -> (len x d_h)."""
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("bilstm_encode: empty sequence")
    return net.run(inputs.reshape(1, *inputs.shape), np.array([inputs.shape[0]]))[0]


def self_attentive_pool(H: Tensor, w: Tensor, mask=None) -> tuple[Tensor, Tensor]:
    """Softmax(H w)-weighted sum of rows. Works on (l, d) or batched (b, l, d).

    Returns (pooled, weights).
    """
    if H.shape[-2] < 1:
        raise ValueError("self_attentive_pool: no rows")
    weights = T.softmax(T.matmul(H, w), axis=-1, mask=mask)
    if H.ndim == 2:
        return T.matmul(weights, H), weights
    pooled = T.sum_(T.mul(H, weights.reshape(*weights.shape, 1)), axis=1)
    return pooled, weights


# ---------------------------------------------------------------- training


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place. Parameters are visited in sorted-name order.

    Raises before touching any parameter if a gradient is non-finite.
    """
    names = sorted(grads)
    for name in names:
        if not np.isfinite(grads[name]).all():
            raise NonFiniteGradient(name)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in names:
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name].data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}


SCORE_FLOOR = 1e-12


def smoothed_targets(labels, eps: float) -> np.ndarray:
    return np.asarray(labels, dtype=np.float64) * (1.0 - eps) + eps / 2.0


def smoothed_bce(score, labels, eps: float = 0.1) -> Tensor:
    """Mean binary cross-entropy against targets smoothed toward 0.5."""
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"smoothing factor must be in [0, 1), got {eps}")
    s = T.clip(T.as_tensor(score), SCORE_FLOOR, 1.0 - SCORE_FLOOR)
    t = smoothed_targets(labels, eps)
    ll = T.mul(t, T.log(s)) + T.mul(1.0 - t, T.log(T.sub(1.0, s)))
    return T.scale(T.mean(ll), -1.0)
