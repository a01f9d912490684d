"""Stacked bidirectional LSTM encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import ParameterStore, Tensor


@dataclass(frozen=True)
class BiLSTMConfig:
    layers: int
    hidden: int
    input_dim: int
    inter_layer_dropout: float = 0.1

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1 or self.input_dim < 1:
            raise ValueError(f"invalid BiLSTM config {self}")
        if not 0.0 <= self.inter_layer_dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden


@dataclass
class LSTMParams:
    """Gate order in the stacked matrices is input, forget, cell, output."""

    W: Tensor  # 4H x in
    U: Tensor  # 4H x H
    b: Tensor  # 4H

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


def init_lstm(store: ParameterStore, prefix: str, input_dim: int, hidden: int,
              rng: np.random.Generator) -> LSTMParams:
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return LSTMParams(
        store.add(f"{prefix}.W", tn.glorot(rng, (4 * hidden, input_dim))),
        store.add(f"{prefix}.U", tn.glorot(rng, (4 * hidden, hidden))),
        store.add(f"{prefix}.b", b),
    )


def lstm_step(params: LSTMParams, x_t, h_prev, c_prev) -> tuple[Tensor, Tensor]:
    """One LSTM cell update built from primitive ops (reference path)."""
    H = params.hidden
    z = tn.add(tn.affine(x_t, params.W, params.b), tn.matmul(params.U, h_prev))
    i = tn.sigmoid(tn.take(z, slice(0, H)))
    f = tn.sigmoid(tn.take(z, slice(H, 2 * H)))
    g = tn.tanh(tn.take(z, slice(2 * H, 3 * H)))
    o = tn.sigmoid(tn.take(z, slice(3 * H, 4 * H)))
    c = tn.add(tn.mul(f, c_prev), tn.mul(i, g))
    h = tn.mul(o, tn.tanh(c))
    return h, c


def lstm_sequence(params: LSTMParams, X: Tensor, reverse: bool = False) -> Tensor:
    """Run one LSTM direction over ``X`` (T x in, or B x T x in for a batch of
    equal-length sequences) from zero state. Returns the hidden states with the
    same leading shape. Backward is hand-written BPTT."""
    X = tn.as_tensor(X)
    batched = X.ndim == 3
    x = X.data if batched else X.data[None]
    if reverse:
        x = x[:, ::-1]
    B, T, _ = x.shape
    H = params.hidden
    W, U, b = params.W.data, params.U.data, params.b.data
    xz = x @ W.T + b
    hs = np.zeros((B, T + 1, H))
    cs = np.zeros((B, T + 1, H))
    gates = np.empty((B, T, 4 * H))
    for t in range(T):
        z = xz[:, t] + hs[:, t] @ U.T
        gi = tn._sigmoid(z[:, :H])
        gf = tn._sigmoid(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        go = tn._sigmoid(z[:, 3 * H:])
        cs[:, t + 1] = gf * cs[:, t] + gi * gg
        hs[:, t + 1] = go * np.tanh(cs[:, t + 1])
        gates[:, t] = np.concatenate([gi, gf, gg, go], axis=1)

    out = hs[:, 1:]
    if reverse:
        out = out[:, ::-1]
    out_data = out if batched else out[0]

    def backward(g):
        dH = g if batched else g[None]
        if reverse:
            dH = dH[:, ::-1]
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            gi, gf, gg, go = (gates[:, t, k * H:(k + 1) * H] for k in range(4))
            tc = np.tanh(cs[:, t + 1])
            dh = dH[:, t] + dh_next
            dc = dh * go * (1.0 - tc * tc) + dc_next
            dz = np.concatenate([
                dc * gg * gi * (1.0 - gi),
                dc * cs[:, t] * gf * (1.0 - gf),
                dc * gi * (1.0 - gg * gg),
                dh * tc * go * (1.0 - go),
            ], axis=1)
            dz_all[:, t] = dz
            dh_next = dz @ U
            dc_next = dc * gf
        flat_dz = dz_all.reshape(-1, 4 * H)
        if params.W.requires_grad:
            params.W._accumulate(flat_dz.T @ x.reshape(B * T, -1))
        if params.U.requires_grad:
            params.U._accumulate(flat_dz.T @ hs[:, :-1].reshape(B * T, H))
        if params.b.requires_grad:
            params.b._accumulate(flat_dz.sum(axis=0))
        if X.requires_grad:
            dx = dz_all @ W
            if reverse:
                dx = dx[:, ::-1]
            X._accumulate(dx if batched else dx[0])

    return tn._result(np.ascontiguousarray(out_data), (X, params.W, params.U, params.b), backward)


@dataclass
class BiLSTM:
    config: BiLSTMConfig
    layers: list[tuple[LSTMParams, LSTMParams]]  # (forward, backward) per layer

    @classmethod
    def create(cls, config: BiLSTMConfig, store: ParameterStore, rng: np.random.Generator,
               prefix: str = "encoder") -> "BiLSTM":
        layers = []
        in_dim = config.input_dim
        for k in range(config.layers):
            fwd = init_lstm(store, f"{prefix}.l{k}.fwd", in_dim, config.hidden, rng)
            bwd = init_lstm(store, f"{prefix}.l{k}.bwd", in_dim, config.hidden, rng)
            layers.append((fwd, bwd))
            in_dim = 2 * config.hidden
        return cls(config, layers)

    def __call__(self, embedded: Tensor, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        return encode(self.config, self.layers, embedded, training, rng)


def encode(config: BiLSTMConfig, layers: list[tuple[LSTMParams, LSTMParams]],
           embedded: Tensor, training: bool = False,
           rng: np.random.Generator | None = None) -> Tensor:
    """T x input_dim embeddings -> T x 2H contextual features."""
    x = tn.as_tensor(embedded)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != config.input_dim:
        raise tn.DimensionError(f"encode expects T x {config.input_dim}, got {x.shape}")
    for k, (fwd, bwd) in enumerate(layers):
        if k > 0:
            x = tn.dropout(x, config.inter_layer_dropout, rng, training)
        x = tn.concat([lstm_sequence(fwd, x), lstm_sequence(bwd, x, reverse=True)], axis=-1)
    return x
