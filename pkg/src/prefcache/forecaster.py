"""From-scratch gated recurrent forecaster for per-user request rows.

One model per user; the input at each step is the user's entire content-count
row, standardized per feature with training-split statistics.  Training is
full-sequence backpropagation through time on the one-step-ahead MSE with
Adam updates, gradient-norm clipping and early stopping on a validation
region.  Rollout is autoregressive: each predicted row is inverse-scaled,
rounded, clamped at zero, recorded and fed back as the next input.

All users share the same architecture, so the trainer runs every user's model
in one batched pass (leading axis = model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .core import RequestMatrix, SeededRng, write_count_csv, read_count_csv
from .synthgen import zipf_pmf

__all__ = [
    "GateParams",
    "LstmModel",
    "TrainConfig",
    "ForecastMatrix",
    "lstm_forward",
    "train",
    "train_user_models",
    "rollout",
    "forecast_all",
    "baseline_forecast",
    "fit_zipf_exponent",
    "gradient_check",
    "one_step_loss_and_grads",
    "one_step_mse",
    "split_sizes",
    "save_model",
    "load_model",
    "save_forecast",
    "load_forecast",
]

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8

# Gate blocks are stacked row-wise in this fixed order.
_GATE_ORDER = ("forget", "input", "cell", "output")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class GateParams:
    """Input weights (H,F), recurrent weights (H,H) and bias (H,) of one gate."""

    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class LstmModel:
    """Trained recurrent model plus its input scaling statistics.

    The four gate parameter blocks are stacked row-wise in the order forget,
    input, cell-candidate, output: `w_x` is (4H, F), `w_h` is (4H, H) and `b`
    is (4H,).  `readout_w`/`readout_b` map the hidden state back to a
    content-count row; `in_mean`/`in_scale` standardize raw rows.
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray
    readout_w: np.ndarray
    readout_b: np.ndarray
    in_mean: np.ndarray
    in_scale: np.ndarray

    def __post_init__(self):
        for name in ("w_x", "w_h", "b", "readout_w", "readout_b", "in_mean", "in_scale"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        hidden = self.w_h.shape[1]
        feat = self.w_x.shape[1]
        if self.w_x.shape != (4 * hidden, feat) or self.w_h.shape != (4 * hidden, hidden):
            raise ValueError("inconsistent gate parameter shapes")
        if self.b.shape != (4 * hidden,):
            raise ValueError("bad bias shape")
        if self.readout_w.shape != (feat, hidden) or self.readout_b.shape != (feat,):
            raise ValueError("bad readout shape")
        if self.in_mean.shape != (feat,) or self.in_scale.shape != (feat,):
            raise ValueError("bad scaling statistics shape")
        if np.any(self.in_scale <= 0):
            raise ValueError("input scale must be strictly positive")

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[1]

    def _gate(self, idx: int) -> GateParams:
        h = self.hidden_dim
        sl = slice(idx * h, (idx + 1) * h)
        return GateParams(self.w_x[sl], self.w_h[sl], self.b[sl])

    @property
    def forget_gate(self) -> GateParams:
        return self._gate(0)

    @property
    def input_gate(self) -> GateParams:
        return self._gate(1)

    @property
    def cell_gate(self) -> GateParams:
        return self._gate(2)

    @property
    def output_gate(self) -> GateParams:
        return self._gate(3)

    def standardize(self, rows) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.in_mean) / self.in_scale

    def unstandardize(self, rows) -> np.ndarray:
        return np.asarray(rows, dtype=np.float64) * self.in_scale + self.in_mean


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-2
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0
    patience: int = 20
    hidden_dim: int = 64
    clip_norm: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if self.epochs < 1 or self.patience < 1 or self.hidden_dim < 1:
            raise ValueError("epochs, patience and hidden_dim must be >= 1")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        if len(self.split) != 3 or any(f <= 0 for f in self.split):
            raise ValueError("split needs three positive fractions")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.split}")


@dataclass(frozen=True)
class ForecastMatrix:
    """Predicted counts, shape (horizon, users, contents), non-negative ints.

    `start_slot` is the 0-based index of the first forecast slot (= the
    number of history slots the forecaster consumed).
    """

    counts: np.ndarray
    start_slot: int

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 3:
            raise ValueError("forecast counts must be 3-d")
        if arr.dtype.kind == "f":
            if not np.all(arr == np.rint(arr)):
                raise ValueError("forecast counts must be integer-valued")
        arr = arr.astype(np.int64)
        if arr.size and arr.min() < 0:
            raise ValueError("forecast counts must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def horizon(self) -> int:
        return self.counts.shape[0]

    @property
    def num_users(self) -> int:
        return self.counts.shape[1]

    @property
    def num_contents(self) -> int:
        return self.counts.shape[2]


# --- batched parameter block -------------------------------------------------


class _Params(NamedTuple):
    """Parameters of M models stacked along a leading axis."""

    w_x: np.ndarray  # (M, 4H, F)
    w_h: np.ndarray  # (M, 4H, H)
    b: np.ndarray  # (M, 4H)
    w_r: np.ndarray  # (M, F, H)
    b_r: np.ndarray  # (M, F)

    def copy(self) -> "_Params":
        return _Params(*(a.copy() for a in self))

    def zeros_like(self) -> "_Params":
        return _Params(*(np.zeros_like(a) for a in self))


def _params_from_model(model: LstmModel) -> _Params:
    return _Params(
        model.w_x[None].copy(),
        model.w_h[None].copy(),
        model.b[None].copy(),
        model.readout_w[None].copy(),
        model.readout_b[None].copy(),
    )


def _init_params(hidden: int, feat: int, rngs: Sequence[SeededRng]) -> _Params:
    num = len(rngs)
    w_x = np.empty((num, 4 * hidden, feat))
    w_h = np.empty((num, 4 * hidden, hidden))
    w_r = np.empty((num, feat, hidden))
    bound = 1.0 / math.sqrt(hidden)
    for m, rng in enumerate(rngs):
        gen = rng.generator()
        w_x[m] = gen.uniform(-bound, bound, (4 * hidden, feat))
        w_h[m] = gen.uniform(-bound, bound, (4 * hidden, hidden))
        w_r[m] = gen.uniform(-bound, bound, (feat, hidden))
    b = np.zeros((num, 4 * hidden))
    b[:, :hidden] = 1.0  # forget-gate bias starts open
    b_r = np.zeros((num, feat))
    return _Params(w_x, w_h, b, w_r, b_r)


class _ForwardCache(NamedTuple):
    f: np.ndarray  # (T, M, H)
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray  # cell state after each step
    tanh_c: np.ndarray
    h_prev: np.ndarray  # hidden state entering each step
    c_prev: np.ndarray


def _forward_batch(params: _Params, xs: np.ndarray) -> tuple[np.ndarray, _ForwardCache]:
    """Run the recurrence over xs (M, T, F); returns outputs (M, T, F) + cache."""
    num, steps, feat = xs.shape
    hidden = params.w_h.shape[2]
    # input contributions for all steps in one batched matmul
    xz = np.matmul(params.w_x, xs.transpose(0, 2, 1))  # (M, 4H, T)
    f_s = np.empty((steps, num, hidden))
    i_s = np.empty_like(f_s)
    g_s = np.empty_like(f_s)
    o_s = np.empty_like(f_s)
    c_s = np.empty_like(f_s)
    tc_s = np.empty_like(f_s)
    hp_s = np.empty_like(f_s)
    cp_s = np.empty_like(f_s)
    h = np.zeros((num, hidden))
    c = np.zeros((num, hidden))
    hs = np.empty((steps, num, hidden))
    for t in range(steps):
        hp_s[t] = h
        cp_s[t] = c
        z = xz[:, :, t] + np.matmul(params.w_h, h[:, :, None])[:, :, 0] + params.b
        f = _sigmoid(z[:, :hidden])
        i = _sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(z[:, 3 * hidden :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        f_s[t], i_s[t], g_s[t], o_s[t] = f, i, g, o
        c_s[t], tc_s[t], hs[t] = c, tc, h
    ys = np.matmul(params.w_r, hs.transpose(1, 2, 0)) + params.b_r[:, :, None]  # (M, F, T)
    ys = ys.transpose(0, 2, 1)
    return ys, _ForwardCache(f_s, i_s, g_s, o_s, c_s, tc_s, hp_s, cp_s)


def _region_loss(ys: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-model MSE averaged over the masked steps and all features."""
    sq = np.mean((ys - targets) ** 2, axis=2)  # (M, T)
    return sq[:, mask].mean(axis=1)


def _backward_batch(
    params: _Params,
    xs: np.ndarray,
    targets: np.ndarray,
    ys: np.ndarray,
    cache: _ForwardCache,
    mask: np.ndarray,
) -> _Params:
    """BPTT gradients of the masked-region MSE; mirrors `_region_loss`."""
    num, steps, feat = xs.shape
    hidden = params.w_h.shape[2]
    n_sel = int(mask.sum())
    dy = np.zeros_like(ys)
    dy[:, mask, :] = 2.0 * (ys[:, mask, :] - targets[:, mask, :]) / (feat * n_sel)
    # pull the readout gradient out of the time loop
    hs = cache.o * cache.tanh_c  # (T, M, H)
    d_w_r = np.matmul(dy.transpose(0, 2, 1), hs.transpose(1, 0, 2))  # (M, F, H)
    d_b_r = dy.sum(axis=1)
    w_r_t = params.w_r.transpose(0, 2, 1)  # (M, H, F)
    w_h_t = params.w_h.transpose(0, 2, 1)  # (M, H, 4H)
    dz_s = np.empty((steps, num, 4 * hidden))
    dh_next = np.zeros((num, hidden))
    dc_next = np.zeros((num, hidden))
    for t in range(steps - 1, -1, -1):
        dh = np.matmul(w_r_t, dy[:, t, :, None])[:, :, 0] + dh_next
        f, i, g, o = cache.f[t], cache.i[t], cache.g[t], cache.o[t]
        tc = cache.tanh_c[t]
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        df = dc * cache.c_prev[t]
        di = dc * g
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate(
            [df * f * (1.0 - f), di * i * (1.0 - i), dg * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        dz_s[t] = dz
        dh_next = np.matmul(w_h_t, dz[:, :, None])[:, :, 0]
    dz_m = dz_s.transpose(1, 2, 0)  # (M, 4H, T)
    d_w_x = np.matmul(dz_m, xs)  # (M, 4H, F)
    d_w_h = np.matmul(dz_m, cache.h_prev.transpose(1, 0, 2))  # (M, 4H, H)
    d_b = dz_s.sum(axis=0)
    return _Params(d_w_x, d_w_h, d_b, d_w_r, d_b_r)


def _clip_grads(grads: _Params, clip_norm: float) -> _Params:
    sq = sum((g**2).reshape(g.shape[0], -1).sum(axis=1) for g in grads)
    norm = np.sqrt(sq)
    scale = np.where(norm > clip_norm, clip_norm / np.maximum(norm, 1e-30), 1.0)
    return _Params(*(g * scale.reshape((-1,) + (1,) * (g.ndim - 1)) for g in grads))


def split_sizes(num_pairs: int, split: tuple[float, float, float]) -> tuple[int, int, int]:
    """Sizes of the train/validation/test regions over one-step pairs."""
    if num_pairs < 3:
        raise ValueError("need at least 3 one-step pairs to split")
    n_val = max(1, round(num_pairs * split[1]))
    n_test = max(1, round(num_pairs * split[2]))
    n_train = num_pairs - n_val - n_test
    if n_train < 1:
        raise ValueError("split leaves no training pairs")
    return n_train, n_val, n_test


def train_user_models(
    series,
    cfg: TrainConfig,
    stream_labels: Sequence[str] | None = None,
) -> list[LstmModel]:
    """Train one model per row of `series` (shape (M, T, F)) in a batched pass.

    Minimizes one-step-ahead MSE on standardized counts by full-sequence BPTT
    with Adam updates; returns each model at its best validation loss.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 3:
        raise ValueError("series must be 3-d (models, slots, contents)")
    num, total_slots, feat = series.shape
    if total_slots < 4:
        raise ValueError("need at least 4 slots to form a train/val/test split")
    n_train, n_val, n_test = split_sizes(total_slots - 1, cfg.split)
    mean = series[:, :n_train, :].mean(axis=1)
    scale = series[:, :n_train, :].std(axis=1)
    scale = np.where(scale < 1e-12, 1.0, scale)
    xs_all = (series - mean[:, None, :]) / scale[:, None, :]
    inputs = xs_all[:, :-1, :]
    targets = xs_all[:, 1:, :]
    steps = total_slots - 1
    train_mask = np.zeros(steps, dtype=bool)
    train_mask[:n_train] = True
    val_mask = np.zeros(steps, dtype=bool)
    val_mask[n_train : n_train + n_val] = True

    if stream_labels is None:
        stream_labels = [f"lstm/user-{m}" for m in range(num)]
    rngs = [SeededRng(cfg.seed).child(label) for label in stream_labels]
    params = _init_params(cfg.hidden_dim, feat, rngs)
    adam_m = params.zeros_like()
    adam_v = params.zeros_like()
    step_count = 0

    best = params.copy()
    best_val = np.full(num, np.inf)
    since_improved = np.zeros(num, dtype=int)
    active = np.ones(num, dtype=bool)

    for _epoch in range(cfg.epochs):
        ys, cache = _forward_batch(params, inputs)
        val_loss = _region_loss(ys, targets, val_mask)
        improved = val_loss < best_val
        if improved.any():
            best_val = np.where(improved, val_loss, best_val)
            for b_arr, p_arr in zip(best, params):
                b_arr[improved] = p_arr[improved]
        since_improved = np.where(improved, 0, since_improved + 1)
        active &= since_improved < cfg.patience
        if not active.any():
            break
        grads = _backward_batch(params, inputs, targets, ys, cache, train_mask)
        grads = _clip_grads(grads, cfg.clip_norm)
        step_count += 1
        corr1 = 1.0 - _ADAM_BETA1**step_count
        corr2 = 1.0 - _ADAM_BETA2**step_count
        for p_arr, g_arr, m_arr, v_arr in zip(params, grads, adam_m, adam_v):
            m_arr *= _ADAM_BETA1
            m_arr += (1.0 - _ADAM_BETA1) * g_arr
            v_arr *= _ADAM_BETA2
            v_arr += (1.0 - _ADAM_BETA2) * g_arr**2
            p_arr -= cfg.learning_rate * (m_arr / corr1) / (np.sqrt(v_arr / corr2) + _ADAM_EPS)

    return [
        LstmModel(
            w_x=best.w_x[m],
            w_h=best.w_h[m],
            b=best.b[m],
            readout_w=best.w_r[m],
            readout_b=best.b_r[m],
            in_mean=mean[m],
            in_scale=scale[m],
        )
        for m in range(num)
    ]


def train(series, cfg: TrainConfig, stream: str = "lstm") -> LstmModel:
    """Train a single model on one user's (T, F) history."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise ValueError("series must be 2-d (slots x contents)")
    return train_user_models(series[None], cfg, stream_labels=[stream])[0]


def lstm_forward(model: LstmModel, sequence) -> tuple[np.ndarray, np.ndarray]:
    """Run the gated recurrence over already-scaled input vectors.

    Returns (hidden states (T, H), readout outputs (T, F)); the initial hidden
    and cell states are zero.
    """
    xs = np.asarray(sequence, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("sequence must be a non-empty (T, F) array")
    if xs.shape[1] != model.input_dim:
        raise ValueError(f"input dim {xs.shape[1]} != model dim {model.input_dim}")
    params = _params_from_model(model)
    ys, cache = _forward_batch(params, xs[None])
    hs = (cache.o * cache.tanh_c)[:, 0, :]
    return hs, ys[0]


def _step(model: LstmModel, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    hidden = model.hidden_dim
    z = model.w_x @ x + model.w_h @ h + model.b
    f = _sigmoid(z[:hidden])
    i = _sigmoid(z[hidden : 2 * hidden])
    g = np.tanh(z[2 * hidden : 3 * hidden])
    o = _sigmoid(z[3 * hidden :])
    c = f * c + i * g
    h = o * np.tanh(c)
    return h, c


def rollout(model: LstmModel, history, horizon: int, start_slot: int | None = None) -> ForecastMatrix:
    """Autoregressive multi-step forecast for one user.

    Warms the state over the full history, then repeatedly predicts the next
    row, rounds it to a non-negative integer row, records it, and feeds the
    rounded row back in.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2 or history.shape[0] == 0:
        raise ValueError("history must be a non-empty (T, F) array")
    xs = model.standardize(history)
    h = np.zeros(model.hidden_dim)
    c = np.zeros(model.hidden_dim)
    for x in xs:
        h, c = _step(model, x, h, c)
    rows = []
    for _ in range(horizon):
        pred = model.readout_w @ h + model.readout_b
        row = np.maximum(np.rint(model.unstandardize(pred)), 0.0).astype(np.int64)
        rows.append(row)
        h, c = _step(model, model.standardize(row), h, c)
    start = history.shape[0] if start_slot is None else start_slot
    return ForecastMatrix(np.stack(rows)[:, None, :], start_slot=start)


def forecast_all(models: Sequence[LstmModel], history: RequestMatrix, horizon: int) -> ForecastMatrix:
    """Stack per-user rollouts into one (horizon, U, F) forecast."""
    if len(models) != history.num_users:
        raise ValueError("one model per user required")
    per_user = [
        rollout(model, history.counts[:, u, :], horizon).counts[:, 0, :]
        for u, model in enumerate(models)
    ]
    return ForecastMatrix(np.stack(per_user, axis=1), start_slot=history.slots)


def fit_zipf_exponent(content_totals) -> float:
    """Least-squares Zipf exponent of a content-count vector (0 if flat)."""
    totals = np.sort(np.asarray(content_totals, dtype=np.float64))[::-1]
    totals = totals[totals > 0]
    if totals.size < 2 or np.all(totals == totals[0]):
        return 0.0
    ranks = np.arange(1, totals.size + 1, dtype=np.float64)
    slope = np.polyfit(np.log(ranks), np.log(totals), 1)[0]
    return max(0.0, -float(slope))


def baseline_forecast(kind: str, history, horizon: int, start_slot: int | None = None) -> ForecastMatrix:
    """Trivial reference forecasters: last-value, slot-mean, static-zipf.

    `history` may be a RequestMatrix, a (T, U, F) tensor or a single-user
    (T, F) matrix.  static-zipf fits a Zipf exponent to the aggregate content
    counts and spreads each user's mean total across contents accordingly.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if isinstance(history, RequestMatrix):
        arr = history.counts
    else:
        arr = np.asarray(history, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, None, :]
    if arr.ndim != 3 or arr.shape[0] == 0:
        raise ValueError("history must be a non-empty count tensor")
    total_slots, num_users, num_contents = arr.shape
    if kind == "last-value":
        slot = np.asarray(arr[-1], dtype=np.int64)
    elif kind == "slot-mean":
        slot = np.maximum(np.rint(arr.mean(axis=0)), 0.0).astype(np.int64)
    elif kind == "static-zipf":
        totals = np.asarray(arr, dtype=np.float64).sum(axis=(0, 1))
        gamma = fit_zipf_exponent(totals)
        order = np.lexsort((np.arange(num_contents), -totals))
        pmf = np.empty(num_contents)
        pmf[order] = zipf_pmf(num_contents, gamma)
        mean_totals = np.asarray(arr, dtype=np.float64).sum(axis=(0, 2)) / total_slots
        slot = np.maximum(np.rint(mean_totals[:, None] * pmf[None, :]), 0.0).astype(np.int64)
    else:
        raise ValueError(f"unknown baseline kind {kind!r}")
    counts = np.broadcast_to(slot, (horizon,) + slot.shape).copy()
    start = total_slots if start_slot is None else start_slot
    return ForecastMatrix(counts, start_slot=start)


# --- gradient verification ----------------------------------------------------


def one_step_loss_and_grads(model: LstmModel, inputs, targets) -> tuple[float, _Params]:
    """Loss (mean over steps and features of squared error) plus BPTT grads."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape != targets.shape or inputs.ndim != 2:
        raise ValueError("inputs and targets must be matching (T, F) arrays")
    params = _params_from_model(model)
    mask = np.ones(inputs.shape[0], dtype=bool)
    ys, cache = _forward_batch(params, inputs[None])
    loss = float(_region_loss(ys, targets[None], mask)[0])
    grads = _backward_batch(params, inputs[None], targets[None], ys, cache, mask)
    return loss, grads


def gradient_check(model: LstmModel, sequence, epsilon: float = 1e-5, targets=None, floor: float = 1e-6) -> float:
    """Max relative error between BPTT and central finite-difference gradients.

    By default the checked loss is the one-step-ahead MSE over `sequence`
    (inputs = sequence[:-1], targets = sequence[1:]); explicit targets pin the
    loss to arbitrary (input, target) pairs instead.  Gradients below `floor`
    are compared on an absolute scale (central differences of an O(1) loss
    carry ~1e-11 round-off, which would swamp the ratio for vanishing
    gradients).
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if targets is None:
        if seq.shape[0] < 2:
            raise ValueError("need at least 2 slots for one-step pairs")
        inputs, targets = seq[:-1], seq[1:]
    else:
        inputs = seq
        targets = np.asarray(targets, dtype=np.float64)
    _, grads = one_step_loss_and_grads(model, inputs, targets)
    params = _params_from_model(model)
    mask = np.ones(inputs.shape[0], dtype=bool)

    def loss_at(p: _Params) -> float:
        ys, _ = _forward_batch(p, inputs[None])
        return float(_region_loss(ys, targets[None], mask)[0])

    worst = 0.0
    for arr_idx, arr in enumerate(params):
        flat = arr.reshape(-1)
        g_flat = grads[arr_idx].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss_at(params)
            flat[j] = orig - epsilon
            down = loss_at(params)
            flat[j] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(g_flat[j]), abs(numeric), floor)
            worst = max(worst, abs(g_flat[j] - numeric) / denom)
    return worst


def one_step_mse(model: LstmModel, series, pair_slice: slice) -> float:
    """One-step-ahead MSE in raw count units over a range of pairs."""
    series = np.asarray(series, dtype=np.float64)
    xs = model.standardize(series)
    _, ys = lstm_forward(model, xs[:-1])
    preds = model.unstandardize(ys)
    err = preds[pair_slice] - series[1:][pair_slice]
    return float(np.mean(err**2))


# --- persistence ---------------------------------------------------------------


def save_model(model: LstmModel, path) -> None:
    """Binary parameter dump sufficient for bit-exact reload."""
    with open(path, "wb") as fh:
        np.savez(
            fh,
            w_x=model.w_x,
            w_h=model.w_h,
            b=model.b,
            readout_w=model.readout_w,
            readout_b=model.readout_b,
            in_mean=model.in_mean,
            in_scale=model.in_scale,
        )


def load_model(path) -> LstmModel:
    with np.load(path) as data:
        return LstmModel(
            w_x=data["w_x"],
            w_h=data["w_h"],
            b=data["b"],
            readout_w=data["readout_w"],
            readout_b=data["readout_b"],
            in_mean=data["in_mean"],
            in_scale=data["in_scale"],
        )


def save_forecast(fc: ForecastMatrix, path, seed: int = 0, extra_comments=()) -> None:
    meta = {
        "T": fc.horizon,
        "U": fc.num_users,
        "F": fc.num_contents,
        "seed": seed,
        "start": fc.start_slot,
    }
    write_count_csv(fc.counts, path, meta, extra_comments)


def load_forecast(path) -> ForecastMatrix:
    counts, meta = read_count_csv(path)
    return ForecastMatrix(counts, start_slot=int(meta.get("start", "0")))
