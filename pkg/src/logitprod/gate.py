"""Sample-adaptive gating network and its trainer.

Architecture: two-layer MLP (64 hidden, ReLU) followed by a softmax over the
M experts. Classification uses one gate; survival uses K independent gates,
one per time bin, trained jointly under the survival NLL. Gradients are
exact analytic backprop through the softmax gate, the weighted-product
fusion, and its normalizer; expert logits are constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationState, apply_temperatures_batch
from .core import (
    ExpertPoolMeta,
    LogitRecord,
    clamp_probs,
    labels_array,
    softmax,
    stacked_logits,
)
from .cues import gating_inputs, survival_gate_inputs
from .survival import logits_to_hazards

HIDDEN_UNITS = 64


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("training hyperparameters must be positive")


@dataclass
class GateParameters:
    w1: np.ndarray  # (64, D)
    b1: np.ndarray  # (64,)
    w2: np.ndarray  # (M, 64)
    b2: np.ndarray  # (M,)

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_experts(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "GateParameters":
        return GateParameters(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy()
        )

    def to_json(self) -> dict:
        return {
            "hidden": HIDDEN_UNITS,
            "d_in": self.d_in,
            "n_experts": self.n_experts,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GateParameters":
        return cls(
            w1=np.asarray(obj["w1"], dtype=np.float64),
            b1=np.asarray(obj["b1"], dtype=np.float64),
            w2=np.asarray(obj["w2"], dtype=np.float64),
            b2=np.asarray(obj["b2"], dtype=np.float64),
        )


@dataclass
class TrainingTrace:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def append(self, epoch: int, train: float, val: float):
        self.epochs.append(epoch)
        self.train_loss.append(train)
        self.val_loss.append(val)

    def save_csv(self, path: str | Path):
        with Path(path).open("w") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for e, tr, va in zip(self.epochs, self.train_loss, self.val_loss):
                fh.write(f"{e},{tr!r},{va!r}\n")


def init_gate(d_in: int, n_experts: int, rng: np.random.Generator) -> GateParameters:
    """Glorot-uniform weights, zero biases."""

    def glorot(fan_out, fan_in):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_out, fan_in))

    return GateParameters(
        w1=glorot(HIDDEN_UNITS, d_in),
        b1=np.zeros(HIDDEN_UNITS),
        w2=glorot(n_experts, HIDDEN_UNITS),
        b2=np.zeros(n_experts),
    )


def gate_forward(x: np.ndarray, params: GateParameters) -> np.ndarray:
    """Simplex weights for one cue vector or a batch of them.

    (D,) -> (M,) or (N, D) -> (N, M).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    if xb.shape[1] != params.d_in:
        raise ValueError(f"gate expects input dim {params.d_in}, got {xb.shape[1]}")
    hidden = np.maximum(xb @ params.w1.T + params.b1, 0.0)
    w = softmax(hidden @ params.w2.T + params.b2)
    return w[0] if single else w


# ---------------------------------------------------------------------------
# Flat-vector parameter packing (one gate or a stack of K gates) so a single
# Adam loop serves both tasks.
# ---------------------------------------------------------------------------


def flatten_gates(gates: list[GateParameters]) -> np.ndarray:
    parts = []
    for g in gates:
        parts.extend([g.w1.ravel(), g.b1, g.w2.ravel(), g.b2])
    return np.concatenate(parts)


def unflatten_gates(vec: np.ndarray, template: list[GateParameters]) -> list[GateParameters]:
    out = []
    pos = 0
    for g in template:
        chunks = []
        for arr in (g.w1, g.b1, g.w2, g.b2):
            n = arr.size
            chunks.append(vec[pos : pos + n].reshape(arr.shape))
            pos += n
        out.append(GateParameters(*chunks))
    return out


def _forward_cache(xb: np.ndarray, params: GateParameters):
    pre = xb @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    w = softmax(hidden @ params.w2.T + params.b2)
    return hidden, w


def _backprop_gate(
    xb: np.ndarray, hidden: np.ndarray, w: np.ndarray, dw: np.ndarray, params: GateParameters
) -> GateParameters:
    """Gradient of a scalar loss through the gate given dloss/dw (post-softmax)."""
    d_out = w * (dw - (dw * w).sum(axis=1, keepdims=True))
    grad_w2 = d_out.T @ hidden
    grad_b2 = d_out.sum(axis=0)
    d_hidden = (d_out @ params.w2) * (hidden > 0)
    grad_w1 = d_hidden.T @ xb
    grad_b1 = d_hidden.sum(axis=0)
    return GateParameters(grad_w1, grad_b1, grad_w2, grad_b2)


def product_loss_and_grads(
    params: GateParameters, x: np.ndarray, log_probs: np.ndarray, y: np.ndarray
) -> tuple[float, GateParameters]:
    """Mean cross-entropy of the weighted-product fusion and its exact gradient.

    x (N, D) cue inputs; log_probs (N, M, K) clamped log expert probabilities
    (constants); y (N,) 0-based labels.
    """
    n = len(y)
    hidden, w = _forward_cache(x, params)
    fused_logits = np.einsum("nm,nmk->nk", w, log_probs)
    shifted = fused_logits - fused_logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + fused_logits.max(axis=1)
    loss = float((lse - fused_logits[np.arange(n), y]).mean())
    q = np.exp(fused_logits - lse[:, None])
    dg = q / n
    dg[np.arange(n), y] -= 1.0 / n
    dw = np.einsum("nk,nmk->nm", dg, log_probs)
    return loss, _backprop_gate(x, hidden, w, dw, params)


def sum_loss_and_grads(
    params: GateParameters, x: np.ndarray, probs: np.ndarray, y: np.ndarray
) -> tuple[float, GateParameters]:
    """Mean cross-entropy of the gated arithmetic mixture (learnable-sum)."""
    n = len(y)
    hidden, w = _forward_cache(x, params)
    mix = np.einsum("nm,nmk->nk", w, probs)
    picked = np.clip(mix[np.arange(n), y], 1e-300, None)
    loss = float(-np.log(picked).mean())
    dw = -probs[np.arange(n), :, y] / picked[:, None] / n
    return loss, _backprop_gate(x, hidden, w, dw, params)


def survival_loss_and_grads(
    gates: list[GateParameters],
    xbins: np.ndarray,
    log_bern: np.ndarray,
    mask: np.ndarray,
    target: np.ndarray,
) -> tuple[float, list[GateParameters]]:
    """Mean survival NLL of per-bin product fusion and its exact gradients.

    xbins (N, K, D) per-bin gate inputs; log_bern (N, K, M, 2) clamped log
    per-bin Bernoullis; mask (N, K) marks bins at risk for each sample;
    target (N, K) in {0=event, 1=survive} where masked.
    """
    n, k_bins = mask.shape
    total = 0.0
    grads = []
    for k in range(k_bins):
        params = gates[k]
        xb = xbins[:, k, :]
        hidden, w = _forward_cache(xb, params)
        gk = np.einsum("nm,nmc->nc", w, log_bern[:, k, :, :])  # (N, 2)
        shifted = gk - gk.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1)) + gk.max(axis=1)
        picked = gk[np.arange(n), target[:, k]]
        total += float(((lse - picked) * mask[:, k]).sum()) / n
        q = np.exp(gk - lse[:, None])
        dg = q.copy()
        dg[np.arange(n), target[:, k]] -= 1.0
        dg *= mask[:, k][:, None] / n
        dw = np.einsum("nc,nmc->nm", dg, log_bern[:, k, :, :])
        grads.append(_backprop_gate(xb, hidden, w, dw, params))
    return total, grads


# ---------------------------------------------------------------------------
# Feature preparation per fusion mode
# ---------------------------------------------------------------------------


def classification_features(
    records: list[LogitRecord], calib: CalibrationState, mode: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(X, probs, log_probs, y) for classification training/inference.

    logitprod / learnable_sum gate on the cue vector; learnable_product gates
    on the flattened calibrated logits (the featureless ablation).
    """
    z = apply_temperatures_batch(stacked_logits(records), calib)
    probs = clamp_probs(softmax(z))
    if mode == "learnable_product":
        x = z.reshape(z.shape[0], -1)
    else:
        x = gating_inputs(probs)
    return x, probs, np.log(probs), labels_array(records)


def survival_features(
    records: list[LogitRecord], calib: CalibrationState, mode: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(Xbins, hazards, log_bern, mask, target) for survival training."""
    z = apply_temperatures_batch(stacked_logits(records), calib)
    hazards = logits_to_hazards(z)  # (N, M, K)
    n, m, k = hazards.shape
    if mode == "learnable_product":
        flat = z.reshape(n, -1)
        xbins = np.repeat(flat[:, None, :], k, axis=1)
    else:
        xbins = survival_gate_inputs(hazards)
    bern = clamp_probs(np.stack([hazards, 1.0 - hazards], axis=-1))
    log_bern = np.log(np.transpose(bern, (0, 2, 1, 3)))  # (N, K, M, 2)
    t = np.array([r.label.value for r in records])
    delta = np.array([r.label.event for r in records])
    bins = np.arange(1, k + 1)
    mask = bins[None, :] <= t[:, None]
    target = np.ones((n, k), dtype=np.int64)  # survive
    target[np.arange(n), t - 1] = np.where(delta == 1, 0, 1)
    return xbins, hazards, log_bern, mask, target


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------


class DivergenceError(RuntimeError):
    def __init__(self, trace: TrainingTrace):
        super().__init__("training diverged: non-finite loss")
        self.trace = trace


def _adam_minimize(objective, theta0, n_train, cfg: TrainConfig, val_objective):
    """Minibatch Adam with patience-based early stopping on validation loss.

    objective(theta, idx) -> (loss, grad); deterministic given cfg.seed.
    Returns (best theta, trace).
    """
    rng = np.random.default_rng(cfg.seed + 1)
    theta = theta0.copy()
    m_t = np.zeros_like(theta)
    v_t = np.zeros_like(theta)
    step = 0
    trace = TrainingTrace()
    best_val = np.inf
    best_theta = theta.copy()
    stall = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad = objective(theta, idx)
            if not np.isfinite(loss):
                raise DivergenceError(trace)
            step += 1
            m_t = cfg.beta1 * m_t + (1 - cfg.beta1) * grad
            v_t = cfg.beta2 * v_t + (1 - cfg.beta2) * grad * grad
            m_hat = m_t / (1 - cfg.beta1**step)
            v_hat = v_t / (1 - cfg.beta2**step)
            theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
            epoch_loss += loss
            n_batches += 1
        val = val_objective(theta)
        if not np.isfinite(val):
            raise DivergenceError(trace)
        trace.append(epoch, epoch_loss / n_batches, val)
        if val < best_val - 1e-12:
            best_val = val
            best_theta = theta.copy()
            trace.best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    return best_theta, trace


def train_gate(
    records: list[LogitRecord],
    meta: ExpertPoolMeta,
    calib: CalibrationState,
    cfg: TrainConfig,
    mode: str = "logitprod",
) -> tuple[list[GateParameters], TrainingTrace]:
    """Train the gate(s) on train-role records, early-stopping on validation.

    Returns a list of gates: length 1 for classification, K for survival.
    """
    train = [r for r in records if r.split_role == "train"]
    val = [r for r in records if r.split_role == "validation"]
    if not train or not val:
        raise ValueError("train and validation roles must both be nonempty")
    rng = np.random.default_rng(cfg.seed)
    m = meta.n_experts
    if meta.task.is_survival:
        xb_tr, _, lb_tr, mask_tr, tgt_tr = survival_features(train, calib, mode)
        xb_va, _, lb_va, mask_va, tgt_va = survival_features(val, calib, mode)
        k = meta.task.n_outputs
        template = [init_gate(xb_tr.shape[2], m, rng) for _ in range(k)]
        theta0 = flatten_gates(template)

        def objective(theta, idx):
            gates = unflatten_gates(theta, template)
            loss, grads = survival_loss_and_grads(
                gates, xb_tr[idx], lb_tr[idx], mask_tr[idx], tgt_tr[idx]
            )
            return loss, flatten_gates(grads)

        def val_objective(theta):
            gates = unflatten_gates(theta, template)
            loss, _ = survival_loss_and_grads(gates, xb_va, lb_va, mask_va, tgt_va)
            return loss

    else:
        x_tr, p_tr, lp_tr, y_tr = classification_features(train, calib, mode)
        x_va, p_va, lp_va, y_va = classification_features(val, calib, mode)
        template = [init_gate(x_tr.shape[1], m, rng)]
        theta0 = flatten_gates(template)
        use_sum = mode == "learnable_sum"

        def objective(theta, idx):
            (gate,) = unflatten_gates(theta, template)
            if use_sum:
                loss, grad = sum_loss_and_grads(gate, x_tr[idx], p_tr[idx], y_tr[idx])
            else:
                loss, grad = product_loss_and_grads(gate, x_tr[idx], lp_tr[idx], y_tr[idx])
            return loss, flatten_gates([grad])

        def val_objective(theta):
            (gate,) = unflatten_gates(theta, template)
            if use_sum:
                loss, _ = sum_loss_and_grads(gate, x_va, p_va, y_va)
            else:
                loss, _ = product_loss_and_grads(gate, x_va, lp_va, y_va)
            return loss

    best_theta, trace = _adam_minimize(objective, theta0, len(train), cfg, val_objective)
    return unflatten_gates(best_theta, template), trace


def save_gates(gates: list[GateParameters], path: str | Path):
    obj = {"n_gates": len(gates), "gates": [g.to_json() for g in gates]}
    Path(path).write_text(json.dumps(obj, sort_keys=True))


def load_gates(path: str | Path) -> list[GateParameters]:
    obj = json.loads(Path(path).read_text())
    return [GateParameters.from_json(g) for g in obj["gates"]]
