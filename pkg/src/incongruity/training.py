"""Optimization loop: Adam, global-norm clipping, batching, early stopping."""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .layers import PAD_ID
from .metrics import accuracy, auroc
from .models import nll_loss
from .autograd import zero_grads


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 5
    lr: float = 0.001
    clip_norm: float = 1.0
    eval_every: int = 500
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "eval_every"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.lr <= 0 or self.clip_norm <= 0 or self.patience < 0:
            raise ContractError("lr and clip_norm must be positive, patience >= 0")


class AdamState:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}


def adam_step(state, params=None):
    params = state.params if params is None else params
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**state.t)
        v_hat = v / (1.0 - b2**state.t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_global_norm(params, threshold):
    """Rescale all gradients when their joint L2 norm exceeds the threshold.

    Returns the scale factor applied (1.0 when no clipping happened).
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm <= threshold or norm == 0.0:
        return 1.0
    scale = threshold / norm
    for p in params:
        if p.grad is not None:
            p.grad *= scale
    return scale


# -- batching ----------------------------------------------------------------------


def pad_batch(instances):
    """Pad headlines and chunks within a batch to shared lengths with id 0.

    Masking inside the models makes this padding neutral: an instance's score
    is unchanged by however much padding its batch-mates force on it.
    """
    max_head = max(len(inst.headline_ids) for inst in instances)
    max_chunks = max(len(inst.chunks) for inst in instances)
    max_tokens = max((len(c) for inst in instances for c in inst.chunks), default=1)
    batch = []
    for inst in instances:
        headline = inst.headline_ids + [PAD_ID] * (max_head - len(inst.headline_ids))
        chunks = [c + [PAD_ID] * (max_tokens - len(c)) for c in inst.chunks]
        chunks += [[PAD_ID] * max_tokens] * (max_chunks - len(chunks))
        batch.append((headline, chunks, inst.label))
    return batch


# -- training loop -----------------------------------------------------------------


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_auroc: float = float("-inf")
    best_step: int = 0
    steps_run: int = 0
    diverged: bool = False


def _snapshot(params):
    return {p.name: p.data.copy() for p in params}


def _restore(params, snap):
    for p in params:
        p.data[...] = snap[p.name]


def evaluate_split(model, instances):
    scores = [float(model.score_instance(inst.headline_ids, inst.chunks).data) for inst in instances]
    labels = [inst.label for inst in instances]
    return scores, labels


def train(model, train_set, dev_set, config):
    """Train with Adam + clipping; keep the best dev-AUROC parameters.

    Evaluates the dev split every ``eval_every`` steps (and once at the end of
    training); stops once ``patience`` evaluations have passed since the best
    one. On divergence (NaN loss) the best parameters so far are restored and
    the result is flagged.
    """
    if not train_set or not dev_set:
        raise DataError("train and dev splits must both be nonempty")
    params = model.parameters()
    adam = AdamState(params, lr=config.lr)
    rng = random.Random(config.seed)
    result = TrainResult()
    best_snap = _snapshot(params)
    best_eval_index = 0
    eval_index = 0
    loss_since_eval = []

    def run_eval(step):
        nonlocal eval_index, best_eval_index, best_snap
        eval_index += 1
        scores, labels = evaluate_split(model, dev_set)
        dev_acc = accuracy(scores, labels)
        dev_auroc = auroc(scores, labels)
        mean_loss = sum(loss_since_eval) / max(1, len(loss_since_eval))
        loss_since_eval.clear()
        result.history.append(
            {"step": step, "train_loss": mean_loss, "dev_acc": dev_acc, "dev_auroc": dev_auroc}
        )
        if dev_auroc > result.best_auroc:
            result.best_auroc = dev_auroc
            result.best_step = step
            best_eval_index = eval_index
            best_snap = _snapshot(params)
        return eval_index - best_eval_index >= config.patience

    step = 0
    stop = False
    for _ in range(config.max_epochs):
        order = list(range(len(train_set)))
        rng.shuffle(order)
        for lo in range(0, len(order), config.batch_size):
            batch = pad_batch([train_set[i] for i in order[lo : lo + config.batch_size]])
            probs = [model.score_instance(h, c, train=True) for h, c, _ in batch]
            loss = nll_loss(probs, [y for _, _, y in batch])
            if not np.isfinite(loss.data):
                _restore(params, best_snap)
                result.diverged = True
                result.steps_run = step
                return result
            loss_since_eval.append(float(loss.data))
            zero_grads(params)
            loss.backward()
            clip_global_norm(params, config.clip_norm)
            adam_step(adam)
            step += 1
            if step % config.eval_every == 0:
                stop = run_eval(step)
                if stop:
                    break
        if stop:
            break
    if not stop and (not result.history or result.history[-1]["step"] != step):
        run_eval(step)
    _restore(params, best_snap)
    result.steps_run = step
    return result


def write_history_csv(path, history):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "train_loss", "dev_acc", "dev_auroc"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)
