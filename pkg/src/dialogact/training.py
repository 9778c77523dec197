"""Adam, gradient clipping, early stopping and the epoch loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dialogact.config import TrainConfig
from dialogact.corpus import Conversation
from dialogact.errors import ContractError, NumericError
from dialogact.metrics import evaluate
from dialogact.model import ConversationModel
from dialogact.tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_update(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam step, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("parameter, gradient and state lists differ in length")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ContractError(f"gradient for {p.name} has shape {g.shape}, expected {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
    state.t += 1
    c1 = 1.0 - BETA1 ** state.t
    c2 = 1.0 - BETA2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + EPS)


def clip_global_norm(grads: list[np.ndarray], max_norm: float | None) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``.
    Returns the norm before clipping."""
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm is not None and norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


class EarlyStopping:
    """Stop once the best score has gone ``patience`` epochs without a strict
    improvement. Epochs are numbered from 1."""

    def __init__(self, patience: int = 15):
        if patience < 1:
            raise ContractError("patience must be at least 1")
        self.patience = patience
        self.best: float | None = None
        self.best_epoch = 0
        self.since_best = 0
        self.epoch = 0

    def update(self, score: float) -> bool:
        """Record one epoch; True means stop now."""
        self.epoch += 1
        if self.best is None or score > self.best:
            self.best, self.best_epoch, self.since_best = score, self.epoch, 0
        else:
            self.since_best += 1
        return self.since_best >= self.patience


def early_stop_check(history: Sequence[float], patience: int = 15) -> tuple[str, int]:
    """``("stop", best_epoch)`` or ``("continue", best_epoch)`` for a history."""
    if not history:
        raise ContractError("empty validation history")
    es = EarlyStopping(patience)
    for score in history:
        if es.update(score):
            return "stop", es.best_epoch
    return "continue", es.best_epoch


def train_epoch(model: ConversationModel, train: Sequence[Conversation], config: TrainConfig,
                state: AdamState, rng: np.random.Generator) -> float:
    """One pass over ``train`` in shuffled order, one update per conversation.
    Returns the mean NLL per utterance."""
    params = model.trainable()
    total, n_utt = 0.0, 0
    for j in rng.permutation(len(train)):
        conv = train[j]
        with Tape():
            loss = model.loss(conv, rng=rng, mode="train")
            grads = backward(loss)
        g = [grads.of(p) for p in params]
        clip_global_norm(g, config.clip_norm)
        adam_update(params, g, state, config.lr)
        total += loss.item()
        n_utt += len(conv)
    return total / max(n_utt, 1)


@dataclass
class FitResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_accuracy: float | None = None
    stopped_early: bool = False


def snapshot(model: ConversationModel) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.params.items()}


def restore(model: ConversationModel, snap: dict[str, np.ndarray]) -> None:
    for name, arr in snap.items():
        model.params[name].data[...] = arr


def fit(model: ConversationModel, train: Sequence[Conversation], validation: Sequence[Conversation],
        config: TrainConfig, log_path: str | Path | None = None) -> FitResult:
    """Train with early stopping on validation accuracy and restore the best epoch.

    With an empty validation split the run lasts ``max_epochs`` and keeps the
    final parameters. One JSON record per epoch goes to ``log_path``.
    """
    rng = np.random.default_rng(config.seed)
    state = AdamState.for_params(model.trainable())
    stopper = EarlyStopping(config.patience)
    result = FitResult()
    best = None
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.perf_counter()
            nll = train_epoch(model, train, config, state, rng)
            rec = {"epoch": epoch, "train_nll": nll, "val_accuracy": None}
            stop = False
            if validation:
                acc = evaluate(model, validation).accuracy
                rec["val_accuracy"] = acc
                stop = stopper.update(acc)
                if stopper.best_epoch == epoch:
                    best = snapshot(model)
            rec["elapsed_seconds"] = time.perf_counter() - t0
            result.history.append(rec)
            log.info("epoch %d nll %.4f val %s", epoch, nll, rec["val_accuracy"])
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            if stop:
                result.stopped_early = True
                break
    finally:
        if fh:
            fh.close()
    if best is not None:
        restore(model, best)
        result.best_epoch, result.best_accuracy = stopper.best_epoch, stopper.best
    else:
        result.best_epoch = len(result.history)
    return result
