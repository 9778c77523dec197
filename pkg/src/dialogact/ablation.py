"""Train several utterance-encoder variants under shared seeds and settings."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from dialogact.config import ModelConfig, TrainConfig
from dialogact.corpus import CorpusSplits, LabelSet
from dialogact.errors import DialogActError
from dialogact.metrics import evaluate
from dialogact.model import build_model
from dialogact.training import fit

log = logging.getLogger(__name__)


@dataclass
class AblationRow:
    variant: str
    accuracies: list[float] = field(default_factory=list)
    error: str | None = None

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.accuracies)) if self.accuracies else None

    @property
    def std(self) -> float | None:
        return float(np.std(self.accuracies)) if self.accuracies else None


def ablate(splits: CorpusSplits, labels: LabelSet, variants: Sequence[str], seeds: Sequence[int],
           model_config: ModelConfig, train_config: TrainConfig, split: str = "test",
           embeddings=None) -> list[AblationRow]:
    """One row per variant: test accuracy for each seed.

    A variant that fails records its error and the grid carries on.
    """
    if not variants:
        raise DialogActError("ablation needs at least one variant")
    rows = []
    for variant in variants:
        row = AblationRow(variant)
        try:
            for seed in seeds:
                mc = replace(model_config, encoder=variant, seed=seed)
                tc = replace(train_config, seed=seed)
                model = build_model(splits.train, labels, mc, min_count=tc.min_count, embeddings=embeddings)
                fit(model, splits.train, splits.validation, tc)
                row.accuracies.append(evaluate(model, splits.split(split)).accuracy)
                log.info("%s seed %d: %.4f", variant, seed, row.accuracies[-1])
        except DialogActError as exc:
            row.error = f"{exc.category}: {exc}"
            log.warning("variant %s failed: %s", variant, row.error)
        rows.append(row)
    return rows


def format_table(rows: Sequence[AblationRow]) -> str:
    lines = [f"{'Method':<28}{'Accuracy':>10}{'Std':>8}{'Runs':>6}"]
    for r in rows:
        if r.error:
            lines.append(f"{r.variant:<28}{'failed':>10}  {r.error}")
        else:
            lines.append(f"{r.variant:<28}{100 * r.mean:>10.1f}{100 * r.std:>8.1f}{len(r.accuracies):>6}")
    return "\n".join(lines)
