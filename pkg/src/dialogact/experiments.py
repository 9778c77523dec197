"""Synthetic experiment measuring what the context term buys.

Each seed draws a fresh corpus from a six-state Markov chain whose rows put
most mass on two successors, with word profiles that share most of their
vocabulary between neighbouring labels. The same seed then trains the
context-aware model and its context-free twin with identical settings.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from dialogact.config import ModelConfig, TrainConfig, without_context
from dialogact.corpus import CorpusSplits, LabelSet, generate_synthetic_corpus, overlapping_profiles
from dialogact.metrics import evaluate
from dialogact.model import build_model
from dialogact.training import fit

log = logging.getLogger(__name__)


@dataclass
class ContextCorpus:
    n_labels: int = 6
    successor_mass: tuple[float, float] = (0.45, 0.45)
    own_words: int = 4
    shared_words: int = 4
    own_mass: float = 0.25
    neighbor_mass: float = 0.15
    n_conversations: int = 250
    mean_length: float = 20.0
    mean_tokens: float = 10.0

    @property
    def labels(self) -> list[str]:
        return [f"L{i}" for i in range(self.n_labels)]

    def transitions(self) -> np.ndarray:
        n = self.n_labels
        p1, p2 = self.successor_mass
        T = np.full((n, n), (1.0 - p1 - p2) / (n - 2))
        for i in range(n):
            T[i, (i + 1) % n] = p1
            T[i, (i + 2) % n] = p2
        return T

    def generate(self, seed: int) -> CorpusSplits:
        profiles = overlapping_profiles(self.labels, self.own_words, self.shared_words, self.own_mass,
                                        self.neighbor_mass)
        return generate_synthetic_corpus(self.n_conversations, self.mean_length, self.transitions(), profiles,
                                         seed=seed, labels=self.labels, mean_tokens=self.mean_tokens)


CONTEXT_MODEL = ModelConfig(encoder="birnn-selfattn-context", word_dim=16, char_filters=8, u=1, k=8, d_a=8, r=2,
                            dropout=0.3)
CONTEXT_TRAINING = TrainConfig(max_epochs=15)


@dataclass
class SeedResult:
    seed: int
    full: float          # context model, CRF decoding
    no_context: float    # context-free twin, CRF decoding
    argmax: float        # context model, chain scores zeroed at decode
    seconds: float

    @property
    def gap_context(self) -> float:
        return self.full - self.no_context

    @property
    def gap_argmax(self) -> float:
        return self.full - self.argmax


@dataclass
class ContextUtility:
    results: list[SeedResult] = field(default_factory=list)

    def mean(self, attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in self.results]))


def run_context_utility(seeds: Sequence[int] = range(5), corpus: ContextCorpus | None = None,
                        model: ModelConfig = CONTEXT_MODEL, training: TrainConfig = CONTEXT_TRAINING
                        ) -> ContextUtility:
    corpus = corpus or ContextCorpus()
    labels = LabelSet(corpus.labels)
    out = ContextUtility()
    for seed in seeds:
        t0 = time.perf_counter()
        splits = corpus.generate(seed)
        accs = {}
        for variant in (model.encoder, without_context(model.encoder)):
            mc, tc = replace(model, encoder=variant, seed=seed), replace(training, seed=seed)
            m = build_model(splits.train, labels, mc, min_count=tc.min_count)
            fit(m, splits.train, splits.validation, tc)
            accs[variant] = evaluate(m, splits.test).accuracy
            if variant == model.encoder:
                accs["argmax"] = evaluate(m, splits.test, decode="argmax").accuracy
        res = SeedResult(seed, accs[model.encoder], accs[without_context(model.encoder)], accs["argmax"],
                         time.perf_counter() - t0)
        log.info("seed %d: full %.3f no-context %.3f argmax %.3f (%.0fs)", seed, res.full, res.no_context,
                 res.argmax, res.seconds)
        out.results.append(res)
    return out
