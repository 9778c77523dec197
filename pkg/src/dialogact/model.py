"""Hierarchical tagger: utterance encoder -> conversation Bi-GRU -> CRF.

The forward pass runs in two phases. Phase one walks the conversation in
order; utterance ``i`` is encoded using the forward conversation state of
utterance ``i - 1`` (zero for the first), and that state is then advanced.
Phase two runs the backward conversation GRU over the finished utterance
vectors. The two state sequences are concatenated and scored per label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dialogact import crf
from dialogact.config import ModelConfig
from dialogact.corpus import (
    Conversation,
    LabelSet,
    TfIdf,
    Vocabulary,
    build_vocab,
    load_pretrained_word_vectors,
    tfidf_stats,
)
from dialogact.embeddings import TokenEmbedder
from dialogact.encoder import UtteranceEncoder
from dialogact.errors import ContractError
from dialogact.layers import GruCell, Linear, ParamStore
from dialogact.tensor import Tensor, add, concat, constant, mul, no_tape, reshape, scale

log = logging.getLogger(__name__)


class CrfParams:
    """Transition scores (``T[a, b]``: b follows a), start/end scores and the
    emission projection. Chain scores start at zero."""

    def __init__(self, store: ParamStore, n_in: int, n_labels: int):
        self.emission = Linear(store, "crf.emit", n_in, n_labels)
        self.transitions = store.zeros("crf.transitions", (n_labels, n_labels))
        self.start = store.zeros("crf.start", (n_labels,))
        self.end = store.zeros("crf.end", (n_labels,))


@dataclass
class ForwardOutput:
    G: Tensor              # (L, 2k)
    emissions: Tensor      # (L, |Y|)
    utterances: Tensor     # (L, 2u) utterance vectors after dropout
    attention: list[np.ndarray]
    penalty: Tensor | None = None


class ConversationModel:
    def __init__(self, config: ModelConfig, vocab: Vocabulary, labels: LabelSet, *,
                 word_vectors: np.ndarray | None = None, tfidf: TfIdf | None = None):
        self.config = config
        self.vocab = vocab
        self.labels = labels
        dtype = np.float64 if config.precision == "float64" else np.float32
        self.dtype = dtype
        self.params = ParamStore(np.random.default_rng(config.seed), dtype=dtype)
        store = self.params
        self.embedder = TokenEmbedder(
            store, vocab, config.word_dim, word_vectors=word_vectors, use_char_cnn=config.use_char_cnn,
            char_dim=config.char_dim, char_filters=config.char_filters, char_width=config.char_width,
            external_dim=config.external_dim, speaker_token=config.speaker_token,
            # the tf-idf baseline reads word vectors as fixed features
            freeze_words=config.freeze_words or config.encoder == "tfidf-glove")
        self.encoder = UtteranceEncoder(config, store, self.embedder.dim, config.word_dim)
        self.idf = None
        if config.encoder == "tfidf-glove":
            idf = np.array([tfidf.weight(w) if tfidf else 1.0 for w in vocab.words])
            self.idf = store.put("tfidf.idf", idf, trainable=False).data
        two_u, k = 2 * config.u, config.k
        self.conv_fwd = GruCell(store, "conv.gru_f", two_u, k)
        self.conv_bwd = GruCell(store, "conv.gru_b", two_u, k)
        self.crf = CrfParams(store, 2 * k, len(labels))
        self._batches: dict[int, tuple[Conversation, object]] = {}

    # -- helpers ---------------------------------------------------------------

    def token_batch(self, conv: Conversation):
        hit = self._batches.get(id(conv))
        if hit is None or hit[0] is not conv:
            hit = (conv, self.embedder.batch(conv))
            self._batches[id(conv)] = hit
        return hit[1]

    def set_external_vectors(self, vectors: dict | None) -> None:
        self.embedder.external = vectors
        self._batches.clear()

    def _dropout(self, h: Tensor, rng: np.random.Generator | None) -> Tensor:
        rate = self.config.dropout
        if rng is None or rate == 0.0:
            return h
        keep = (rng.random(h.shape) >= rate).astype(self.dtype) / (1.0 - rate)
        return mul(h, constant(keep))

    # -- forward ---------------------------------------------------------------

    def forward(self, conv: Conversation, mode: str = "eval", rng: np.random.Generator | None = None) -> ForwardOutput:
        """``mode="train"`` applies inverted dropout to utterance vectors using ``rng``."""
        if mode not in ("train", "eval"):
            raise ContractError(f"mode must be train or eval, got {mode!r}")
        if mode == "train" and rng is None and self.config.dropout > 0:
            raise ContractError("train mode needs a random generator for dropout")
        drop_rng = rng if mode == "train" else None
        tb = self.token_batch(conv)
        enc = self.encoder
        X = None if enc.variant == "tfidf-glove" else self.embedder.embed_padded(tb)
        prep = enc.prepare(X, tb, self.embedder.words, self.idf)
        L = len(conv)
        k = self.config.k
        if enc.context:
            g = self.conv_fwd.zero_state(1, self.dtype)
            hs, gs = [], []
            for i in range(L):
                h = self._dropout(enc.encode(prep, i, g), drop_rng)
                g = reshape(self.conv_fwd.run(reshape(h, (1, 1, h.shape[1])), g), (1, k))
                hs.append(h)
                gs.append(g)
            Hu = concat(hs, axis=0)
            g_fwd = concat(gs, axis=0)
        else:
            # without a context term the forward pass has no sequential coupling
            Hu = self._dropout(enc.encode_all(prep), drop_rng)
            g_fwd = reshape(self.conv_fwd.run(reshape(Hu, (1, L, Hu.shape[1]))), (L, k))
        seq = reshape(Hu, (1, L, Hu.shape[1]))
        g_bwd = reshape(self.conv_bwd.run(seq, reverse=True), (L, k))
        G = concat([g_fwd, g_bwd], axis=1)
        emissions = self.crf.emission(G)
        penalty = None
        if prep.penalties:
            penalty = prep.penalties[0]
            for p in prep.penalties[1:]:
                penalty = add(penalty, p)
        return ForwardOutput(G, emissions, Hu, prep.attention, penalty)

    def loss(self, conv: Conversation, rng: np.random.Generator | None = None, mode: str = "train") -> Tensor:
        """CRF negative log-likelihood of the gold labels (summed over utterances)."""
        out = self.forward(conv, mode=mode, rng=rng)
        nll = crf.crf_nll(out.emissions, self.crf.transitions, self.crf.start, self.crf.end,
                          self.labels.encode(conv.labels))
        if out.penalty is not None:
            nll = add(nll, scale(out.penalty, self.config.attention_penalty))
        return nll

    def emission_scores(self, conv: Conversation) -> np.ndarray:
        return self.forward(conv, "eval").emissions.data

    def predict(self, conv: Conversation, decode: str = "crf") -> list[int]:
        """Label ordinals for ``conv``.

        ``decode="crf"`` is Viterbi over the learned chain; ``"argmax"`` zeroes
        transition, start and end scores and takes each utterance's best label.
        """
        E = self.emission_scores(conv)
        if decode == "argmax":
            return [int(i) for i in np.argmax(E, axis=1)]
        if decode != "crf":
            raise ContractError(f"unknown decode mode {decode!r}")
        path, _ = crf.viterbi(E, self.crf.transitions.data, self.crf.start.data, self.crf.end.data)
        return path

    def predict_labels(self, conv: Conversation, decode: str = "crf") -> list[str]:
        return self.labels.decode(self.predict(conv, decode))

    def marginals(self, conv: Conversation) -> np.ndarray:
        E = self.emission_scores(conv)
        return crf.marginals(E, self.crf.transitions.data, self.crf.start.data, self.crf.end.data)

    def total_loss(self, convs) -> float:
        with no_tape():
            return float(sum(self.loss(c, mode="eval").item() for c in convs))

    def trainable(self) -> list[Tensor]:
        return self.params.trainable()


def build_model(train: Sequence[Conversation], labels: LabelSet, config: ModelConfig, *,
                min_count: int = 1, embeddings: str | Path | None = None) -> ConversationModel:
    """Vocabulary, optional pretrained word table and tf-idf weights from ``train``."""
    vocab = build_vocab(train, min_count, speaker_token=config.speaker_token)
    vectors = None
    if embeddings is not None:
        vectors, coverage = load_pretrained_word_vectors(embeddings, vocab, config.word_dim, seed=config.seed)
        log.info("pretrained vectors cover %.1f%% of the vocabulary", 100 * coverage)
    tfidf = tfidf_stats(train) if config.encoder == "tfidf-glove" else None
    return ConversationModel(config, vocab, labels, word_vectors=vectors, tfidf=tfidf)
