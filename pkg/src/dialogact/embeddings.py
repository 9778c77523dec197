"""Token input vectors: word table, character CNN, optional external vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dialogact.corpus import Conversation, Vocabulary, model_tokens
from dialogact.errors import ContractError, FormatError
from dialogact.layers import ParamStore
from dialogact.tensor import Tensor, add, concat, matmul, max_axis, reshape, take_rows, tanh


class CharCnnEncoder:
    """Character embeddings -> one convolution (``filters`` x ``width``) ->
    tanh -> max over positions. Words shorter than ``width`` are right-padded
    with the PAD character."""

    def __init__(self, store: ParamStore, n_chars: int, char_dim: int = 16, filters: int = 50, width: int = 3):
        self.width, self.filters, self.char_dim = width, filters, char_dim
        self.table = store.glorot("char.table", (n_chars, char_dim))
        self.conv = store.glorot("char.conv.w", (width * char_dim, filters))
        self.bias = store.zeros("char.conv.b", (filters,))

    def windows(self, char_ids: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
        """Window index array (W, P, width) and validity mask (W, P, 1)."""
        for ids in char_ids:
            if not ids:
                raise ContractError("cannot embed an empty word")
        w = self.width
        padded = [max(len(ids), w) for ids in char_ids]
        P = max(padded) - w + 1
        grid = np.zeros((len(char_ids), max(padded)), dtype=np.intp)
        for i, ids in enumerate(char_ids):
            grid[i, : len(ids)] = ids
        idx = np.stack([grid[:, p:p + w] for p in range(P)], axis=1)
        valid = np.arange(P)[None, :] <= (np.array(padded) - w)[:, None]
        return idx, valid[:, :, None]

    def __call__(self, char_ids: list[list[int]]) -> Tensor:
        """Embed a batch of words given as character ordinals; returns (W, filters)."""
        idx, valid = self.windows(char_ids)
        W, P, w = idx.shape
        emb = take_rows(self.table, idx.reshape(-1))
        feats = tanh(add(matmul(reshape(emb, (W * P, w * self.char_dim)), self.conv), self.bias))
        return max_axis(reshape(feats, (W, P, self.filters)), 1, mask=valid)


@dataclass
class TokenBatch:
    """Index arrays for one conversation, reused across epochs."""

    word_ids: np.ndarray      # (N,) word ordinal per token
    uniq_chars: list[list[int]]
    uniq_index: np.ndarray    # (N,) row of the token's word in uniq_chars
    word_of_token: list[str]
    pad_index: np.ndarray     # (B*T,) token row per padded slot
    mask: np.ndarray          # (B, T)
    lengths: np.ndarray       # (B,)
    external: np.ndarray | None


class TokenEmbedder:
    """Concatenates [word vector | char-CNN vector | external vector] per token."""

    def __init__(self, store: ParamStore, vocab: Vocabulary, word_dim: int, *, word_vectors: np.ndarray | None = None,
                 use_char_cnn: bool = True, char_dim: int = 16, char_filters: int = 50, char_width: int = 3,
                 external_dim: int = 0, freeze_words: bool = False, speaker_token: bool = False):
        self.vocab = vocab
        self.speaker_token = speaker_token
        if word_vectors is None:
            word_vectors = store.rng.uniform(-0.25, 0.25, size=(len(vocab), word_dim))
            word_vectors[0] = 0.0
        if word_vectors.shape != (len(vocab), word_dim):
            raise FormatError(f"word table has shape {word_vectors.shape}, expected {(len(vocab), word_dim)}")
        self.words = store.put("word.table", word_vectors, trainable=not freeze_words)
        self.char_cnn = CharCnnEncoder(store, len(vocab.chars), char_dim, char_filters, char_width) if use_char_cnn else None
        self.external_dim = external_dim
        self.external: dict | None = None
        self.dim = word_dim + (char_filters if use_char_cnn else 0) + external_dim

    def char_cnn_embed(self, word: str) -> Tensor:
        if self.char_cnn is None:
            raise ContractError("character CNN is disabled in this configuration")
        if not word:
            raise ContractError("cannot embed an empty word")
        return reshape(self.char_cnn([self.vocab.char_ids(word)]), (self.char_cnn.filters,))

    def batch(self, conv: Conversation) -> TokenBatch:
        toks = [model_tokens(u, self.speaker_token) for u in conv.utterances]
        flat = [t for ts in toks for t in ts]
        uniq: dict[str, int] = {}
        for t in flat:
            uniq.setdefault(t, len(uniq))
        lengths = np.array([len(ts) for ts in toks])
        B, T = len(toks), int(lengths.max())
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        pad = np.zeros((B, T), dtype=np.intp)
        mask = np.arange(T)[None, :] < lengths[:, None]
        for b in range(B):
            pad[b, : lengths[b]] = offsets[b] + np.arange(lengths[b])
        ext = None
        if self.external_dim:
            ext = np.zeros((len(flat), self.external_dim))
            if self.external:
                row = 0
                for i, ts in enumerate(toks):
                    for j in range(len(ts)):
                        vec = self.external.get((conv.id, i, j))
                        if vec is not None:
                            if vec.shape != (self.external_dim,):
                                raise FormatError(
                                    f"external vector {conv.id}:{i}:{j} has dimension {vec.shape[0]}, "
                                    f"expected {self.external_dim}")
                            ext[row] = vec
                        row += 1
        return TokenBatch(
            word_ids=np.array([self.vocab.word_id(t) for t in flat], dtype=np.intp),
            uniq_chars=[self.vocab.char_ids(w) for w in uniq],
            uniq_index=np.array([uniq[t] for t in flat], dtype=np.intp),
            word_of_token=flat,
            pad_index=pad.reshape(-1),
            mask=mask,
            lengths=lengths,
            external=ext,
        )

    def embed_flat(self, tb: TokenBatch) -> Tensor:
        """Token vectors in reading order, shape (N, dim)."""
        parts = [take_rows(self.words, tb.word_ids)]
        if self.char_cnn is not None:
            parts.append(take_rows(self.char_cnn(tb.uniq_chars), tb.uniq_index))
        if tb.external is not None:
            parts.append(Tensor(tb.external.astype(self.words.dtype)))
        return concat(parts, axis=1)

    def embed_padded(self, tb: TokenBatch) -> Tensor:
        """Token vectors as a right-padded batch (B, T, dim); padded slots hold
        an arbitrary token and must be masked downstream."""
        B, T = tb.mask.shape
        return reshape(take_rows(self.embed_flat(tb), tb.pad_index), (B, T, self.dim))
