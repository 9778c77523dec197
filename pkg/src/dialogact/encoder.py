"""Utterance encoders: Bi-GRU over tokens followed by (context-aware)
self-attention, plus the pooling/CNN/TF-IDF variants used for ablations.

Every variant maps an utterance to a vector of size ``2u`` so the
conversation model is agnostic to the choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dialogact.config import CONTEXT_VARIANTS, ModelConfig
from dialogact.embeddings import TokenBatch
from dialogact.errors import ContractError, DimensionError
from dialogact.layers import GruCell, Linear, ParamStore
from dialogact.tensor import (
    Tensor,
    add,
    concat,
    constant,
    matmul,
    max_axis,
    reshape,
    softmax_rows,
    sub,
    take_rows,
    tanh,
    transpose,
    tsum,
    mul,
)


class AttentionParams:
    """Scores ``S = W_s2 tanh(W_s1 H^T + W_s3 g + b)``.

    Shapes: ``W_s1`` (d_a, 2u), ``W_s2`` (r, d_a), ``W_s3`` (d_a, k), ``b``
    (d_a,). ``W_s3`` exists only for context-aware variants. With
    ``project=True`` the flattened r x 2u matrix is mapped back to 2u.
    """

    def __init__(self, store: ParamStore, prefix: str, two_u: int, k: int, d_a: int, r: int,
                 context: bool, project: bool):
        self.w_s1 = store.glorot(f"{prefix}.w_s1", (d_a, two_u))
        self.w_s2 = store.glorot(f"{prefix}.w_s2", (r, d_a))
        self.w_s3 = store.glorot(f"{prefix}.w_s3", (d_a, k)) if context else None
        self.b = store.zeros(f"{prefix}.b", (d_a,))
        self.projection = Linear(store, f"{prefix}.proj", r * two_u, two_u) if project else None
        self.r, self.d_a, self.k = r, d_a, k

    def transposed(self) -> "_Transposed":
        return _Transposed(transpose(self.w_s1), transpose(self.w_s2),
                           transpose(self.w_s3) if self.w_s3 is not None else None)


@dataclass
class _Transposed:
    w_s1: Tensor
    w_s2: Tensor
    w_s3: Tensor | None


def context_attention_scores(H: Tensor, g_prev: Tensor | None, params: AttentionParams,
                             tr: _Transposed | None = None) -> Tensor:
    """Attention scores (r, n) for one utterance's GRU outputs ``H`` (n, 2u).

    ``g_prev`` is the previous forward conversation state, shape (k,) or
    (1, k); ``None`` drops the context term.
    """
    tr = tr or params.transposed()
    if H.shape[1] != params.w_s1.shape[1]:
        raise DimensionError(f"attention: H has width {H.shape[1]}, W_s1 expects {params.w_s1.shape[1]}")
    bias: Tensor = params.b
    if g_prev is not None:
        if params.w_s3 is None:
            raise ContractError("context state given to a context-free attention")
        if g_prev.data.ndim == 1:
            g_prev = reshape(g_prev, (1, g_prev.shape[0]))
        if g_prev.shape != (1, params.k):
            raise DimensionError(f"attention: context has shape {g_prev.shape}, expected (1, {params.k})")
        bias = add(matmul(g_prev, tr.w_s3), params.b)
    hidden = tanh(add(matmul(H, tr.w_s1), bias))
    return transpose(matmul(hidden, tr.w_s2))


def attend(H: Tensor, S: Tensor, projection: Linear | None = None) -> tuple[Tensor, Tensor]:
    """Softmax over positions per hop, ``M = A H``, then flatten and project.

    Returns the attention matrix ``A`` (r, n) and the utterance vector (1, 2u).
    """
    if S.shape[1] != H.shape[0]:
        raise DimensionError(f"attend: scores {S.shape} do not match H {H.shape}")
    A = softmax_rows(S)
    M = matmul(A, H)
    if projection is None:
        return A, M
    return A, projection(reshape(M, (1, M.shape[0] * M.shape[1])))


def bigru_encode(tokens, fwd: GruCell, bwd: GruCell, mask: np.ndarray | None = None) -> Tensor:
    """Bi-GRU outputs with forward and backward states concatenated per step.

    ``tokens`` is either a list of (d,) tensors for a single utterance, giving
    (n, 2u), or a padded batch (B, T, d) with ``mask``, giving (B, T, 2u).
    Initial states are zero.
    """
    single = isinstance(tokens, (list, tuple))
    if single:
        if not tokens:
            raise ContractError("cannot encode an empty token sequence")
        X = reshape(concat([reshape(t, (1, t.shape[-1])) for t in tokens], axis=0), (1, len(tokens), tokens[0].shape[-1]))
    else:
        X = tokens
    H = concat([fwd.run(X, mask=mask), bwd.run(X, mask=mask, reverse=True)], axis=2)
    if single:
        return reshape(H, (len(tokens), H.shape[2]))
    return H


def attention_penalty(A: Tensor) -> Tensor:
    """Redundancy penalty ``||A A^T - I||_F^2`` for an (r, n) attention matrix."""
    D = sub(matmul(A, transpose(A)), constant(np.eye(A.shape[0], dtype=A.dtype)))
    return tsum(mul(D, D))


@dataclass
class Prepared:
    """Per-conversation quantities that do not depend on the conversation state."""

    lengths: np.ndarray
    H: Tensor | None = None           # (B*T, 2u) flattened Bi-GRU outputs
    T: int = 0
    fixed: Tensor | None = None       # (B, 2u) for variants with no per-utterance step
    tr: _Transposed | None = None
    attention: list[np.ndarray] = field(default_factory=list)
    penalties: list[Tensor] = field(default_factory=list)


class UtteranceEncoder:
    def __init__(self, config: ModelConfig, store: ParamStore, token_dim: int, word_dim: int):
        self.variant = config.encoder
        self.config = config
        u, two_u, k = config.u, 2 * config.u, config.k
        self.out_dim = two_u
        v = self.variant
        self.context = v in CONTEXT_VARIANTS
        self.fwd = self.bwd = None
        self.attn = None
        if v in ("rnn-last",):
            self.fwd = GruCell(store, "utt.gru_f", token_dim, u)
            self.lift = Linear(store, "utt.lift", u, two_u)
        elif v.startswith("birnn"):
            self.fwd = GruCell(store, "utt.gru_f", token_dim, u)
            self.bwd = GruCell(store, "utt.gru_b", token_dim, u)
        if v.startswith("birnn-selfattn"):
            self.attn = AttentionParams(store, "attn", two_u, k, config.d_a, config.r, self.context, project=True)
        elif v.startswith("birnn-attention"):
            self.attn = AttentionParams(store, "attn", two_u, k, config.d_a, 1, self.context, project=False)
        if v == "cnn":
            base = two_u // 3
            self.cnn_widths = (3, 4, 5)
            sizes = (base, base, two_u - 2 * base)
            self.cnn = [Linear(store, f"utt.cnn{w}", w * token_dim, n) for w, n in zip(self.cnn_widths, sizes)]
            self.cnn_sizes = sizes
        if v == "tfidf-glove":
            self.lift = Linear(store, "utt.tfidf", word_dim, two_u)
        self.token_dim = token_dim

    @property
    def per_utterance(self) -> bool:
        return self.attn is not None

    # -- batched preparation -------------------------------------------------

    def prepare(self, X: Tensor | None, tb: TokenBatch, word_table: Tensor | None = None,
                idf: np.ndarray | None = None) -> Prepared:
        """``X`` is the padded token batch (B, T, d); tf-idf uses the word table instead."""
        v = self.variant
        prep = Prepared(lengths=tb.lengths)
        B = len(tb.lengths)
        if v == "tfidf-glove":
            prep.fixed = self.lift(constant(self._tfidf_means(tb, word_table, idf)))
            return prep
        if v == "cnn":
            prep.fixed = self._cnn(X, tb)
            return prep
        T = X.shape[1]
        prep.T = T
        last = np.arange(B) * T + tb.lengths - 1
        if v == "rnn-last":
            Hf = reshape(self.fwd.run(X, mask=tb.mask), (B * T, self.config.u))
            prep.fixed = self.lift(take_rows(Hf, last))
            return prep
        H = bigru_encode(X, self.fwd, self.bwd, mask=tb.mask)
        Hflat = reshape(H, (B * T, 2 * self.config.u))
        if v == "birnn-last":
            u = self.config.u
            fwd_last = take_rows(Hflat, last)
            bwd_first = take_rows(Hflat, np.arange(B) * T)
            prep.fixed = concat([_cols(fwd_last, 0, u), _cols(bwd_first, u, 2 * u)], axis=1)
        elif v == "birnn-maxpool":
            prep.fixed = max_axis(H, 1, mask=tb.mask[:, :, None])
        else:
            prep.H = Hflat
            prep.tr = self.attn.transposed()
        return prep

    def encode(self, prep: Prepared, i: int, context: Tensor | None = None) -> Tensor:
        """Vector (1, 2u) for utterance ``i`` of a prepared conversation."""
        if self.context and context is None:
            raise ContractError(f"{self.variant} needs the previous conversation state")
        if not self.context and context is not None:
            raise ContractError(f"{self.variant} does not take a context state")
        if prep.fixed is not None:
            return take_rows(prep.fixed, [i])
        n = int(prep.lengths[i])
        Hi = take_rows(prep.H, i * prep.T + np.arange(n))
        S = context_attention_scores(Hi, context, self.attn, prep.tr)
        A, h = attend(Hi, S, self.attn.projection)
        prep.attention.append(A.data)
        if self.config.attention_penalty > 0 and self.attn.r > 1:
            prep.penalties.append(attention_penalty(A))
        return h

    def encode_all(self, prep: Prepared) -> Tensor:
        """All utterance vectors (B, 2u); only valid for context-free variants."""
        if self.context:
            raise ContractError("context-aware variants must be encoded one utterance at a time")
        if prep.fixed is not None:
            return prep.fixed
        return concat([self.encode(prep, i) for i in range(len(prep.lengths))], axis=0)

    def encode_utterance(self, tokens: Tensor, context_state: Tensor | None = None,
                         word_ids=None, word_table: Tensor | None = None, idf: np.ndarray | None = None) -> Tensor:
        """Encode a single utterance given its token vectors (n, d)."""
        n = tokens.shape[0]
        if n < 1:
            raise ContractError("cannot encode an empty utterance")
        tb = TokenBatch(
            word_ids=np.asarray(word_ids if word_ids is not None else np.zeros(n), dtype=np.intp),
            uniq_chars=[], uniq_index=np.zeros(n, dtype=np.intp), word_of_token=[],
            pad_index=np.arange(n), mask=np.ones((1, n), dtype=bool), lengths=np.array([n]), external=None)
        X = reshape(tokens, (1, n, tokens.shape[1]))
        prep = self.prepare(X, tb, word_table, idf)
        return reshape(self.encode(prep, 0, context_state), (self.out_dim,))

    # -- variant internals ---------------------------------------------------

    def _tfidf_means(self, tb: TokenBatch, word_table: Tensor, idf: np.ndarray) -> np.ndarray:
        vecs = word_table.data[tb.word_ids]
        w = idf[tb.word_ids]
        out = np.zeros((len(tb.lengths), vecs.shape[1]), dtype=vecs.dtype)
        start = 0
        for b, n in enumerate(tb.lengths):
            ws = w[start:start + n]
            out[b] = ws @ vecs[start:start + n] / ws.sum()
            start += n
        return out

    def _cnn(self, X: Tensor, tb: TokenBatch) -> Tensor:
        B, T, d = X.shape
        flat = concat([reshape(X, (B * T, d)), constant(np.zeros((1, d), dtype=X.dtype))], axis=0)
        zero_row = B * T
        outs = []
        for w, lin, n_f in zip(self.cnn_widths, self.cnn, self.cnn_sizes):
            padded = np.maximum(tb.lengths, w)
            P = int(padded.max()) - w + 1
            pos = np.arange(P)[:, None] + np.arange(w)[None, :]  # (P, w)
            idx = np.full((B, P, w), zero_row, dtype=np.intp)
            for b in range(B):
                real = pos < tb.lengths[b]
                idx[b][real] = b * T + pos[real]
            valid = (np.arange(P)[None, :] <= (padded - w)[:, None])[:, :, None]
            win = reshape(take_rows(flat, idx.reshape(-1)), (B * P, w * d))
            feats = reshape(tanh(lin(win)), (B, P, n_f))
            outs.append(max_axis(feats, 1, mask=valid))
        return concat(outs, axis=1)


def _cols(t: Tensor, lo: int, hi: int) -> Tensor:
    """Columns lo:hi of a matrix via a fixed selector (keeps the op set small)."""
    sel = np.zeros((t.shape[1], hi - lo), dtype=t.dtype)
    sel[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
    return matmul(t, constant(sel))
