"""Linear-chain CRF: log-space forward algorithm, forward-backward marginals,
Viterbi decoding, and a differentiable negative log-likelihood op.

``transitions[a, b]`` scores label ``b`` following label ``a``.
"""

from __future__ import annotations

import numpy as np

from dialogact.errors import ContractError, DimensionError
from dialogact.tensor import Tensor, _result, register_op


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _check(emissions, transitions, start, end):
    L, Y = emissions.shape
    if L < 1:
        raise ContractError("CRF needs at least one position")
    if transitions.shape != (Y, Y) or start.shape != (Y,) or end.shape != (Y,):
        raise DimensionError(
            f"CRF shapes disagree: emissions {emissions.shape}, transitions {transitions.shape}, "
            f"start {start.shape}, end {end.shape}")


def forward_scores(emissions, transitions, start, end):
    """Forward log-scores ``alpha`` (L, Y) and the log partition function."""
    _check(emissions, transitions, start, end)
    L = emissions.shape[0]
    alpha = np.empty_like(emissions)
    alpha[0] = start + emissions[0]
    for i in range(1, L):
        alpha[i] = _lse(alpha[i - 1][:, None] + transitions, axis=0) + emissions[i]
    return alpha, float(_lse(alpha[-1] + end, axis=0))


def backward_scores(emissions, transitions, end):
    L = emissions.shape[0]
    beta = np.empty_like(emissions)
    beta[-1] = end
    for i in range(L - 2, -1, -1):
        beta[i] = _lse(transitions + (emissions[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def path_score(emissions, transitions, start, end, labels) -> float:
    y = np.asarray(labels, dtype=np.intp)
    return float(start[y[0]] + emissions[np.arange(len(y)), y].sum()
                 + transitions[y[:-1], y[1:]].sum() + end[y[-1]])


def log_partition(emissions, transitions, start, end) -> float:
    return forward_scores(emissions, transitions, start, end)[1]


def marginals(emissions, transitions, start, end) -> np.ndarray:
    """Posterior label probabilities per position, shape (L, Y)."""
    alpha, logz = forward_scores(emissions, transitions, start, end)
    beta = backward_scores(emissions, transitions, end)
    return np.exp(alpha + beta - logz)


def viterbi(emissions, transitions, start, end) -> tuple[list[int], float]:
    """Highest-scoring label sequence and its score.

    Ties go to the lower label ordinal at every step (``argmax`` keeps the
    first maximum).
    """
    _check(emissions, transitions, start, end)
    L = emissions.shape[0]
    delta = start + emissions[0]
    back = np.zeros((L, emissions.shape[1]), dtype=np.intp)
    for i in range(1, L):
        cand = delta[:, None] + transitions
        back[i] = np.argmax(cand, axis=0)
        delta = cand[back[i], np.arange(cand.shape[1])] + emissions[i]
    final = delta + end
    best = int(np.argmax(final))
    path = [best]
    for i in range(L - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    path.reverse()
    return path, float(final[best])


def _labels(labels, L, Y) -> np.ndarray:
    y = np.asarray(labels, dtype=np.intp)
    if y.shape != (L,):
        raise ContractError(f"expected {L} labels, got {y.shape[0] if y.ndim else 0}")
    if (y < 0).any() or (y >= Y).any():
        raise ContractError(f"label ordinal out of range [0, {Y})")
    return y


@register_op("crf_nll")
def crf_nll(emissions: Tensor, transitions: Tensor, start: Tensor, end: Tensor, labels) -> Tensor:
    """Negative log-likelihood of ``labels`` under the chain, as a scalar tensor."""
    E, Tr, s, e = emissions.data, transitions.data, start.data, end.data
    L, Y = E.shape
    y = _labels(labels, L, Y)
    alpha, logz = forward_scores(E, Tr, s, e)
    nll = logz - path_score(E, Tr, s, e, y)

    def bw(g):
        beta = backward_scores(E, Tr, e)
        post = np.exp(alpha + beta - logz)
        gold = np.zeros_like(E)
        gold[np.arange(L), y] = 1.0
        dE = post - gold
        dT = np.zeros_like(Tr)
        if L > 1:
            pair = alpha[:-1, :, None] + Tr[None] + (E[1:] + beta[1:])[:, None, :] - logz
            dT = np.exp(pair).sum(axis=0)
            np.add.at(dT, (y[:-1], y[1:]), -1.0)
        ds = post[0] - gold[0]
        de = post[-1] - gold[-1]
        return g * dE, g * dT, g * ds, g * de

    return _result("crf_nll", np.asarray(nll, dtype=E.dtype), (emissions, transitions, start, end), bw)
