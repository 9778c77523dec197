"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from dialogact import crf, layers  # noqa: F401  (registers fused ops)
from dialogact.tensor import (
    REGISTERED_OPS,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    constant,
    matmul,
    max_axis,
    mul,
    no_tape,
    reshape,
    scale,
    sigmoid,
    softmax_rows,
    sub,
    take_rows,
    tanh,
    transpose,
    tsum,
)


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-6

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = float(np.linalg.norm(analytic - numeric))
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    return diff / denom if denom > 1e-10 else diff


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               tol: float = 1e-6, analytic: dict | None = None) -> GradCheckReport:
    """Compare tape gradients of the scalar ``f()`` against central differences.

    ``analytic`` overrides the tape gradients (keyed by parameter position),
    which is how a corrupted rule is fed in as a negative control.
    """
    with Tape():
        loss = f()
        grads = backward(loss)
        tape_grads = [grads.of(p).copy() for p in params]
    if analytic:
        for i, g in analytic.items():
            tape_grads[i] = g
    report = GradCheckReport(tol=tol)
    with no_tape():
        for i, p in enumerate(params):
            num = np.zeros_like(p.data)
            flat, nflat = p.data.reshape(-1), num.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                fp = f().item()
                flat[j] = orig - eps
                fm = f().item()
                flat[j] = orig
                nflat[j] = (fp - fm) / (2 * eps)
            key = p.name or f"param{i}"
            report.errors[key] = relative_error(tape_grads[i], num)
    return report


def _param(rng, *shape, name=None):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


def op_probes(seed: int) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """One small scalar-valued test function per registered op."""
    rng = np.random.default_rng(seed)
    P = lambda *s: _param(rng, *s)  # noqa: E731
    W = lambda t: constant(rng.normal(size=t))  # noqa: E731

    def weighted(fn, *shape):
        w = W(shape)
        return lambda: tsum(mul(fn(), w))

    probes = {}
    a, b = P(4, 5), P(5, 3)
    probes["matmul"] = (weighted(lambda: matmul(a, b), 4, 3), [a, b])
    x, v = P(3, 4), P(4)
    probes["add"] = (weighted(lambda: add(x, v), 3, 4), [x, v])
    x2, y2 = P(3, 4), P(3, 4)
    probes["sub"] = (weighted(lambda: sub(x2, y2), 3, 4), [x2, y2])
    x3, y3 = P(3, 4), P(3, 4)
    probes["mul"] = (weighted(lambda: mul(x3, y3), 3, 4), [x3, y3])
    x4 = P(2, 3)
    probes["scale"] = (weighted(lambda: scale(x4, 1.7), 2, 3), [x4])
    x5 = P(3, 3)
    probes["tanh"] = (weighted(lambda: tanh(x5), 3, 3), [x5])
    x6 = P(3, 3)
    probes["sigmoid"] = (weighted(lambda: sigmoid(x6), 3, 3), [x6])
    x7 = P(3, 4)
    probes["softmax_rows"] = (weighted(lambda: softmax_rows(x7), 3, 4), [x7])
    c1, c2 = P(2, 3), P(2, 5)
    probes["concat"] = (weighted(lambda: concat([c1, c2], axis=1), 2, 8), [c1, c2])
    x8 = P(3, 2)
    probes["transpose"] = (weighted(lambda: transpose(x8), 2, 3), [x8])
    x9 = P(2, 6)
    probes["reshape"] = (weighted(lambda: reshape(x9, (3, 4)), 3, 4), [x9])
    tbl = P(5, 3)
    probes["take_rows"] = (weighted(lambda: take_rows(tbl, [0, 2, 2, 4]), 4, 3), [tbl])
    xm = P(2, 4, 3)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool)[:, :, None]
    probes["max_axis"] = (weighted(lambda: max_axis(xm, 1, mask=mask), 2, 3), [xm])
    xs = P(3, 3)
    probes["sum"] = (lambda: tsum(tanh(xs)), [xs])

    gx, gh0 = P(2, 3, 2), P(2, 3)
    gwx, gwh, gb = P(2, 9), P(3, 9), P(9)
    gmask = np.array([[True, True, True], [True, True, False]])
    fwd = weighted(lambda: layers.gru(gx, gh0, gwx, gwh, gb, mask=gmask), 2, 3, 3)
    bwd = weighted(lambda: layers.gru(gx, gh0, gwx, gwh, gb, mask=gmask, reverse=True), 2, 3, 3)
    probes["gru"] = (lambda: add(fwd(), bwd()), [gx, gh0, gwx, gwh, gb])

    em, tr, st, en = P(4, 3), P(3, 3), P(3), P(3)
    labels = rng.integers(0, 3, size=4)
    probes["crf_nll"] = (lambda: crf.crf_nll(em, tr, st, en, labels), [em, tr, st, en])

    missing = set(REGISTERED_OPS) - set(probes)
    assert not missing, f"no gradient probe for ops {sorted(missing)}"
    return probes


def check_ops(seeds: Sequence[int] = range(10), eps: float = 1e-5, tol: float = 1e-6) -> dict[str, GradCheckReport]:
    """Worst-case report per registered op across ``seeds``."""
    worst: dict[str, GradCheckReport] = {}
    for seed in seeds:
        for name, (f, params) in op_probes(seed).items():
            rep = grad_check(f, params, eps=eps, tol=tol)
            if name not in worst or rep.max_error > worst[name].max_error:
                worst[name] = rep
    return worst


def toy_corpus(seed: int = 0, n_conversations: int = 2, n_utterances: int = 3, n_tokens: int = 4,
               labels: Sequence[str] = ("a", "b", "c")):
    """Tiny random conversations over a six-word alphabet."""
    from dialogact.corpus import Conversation, Utterance

    rng = np.random.default_rng(seed)
    words = ["ok", "uh", "yes", "what", "is", "[laughter]"]
    convs = []
    for c in range(n_conversations):
        utts = tuple(
            Utterance("AB"[j % 2], tuple(words[i] for i in rng.integers(0, len(words), n_tokens)),
                      labels[int(rng.integers(0, len(labels)))])
            for j in range(n_utterances))
        convs.append(Conversation(f"toy{c}", utts))
    return convs


def toy_model(encoder: str = "birnn-selfattn-context", seed: int = 0, **overrides):
    """Model at toy dimensions with every parameter (CRF included) randomized."""
    from dialogact.config import ModelConfig
    from dialogact.corpus import LabelSet, build_vocab, tfidf_stats
    from dialogact.model import ConversationModel

    convs = toy_corpus(seed)
    dims = dict(word_dim=3, char_dim=2, char_filters=3, char_width=3, u=2, k=2, d_a=2, r=2, dropout=0.0)
    dims.update(overrides)
    cfg = ModelConfig(encoder=encoder, seed=seed, **dims)
    model = ConversationModel(cfg, build_vocab(convs), LabelSet(["a", "b", "c"]), tfidf=tfidf_stats(convs))
    rng = np.random.default_rng(seed + 1000)
    for t in model.params.values():
        if t.requires_grad:
            t.data[...] = rng.normal(scale=0.5, size=t.shape)
    return model, convs


def check_full_model(encoder: str = "birnn-selfattn-context", seed: int = 0, eps: float = 1e-5,
                     tol: float = 1e-4, **overrides) -> GradCheckReport:
    """End-to-end check of the summed CRF loss over the toy corpus, every parameter."""
    model, convs = toy_model(encoder, seed, **overrides)

    def f():
        total = model.loss(convs[0], mode="eval")
        for c in convs[1:]:
            total = add(total, model.loss(c, mode="eval"))
        return total

    return grad_check(f, model.trainable(), eps=eps, tol=tol)
