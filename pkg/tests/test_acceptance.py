"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The context-utility experiment (criterion 4) trains ten models and takes
several minutes.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

import oracles
from dialogact.checkpoint import load_checkpoint, save_checkpoint
from dialogact.config import ModelConfig, TrainConfig
from dialogact.corpus import LabelSet, build_vocab, generate_synthetic_corpus, overlapping_profiles
from dialogact.crf import crf_nll, viterbi
from dialogact.experiments import run_context_utility
from dialogact.gradcheck import check_full_model, check_ops, toy_corpus
from dialogact.metrics import analyze_predictions, evaluate, pearson_correlation, prev_label_entropy
from dialogact.model import ConversationModel, build_model
from dialogact.tensor import Tensor
from dialogact.training import AdamState, fit, snapshot, train_epoch


def test_autodiff_correctness(report):
    t0 = time.perf_counter()
    ops = check_ops(range(10), tol=1e-4)
    full = check_full_model("birnn-selfattn-context", seed=0, tol=1e-4)
    elapsed = time.perf_counter() - t0
    worst_op = max(ops.values(), key=lambda r: r.max_error).max_error
    ok = worst_op <= 1e-4 and full.max_error <= 1e-4 and elapsed < 60
    assert report("1 autodiff", ok, f"{len(ops)} ops max rel err {worst_op:.1e}, end-to-end {full.max_error:.1e}, "
                                    f"{elapsed:.1f}s (limits 1e-4, 60s)")


def test_crf_oracle_equivalence(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_nll = worst_mass = worst_score = 0.0
    paths_ok = True
    for _ in range(50):
        L, Y = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        E, T, s, e = oracles.random_crf(rng, L, Y, scale=1.5)
        y = [int(v) for v in rng.integers(0, Y, size=L)]
        args = (Tensor(E), Tensor(T), Tensor(s), Tensor(e))
        worst_nll = max(worst_nll, abs(crf_nll(*args, y).item() - oracles.brute_nll(E, T, s, e, y)))
        mass = sum(math.exp(-crf_nll(*args, list(p)).item()) for p in oracles.all_paths(L, Y))
        worst_mass = max(worst_mass, abs(mass - 1.0))
        path, score = viterbi(E, T, s, e)
        ref_path, ref_score = oracles.brute_viterbi(E, T, s, e)
        paths_ok &= path == ref_path
        worst_score = max(worst_score, abs(score - ref_score))
    elapsed = time.perf_counter() - t0
    ok = worst_nll <= 1e-8 and worst_mass <= 1e-8 and paths_ok and worst_score <= 1e-12 and elapsed < 30
    assert report("2 crf oracle", ok, f"nll err {worst_nll:.1e}, mass err {worst_mass:.1e}, viterbi paths "
                                      f"{'identical' if paths_ok else 'DIFFER'}, score err {worst_score:.1e}, "
                                      f"{elapsed:.1f}s")


def test_structural_reductions(report):
    convs = toy_corpus(seed=5, n_conversations=3, n_utterances=4, n_tokens=5)
    vocab, labels = build_vocab(convs), LabelSet(["a", "b", "c"])
    dims = dict(word_dim=4, char_dim=3, char_filters=4, u=3, k=4, d_a=5, r=3, dropout=0.0)
    ctx = ConversationModel(ModelConfig(encoder="birnn-selfattn-context", seed=1, **dims), vocab, labels)
    free = ConversationModel(ModelConfig(encoder="birnn-selfattn", seed=2, **dims), vocab, labels)
    rng = np.random.default_rng(3)
    for name, t in ctx.params.items():
        if t.requires_grad:
            t.data[...] = rng.normal(scale=0.5, size=t.shape)
    for name, t in free.params.items():
        t.data[...] = ctx.params[name].data
    ctx.params["attn.w_s3"].data[...] = 0.0
    diff, worst_row = 0.0, 0.0
    for conv in convs:
        a, b = ctx.forward(conv), free.forward(conv)
        diff = max(diff, float(np.abs(a.emissions.data - b.emissions.data).max()),
                   float(np.abs(a.utterances.data - b.utterances.data).max()))
        for A in a.attention + b.attention:
            worst_row = max(worst_row, float(np.abs(A.sum(axis=1) - 1.0).max()))
    ok = diff <= 1e-12 and worst_row <= 1e-9
    assert report("3 reductions", ok, f"W_s3=0 vs context-free max diff {diff:.1e} (limit 1e-12), "
                                      f"attention row-sum err {worst_row:.1e} (limit 1e-9)")


def test_context_utility(report):
    t0 = time.perf_counter()
    res = run_context_utility(range(5))
    elapsed = time.perf_counter() - t0
    for r in res.results:
        print(f"  seed {r.seed}: full {r.full:.3f}  no-context {r.no_context:.3f}  argmax {r.argmax:.3f}")
    full, g_ctx, g_arg = res.mean("full"), res.mean("gap_context"), res.mean("gap_argmax")
    ok = full >= 0.85 and g_ctx >= 0.03 and g_arg >= 0.03 and elapsed < 900
    assert report("4 context utility", ok,
                  f"full {100 * full:.1f}% (>=85), gap vs no-context {100 * g_ctx:+.1f} pts (>=3), "
                  f"gap vs argmax {100 * g_arg:+.1f} pts (>=3), {elapsed:.0f}s (<900)")


def test_overfit_sanity(report):
    labs = [f"L{i}" for i in range(6)]
    same = {f"w{j}": 1 / 20 for j in range(20)}
    splits = generate_synthetic_corpus(10, 10, np.full((6, 6), 1 / 6), {lab: same for lab in labs}, seed=0,
                                       labels=labs, mean_tokens=6)
    convs = splits.train + splits.validation + splits.test
    cfg = ModelConfig(word_dim=16, char_filters=8, u=8, k=16, d_a=8, r=2)
    model = build_model(convs, LabelSet(labs), cfg)
    state, rng = AdamState.for_params(model.trainable()), np.random.default_rng(0)
    acc, epoch = 0.0, 0
    while epoch < 300 and acc < 0.99:
        epoch += 1
        train_epoch(model, convs, TrainConfig(), state, rng)
        acc = evaluate(model, convs).accuracy
    assert report("5 overfit", acc >= 0.99, f"{len(convs)} conversations with text-independent labels: "
                                            f"train accuracy {100 * acc:.1f}% after {epoch} epochs (limit 300)")


def _small_run(tmp_path, name):
    labs = ["a", "b", "c"]
    T = [[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]]
    splits = generate_synthetic_corpus(20, 6, T, overlapping_profiles(labs), seed=11, labels=labs, mean_tokens=3)
    cfg = ModelConfig(word_dim=6, char_dim=4, char_filters=4, u=3, k=4, d_a=4, r=2, seed=7)
    model = build_model(splits.train, LabelSet(labs), cfg)
    fit(model, splits.train, splits.validation, TrainConfig(max_epochs=4, seed=7))
    path = tmp_path / name
    save_checkpoint(model, path)
    return model, splits, path


def test_determinism_and_persistence(report, tmp_path):
    m1, splits, p1 = _small_run(tmp_path, "one.ckpt")
    _, _, p2 = _small_run(tmp_path, "two.ckpt")
    same_bytes = p1.read_bytes() == p2.read_bytes()
    loaded = load_checkpoint(p1)
    same_preds = [loaded.predict(c) for c in splits.test] == [m1.predict(c) for c in splits.test]
    assert report("6 determinism", same_bytes and same_preds,
                  f"checkpoints bit-identical: {same_bytes}; reloaded test predictions identical: {same_preds}")


def test_early_stopping(report, monkeypatch):
    import dialogact.training as tr

    trace = [0.40, 0.55, 0.61, 0.61, 0.58] + [0.60, 0.61, 0.5] * 5
    calls = {"n": 0}
    snaps = []

    class Scripted:
        def __init__(self, acc):
            self.accuracy = acc

    def scripted_evaluate(model, convs, decode="crf"):
        snaps.append(snapshot(model))
        calls["n"] += 1
        return Scripted(trace[calls["n"] - 1])

    monkeypatch.setattr(tr, "evaluate", scripted_evaluate)
    convs = toy_corpus(seed=2)
    model = ConversationModel(ModelConfig(word_dim=3, char_dim=2, char_filters=3, u=2, k=2, d_a=2, r=2),
                              build_vocab(convs), LabelSet(["a", "b", "c"]))
    res = fit(model, convs, convs, TrainConfig(max_epochs=100, patience=15))
    best = int(np.argmax(trace)) + 1
    restored = all(np.array_equal(model.params[n].data, snaps[best - 1][n]) for n in model.params)
    ok = res.stopped_early and len(res.history) == best + 15 and res.best_epoch == best and restored
    assert report("7 early stopping", ok, f"best epoch {res.best_epoch}, stopped after {len(res.history)} "
                                          f"(expected {best + 15}), best parameters restored: {restored}")


def test_analysis_oracle(report):
    from dialogact.corpus import Conversation, Utterance

    def conv(cid, labels):
        return Conversation(cid, tuple(Utterance("A", ("w",), lab) for lab in labels))

    fixture = [conv("c1", "ABAB"), conv("c2", "BAC"), conv("c3", "CB")]
    e_b = (math.log2(3) - 2 / 3) / math.log2(3)
    errs = [abs(prev_label_entropy(fixture, "B", 3) - e_b), abs(prev_label_entropy(fixture, "A", 3)),
            abs(prev_label_entropy(fixture, "C", 3))]
    x, y = [0.0, e_b, 0.0], [1.0, 0.5, 0.5]
    mx, my = sum(x) / 3, sum(y) / 3
    ref_r = sum((a - mx) * (b - my) for a, b in zip(x, y)) / math.sqrt(
        sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    errs.append(abs(pearson_correlation(x, y) - ref_r))
    errs.append(abs(analyze_predictions(fixture, [list("ABAA"), list("AAB"), list("CB")],
                                        LabelSet("ABC")).correlation - ref_r))

    labs = [f"L{i}" for i in range(6)]
    splits = generate_synthetic_corpus(200, 20, oracles.entropy_spread_chain(6), overlapping_profiles(labs),
                                       seed=4, labels=labs, mean_tokens=2)
    convs = splits.train
    ent = {lab: prev_label_entropy(convs, lab, 6) for lab in labs}
    preds = oracles.entropy_noise_predictions(convs, labs, ent, seed=1)
    r = analyze_predictions(convs, preds, LabelSet(labs)).correlation
    ok = max(errs) <= 1e-12 and r < 0
    assert report("8 analysis", ok, f"fixture max err {max(errs):.1e} (limit 1e-12), "
                                    f"entropy-correlated noise r = {r:.3f} (< 0)")
