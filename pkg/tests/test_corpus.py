import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialogact.corpus import (
    PAD,
    UNK,
    UNK_LABEL,
    Conversation,
    CorpusSplits,
    LabelSet,
    Utterance,
    build_vocab,
    consecutive_label_mutual_information,
    generate_synthetic_corpus,
    load_corpus,
    load_external_vectors,
    load_pretrained_word_vectors,
    overlapping_profiles,
    save_corpus,
    tfidf_stats,
    tokenize,
    transition_counts,
)
from dialogact.errors import ContractError, FormatError


def conv(cid, *utts):
    return Conversation(cid, tuple(Utterance("A", tuple(t.split()), lab) for t, lab in utts))


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def record(cid, split=None, *utts):
    rec = {"id": cid, "utterances": [{"speaker": "A", "text": t, "label": lab} for t, lab in utts]}
    if split:
        rec["split"] = split
    return rec


def test_tokenize_lowercases_and_keeps_bracketed_markers():
    assert tokenize("Okay [Throat Clearing] so") == ["okay", "[throat clearing]", "so"]
    assert tokenize("Hi There", lowercase=False) == ["Hi", "There"]


def test_minimal_file(tmp_path):
    f = write_jsonl(tmp_path / "c.jsonl", [record("c1", None, ("hello there", "A"), ("yes", "B"))])
    splits, labels = load_corpus(f)
    assert len(labels) == 2
    assert len(splits.train) == 1 and splits.train[0].utterances[0].tokens == ("hello", "there")


def test_malformed_line_names_line_number(tmp_path):
    f = tmp_path / "c.jsonl"
    f.write_text(json.dumps(record("c1", None, ("hi", "A"))) + "\n{not json\n")
    with pytest.raises(FormatError, match=r"c\.jsonl:2"):
        load_corpus(f)


def test_empty_utterance_rejected(tmp_path):
    f = write_jsonl(tmp_path / "c.jsonl", [record("c1", None, ("   ", "A"))])
    with pytest.raises(FormatError):
        load_corpus(f)


def test_directory_layout_and_unknown_label_policies(tmp_path):
    write_jsonl(tmp_path / "train.jsonl", [record("t", None, ("a b", "X"), ("c", "Y"))])
    write_jsonl(tmp_path / "test.jsonl", [record("s", None, ("a", "X"), ("d", "Z"))])
    splits, labels = load_corpus(tmp_path)
    assert labels.labels == ["X", "Y", UNK_LABEL]
    assert splits.test[0].labels == ["X", UNK_LABEL]
    splits, labels = load_corpus(tmp_path, unknown_label_policy="drop")
    assert labels.labels == ["X", "Y"] and splits.test[0].labels == ["X"]
    with pytest.raises(FormatError):
        load_corpus(tmp_path, unknown_label_policy="error")


def test_overlapping_splits_rejected():
    c = conv("same", ("a", "X"))
    with pytest.raises(ContractError):
        CorpusSplits([c], [], [c])


def test_build_vocab_threshold_and_determinism():
    train = [conv("c", ("a a b", "X"))]
    assert build_vocab(train, min_count=2).words == [PAD, UNK, "a"]
    assert build_vocab(train, min_count=1).words == [PAD, UNK, "a", "b"]
    v1, v2 = build_vocab(train), build_vocab(train)
    assert v1.words == v2.words and v1.chars == v2.chars
    assert v1.word_id("zzz") == 1


def test_speaker_pseudo_token_is_opt_in():
    train = [conv("c", ("a", "X"))]
    assert "<spk:A>" not in build_vocab(train).words
    assert "<spk:A>" in build_vocab(train, speaker_token=True).words


def test_pretrained_vectors(tmp_path):
    vocab = build_vocab([conv("c", ("cat dog", "X"))])
    f = tmp_path / "v.txt"
    f.write_text("cat 1 2 3\ndog 4 5 6\n")
    table, cov = load_pretrained_word_vectors(f, vocab)
    assert cov == 1.0
    np.testing.assert_array_equal(table[vocab.word_id("dog")], [4, 5, 6])
    np.testing.assert_array_equal(table[0], 0.0)

    f.write_text("emu 1 2 3\n")
    table, cov = load_pretrained_word_vectors(f, vocab, seed=3)
    assert cov == 0.0
    rows = table[2:]
    assert np.all(np.abs(rows) <= 0.25) and np.any(rows != 0)


def test_pretrained_vectors_wrong_arity(tmp_path):
    vocab = build_vocab([conv("c", ("cat", "X"))])
    f = tmp_path / "v.txt"
    f.write_text("cat 1 2 3\ndog 4 5\n")
    with pytest.raises(FormatError, match=r"v\.txt:2"):
        load_pretrained_word_vectors(f, vocab)


def test_external_vectors(tmp_path):
    f = tmp_path / "x.txt"
    f.write_text("c1:0:1 0.5 0.25\n")
    vecs, dim = load_external_vectors(f)
    assert dim == 2 and list(vecs[("c1", 0, 1)]) == [0.5, 0.25]


def test_synthetic_identity_chain_repeats_label():
    labs = ["a", "b", "c"]
    splits = generate_synthetic_corpus(20, 6, np.eye(3), overlapping_profiles(labs), seed=1, labels=labs)
    for c in splits.train + splits.validation + splits.test:
        assert len(set(c.labels)) == 1


def test_synthetic_uniform_chain_counts_within_three_standard_errors():
    labs = ["a", "b"]
    splits = generate_synthetic_corpus(500, 21, np.full((2, 2), 0.5), overlapping_profiles(labs), seed=2,
                                       labels=labs, mean_tokens=2)
    convs = splits.train + splits.validation + splits.test
    counts = transition_counts(convs, LabelSet(labs))
    assert sum(len(c) for c in convs) >= 10_000
    for row in counts:
        n = row.sum()
        assert abs(row[0] / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_synthetic_is_deterministic_and_split_80_10_10():
    labs = ["a", "b"]
    T = [[0.9, 0.1], [0.2, 0.8]]
    a = generate_synthetic_corpus(50, 5, T, overlapping_profiles(labs), seed=7, labels=labs)
    b = generate_synthetic_corpus(50, 5, T, overlapping_profiles(labs), seed=7, labels=labs)
    assert a == b
    assert (len(a.train), len(a.validation), len(a.test)) == (40, 5, 5)


def test_synthetic_rejects_bad_matrix():
    labs = ["a", "b"]
    with pytest.raises(ContractError):
        generate_synthetic_corpus(5, 3, [[0.5, 0.6], [0.5, 0.5]], overlapping_profiles(labs), seed=0, labels=labs)
    with pytest.raises(ContractError):
        generate_synthetic_corpus(5, 3, [[1.0]], overlapping_profiles(labs), seed=0, labels=labs)


def test_synthetic_nonuniform_chain_has_positive_mutual_information():
    labs = ["a", "b", "c"]
    T = [[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]]
    splits = generate_synthetic_corpus(500, 21, T, overlapping_profiles(labs), seed=3, labels=labs, mean_tokens=2)
    convs = splits.train + splits.validation + splits.test
    assert sum(len(c) for c in convs) >= 10_000
    assert consecutive_label_mutual_information(convs, LabelSet(labs)) > 0


def test_tfidf_values():
    train = [conv("c", ("x a", "A"), ("x b", "A"), ("x b", "A"))]
    tf = tfidf_stats(train)
    assert tf.weight("x") == pytest.approx(1.0, abs=1e-15)
    assert tf.weight("a") == pytest.approx(math.log(4 / 2) + 1, abs=1e-15)
    assert tf.weight("never-seen") == max(tf.idf.values()) == tf.weight("a")
    assert tf.tf(("x", "x", "a"))["x"] == 2


words = st.text(alphabet="abcdefgh", min_size=1, max_size=5)
utterances = st.tuples(st.lists(words, min_size=1, max_size=4), st.sampled_from(["P", "Q", "R"]))
conversations = st.lists(st.lists(utterances, min_size=1, max_size=4), min_size=1, max_size=5)


@settings(max_examples=25, deadline=None)
@given(conversations)
def test_save_load_round_trip(tmp_path_factory, data):
    convs = [Conversation(f"c{i}", tuple(Utterance("A", tuple(ws), lab) for ws, lab in utts))
             for i, utts in enumerate(data)]
    splits = CorpusSplits(convs[:-1] or convs, convs[-1:] if len(convs) > 1 else [], [])
    path = tmp_path_factory.mktemp("rt") / "c.jsonl"
    save_corpus(splits, path)
    loaded, _ = load_corpus(path, labels=LabelSet(["P", "Q", "R"]))
    for name in ("train", "validation", "test"):
        assert [(c.id, [u.tokens for u in c.utterances], c.labels) for c in loaded.split(name)] == \
               [(c.id, [u.tokens for u in c.utterances], c.labels) for c in splits.split(name)]
