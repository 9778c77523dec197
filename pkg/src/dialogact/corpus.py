"""Conversations, label/word inventories, file formats and synthetic data.

Corpus files are JSON lines, one conversation per line::

    {"id": "c1", "split": "train",
     "utterances": [{"speaker": "A", "text": "okay .", "label": "other"}, ...]}

``split`` is optional (missing means train). A directory holding
``train.jsonl``, ``validation.jsonl`` and ``test.jsonl`` is also accepted.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from dialogact.errors import ContractError, FormatError

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
UNK_LABEL = "<unk>"
SPLITS = ("train", "validation", "test")

# bracketed nonverbal markers such as "[Throat Clearing]" stay one token
_TOKEN_RE = re.compile(r"\[[^\]]*\]|\S+")


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    if lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class Utterance:
    speaker: str
    tokens: tuple[str, ...]
    label: str

    def __post_init__(self):
        if not self.tokens:
            raise ContractError("utterance has no tokens")


@dataclass(frozen=True)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        if not self.utterances:
            raise ContractError(f"conversation {self.id!r} has no utterances")

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def labels(self) -> list[str]:
        return [u.label for u in self.utterances]


class LabelSet:
    """Ordered label inventory with a label -> ordinal index."""

    def __init__(self, labels: Iterable[str]):
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ContractError("duplicate labels in label set")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSet) and self.labels == other.labels

    def encode(self, labels: Sequence[str]) -> list[int]:
        try:
            return [self.index[lab] for lab in labels]
        except KeyError as exc:
            raise ContractError(f"label {exc.args[0]!r} not in label set") from None

    def decode(self, ordinals: Sequence[int]) -> list[str]:
        return [self.labels[i] for i in ordinals]

    @classmethod
    def from_conversations(cls, convs: Iterable[Conversation]) -> "LabelSet":
        seen: dict[str, None] = {}
        for c in convs:
            for u in c.utterances:
                seen.setdefault(u.label, None)
        return cls(sorted(seen))


@dataclass
class Vocabulary:
    words: list[str]
    chars: list[str]

    def __post_init__(self):
        self.word_index = {w: i for i, w in enumerate(self.words)}
        self.char_index = {c: i for i, c in enumerate(self.chars)}
        for table in (self.words, self.chars):
            if table[:2] != [PAD, UNK]:
                raise ContractError("vocabulary must start with PAD and UNK")

    def __len__(self) -> int:
        return len(self.words)

    def word_id(self, word: str) -> int:
        return self.word_index.get(word, 1)

    def char_ids(self, word: str) -> list[int]:
        return [self.char_index.get(ch, 1) for ch in word]


@dataclass
class CorpusSplits:
    train: list[Conversation] = field(default_factory=list)
    validation: list[Conversation] = field(default_factory=list)
    test: list[Conversation] = field(default_factory=list)

    def __post_init__(self):
        seen: dict[str, str] = {}
        for name in SPLITS:
            for c in getattr(self, name):
                if seen.get(c.id, name) != name:
                    raise ContractError(f"conversation {c.id!r} appears in {seen[c.id]} and {name}")
                seen[c.id] = name

    def split(self, name: str) -> list[Conversation]:
        if name not in SPLITS:
            raise ContractError(f"unknown split {name!r}")
        return getattr(self, name)

    def stats(self) -> dict:
        out = {}
        for name in SPLITS:
            convs = self.split(name)
            out[name] = {"conversations": len(convs), "utterances": sum(len(c) for c in convs)}
        return out


# -- reading and writing -----------------------------------------------------


def _parse_record(line: str, where: str, lowercase: bool) -> tuple[Conversation, str | None]:
    try:
        rec = json.loads(line)
        cid = str(rec["id"])
        utts = []
        for j, u in enumerate(rec["utterances"]):
            tokens = tokenize(u["text"], lowercase)
            if not tokens:
                raise FormatError(f"{where}: utterance {j} is empty")
            utts.append(Utterance(str(u.get("speaker", "")), tuple(tokens), str(u["label"])))
        return Conversation(cid, tuple(utts)), rec.get("split")
    except (json.JSONDecodeError, KeyError, TypeError, ContractError) as exc:
        raise FormatError(f"{where}: malformed record ({exc.__class__.__name__}: {exc})") from None


def read_conversations(path: str | Path, lowercase: bool = True) -> list[tuple[Conversation, str | None]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                out.append(_parse_record(line, f"{path}:{lineno}", lowercase))
    return out


def _apply_label_policy(convs: list[Conversation], labels: LabelSet, policy: str, split: str) -> list[Conversation]:
    out = []
    for c in convs:
        utts = []
        for u in c.utterances:
            if u.label in labels:
                utts.append(u)
                continue
            if policy == "error":
                raise FormatError(f"{split} conversation {c.id!r}: label {u.label!r} not seen in train")
            log.warning("%s conversation %s: unseen label %r (%s)", split, c.id, u.label, policy)
            if policy == "unk":
                utts.append(Utterance(u.speaker, u.tokens, UNK_LABEL))
        if utts:
            out.append(Conversation(c.id, tuple(utts)))
    return out


def load_corpus(path: str | Path, format: str = "jsonl", lowercase: bool = True,
                unknown_label_policy: str = "unk", labels: LabelSet | None = None
                ) -> tuple[CorpusSplits, LabelSet]:
    """Load splits and the label inventory (taken from train unless given).

    Labels in validation/test that the inventory lacks are handled by
    ``unknown_label_policy``: ``"unk"`` maps them to a reserved label,
    ``"drop"`` removes the utterance, ``"error"`` raises.
    """
    if format != "jsonl":
        raise FormatError(f"unsupported corpus format {format!r}")
    path = Path(path)
    parts: dict[str, list[Conversation]] = {s: [] for s in SPLITS}
    if path.is_dir():
        for s in SPLITS:
            f = path / f"{s}.jsonl"
            if f.exists():
                parts[s] = [c for c, _ in read_conversations(f, lowercase)]
    else:
        for c, s in read_conversations(path, lowercase):
            s = s or "train"
            if s not in parts:
                raise FormatError(f"{path}: conversation {c.id!r} has unknown split {s!r}")
            parts[s].append(c)
    if labels is None:
        labels = LabelSet.from_conversations(parts["train"] or parts["validation"] + parts["test"])
    needs_unk = False
    for s in SPLITS:
        if any(u.label not in labels for c in parts[s] for u in c.utterances):
            needs_unk = needs_unk or unknown_label_policy == "unk"
    if needs_unk and UNK_LABEL not in labels:
        labels = LabelSet(labels.labels + [UNK_LABEL])
    for s in SPLITS:
        parts[s] = _apply_label_policy(parts[s], labels, unknown_label_policy, s)
    splits = CorpusSplits(**parts)
    log.info("loaded %s: %d labels, %s", path, len(labels), splits.stats())
    return splits, labels


def conversation_record(c: Conversation, split: str | None = None, predicted: Sequence[str] | None = None) -> dict:
    rec: dict = {"id": c.id}
    if split is not None:
        rec["split"] = split
    utts = []
    for j, u in enumerate(c.utterances):
        d = {"speaker": u.speaker, "text": " ".join(u.tokens), "label": u.label}
        if predicted is not None:
            d["predicted"] = predicted[j]
        utts.append(d)
    rec["utterances"] = utts
    return rec


def save_corpus(splits: CorpusSplits, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in SPLITS:
            for c in splits.split(s):
                fh.write(json.dumps(conversation_record(c, s)) + "\n")


# -- vocabularies and vectors ------------------------------------------------


def speaker_pseudo_token(speaker: str) -> str:
    return f"<spk:{speaker}>"


def model_tokens(u: Utterance, speaker_token: bool = False) -> tuple[str, ...]:
    return ((speaker_pseudo_token(u.speaker),) + u.tokens) if speaker_token else u.tokens


def build_vocab(train: Sequence[Conversation], min_count: int = 1, speaker_token: bool = False) -> Vocabulary:
    """Words seen at least ``min_count`` times, most frequent first (ties
    alphabetical); every observed character."""
    if min_count < 1:
        raise ContractError("min_count must be at least 1")
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for c in train:
        for u in c.utterances:
            toks = model_tokens(u, speaker_token)
            counts.update(toks)
            for t in toks:
                chars.update(t)
    kept = sorted((w for w, n in counts.items() if n >= min_count), key=lambda w: (-counts[w], w))
    return Vocabulary([PAD, UNK] + kept, [PAD, UNK] + sorted(chars))


def _read_vector_lines(path: str | Path):
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric vector entry") from None
            if dim is None:
                dim = len(vec)
            if len(vec) != dim or dim == 0:
                raise FormatError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            yield parts[0], vec


def load_pretrained_word_vectors(path: str | Path, vocab: Vocabulary, dim: int | None = None,
                                 seed: int = 0) -> tuple[np.ndarray, float]:
    """Embedding table for ``vocab`` plus the fraction of words found in the file.

    Words missing from the file are drawn uniformly from [-0.25, 0.25]; the
    PAD row is zero.
    """
    found: dict[str, np.ndarray] = {}
    file_dim = None
    for word, vec in _read_vector_lines(path):
        file_dim = len(vec)
        if word in vocab.word_index:
            found[word] = vec
    dim = dim or file_dim
    if dim is None:
        raise FormatError(f"{path}: no vectors and no dimension given")
    if file_dim is not None and file_dim != dim:
        raise FormatError(f"{path}: vectors have dimension {file_dim}, expected {dim}")
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    table[0] = 0.0
    for w, vec in found.items():
        table[vocab.word_index[w]] = vec
    real = vocab.words[2:]
    coverage = sum(w in found for w in real) / len(real) if real else 0.0
    return table, coverage


def load_external_vectors(path: str | Path) -> tuple[dict[tuple[str, int, int], np.ndarray], int]:
    """Per-token vectors keyed by ``conversationId:utteranceIndex:tokenIndex``."""
    out: dict[tuple[str, int, int], np.ndarray] = {}
    dim = 0
    for key, vec in _read_vector_lines(path):
        try:
            cid, ui, ti = key.rsplit(":", 2)
            out[(cid, int(ui), int(ti))] = vec
        except ValueError:
            raise FormatError(f"{path}: bad token key {key!r}") from None
        dim = len(vec)
    return out, dim


# -- TF-IDF ------------------------------------------------------------------


@dataclass
class TfIdf:
    idf: dict[str, float]
    unk_idf: float

    def weight(self, word: str) -> float:
        return self.idf.get(word, self.unk_idf)

    @staticmethod
    def tf(tokens: Sequence[str]) -> Counter:
        return Counter(tokens)


def tfidf_stats(train: Sequence[Conversation]) -> TfIdf:
    """Smoothed idf over utterances: ``ln((1 + N) / (1 + df)) + 1``.

    Unseen words get the largest observed idf.
    """
    df: Counter[str] = Counter()
    n = 0
    for c in train:
        for u in c.utterances:
            n += 1
            df.update(set(u.tokens))
    if n == 0:
        raise ContractError("tf-idf needs a non-empty training split")
    idf = {w: math.log((1 + n) / (1 + d)) + 1.0 for w, d in df.items()}
    return TfIdf(idf, max(idf.values()))


# -- synthetic corpora -------------------------------------------------------


def check_stochastic(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ContractError(f"transition matrix must be square, got shape {m.shape}")
    if (m < 0).any() or np.abs(m.sum(axis=1) - 1.0).max() > 1e-9:
        raise ContractError("transition matrix rows must be nonnegative and sum to 1")
    return m


def overlapping_profiles(labels: Sequence[str], own_words: int = 4, shared_words: int = 4,
                         own_mass: float = 0.5, neighbor_mass: float = 0.0) -> dict[str, dict[str, float]]:
    """Word distributions where each label mixes its own words, a pool shared
    by all labels, and optionally the next label's own words (cyclically)."""
    shared = [f"s{j}" for j in range(shared_words)]
    own = {lab: [f"{lab}_{j}" for j in range(own_words)] for lab in labels}
    profiles = {}
    for i, lab in enumerate(labels):
        nxt = labels[(i + 1) % len(labels)]
        p: dict[str, float] = Counter()
        for w in own[lab]:
            p[w] += own_mass / own_words
        if neighbor_mass:
            for w in own[nxt]:
                p[w] += neighbor_mass / own_words
        rest = 1.0 - own_mass - neighbor_mass
        if shared_words:
            for w in shared:
                p[w] += rest / shared_words
        profiles[lab] = dict(p)
    return profiles


def generate_synthetic_corpus(n_conversations: int, mean_length: float, label_transition,
                              label_vocab_profiles: Mapping[str, Mapping[str, float]], seed: int,
                              labels: Sequence[str] | None = None, mean_tokens: float = 6.0,
                              initial=None) -> CorpusSplits:
    """Conversations whose labels follow a Markov chain.

    Conversation lengths are ``1 + Poisson(mean_length - 1)``; each utterance
    has ``1 + Poisson(mean_tokens - 1)`` words drawn i.i.d. from its label's
    profile. The first label is drawn from ``initial`` (uniform by default).
    Conversations are split 80/10/10 in generation order.
    """
    T = check_stochastic(label_transition)
    labels = list(labels) if labels is not None else list(label_vocab_profiles)
    if len(labels) != T.shape[0]:
        raise ContractError(f"{len(labels)} labels for a {T.shape[0]}-state chain")
    profiles = []
    for lab in labels:
        prof = label_vocab_profiles.get(lab)
        if not prof:
            raise ContractError(f"no word profile for label {lab!r}")
        words = list(prof)
        p = np.array([prof[w] for w in words], dtype=float)
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ContractError(f"word profile of {lab!r} is not a distribution")
        profiles.append((words, p))
    init = np.full(len(labels), 1.0 / len(labels)) if initial is None else np.asarray(initial, dtype=float)
    rng = np.random.default_rng(seed)
    convs = []
    for n in range(n_conversations):
        length = 1 + int(rng.poisson(max(mean_length - 1.0, 0.0)))
        y = int(rng.choice(len(labels), p=init))
        utts = []
        for _ in range(length):
            words, p = profiles[y]
            ntok = 1 + int(rng.poisson(max(mean_tokens - 1.0, 0.0)))
            toks = tuple(words[i] for i in rng.choice(len(words), size=ntok, p=p))
            utts.append(Utterance("AB"[int(rng.integers(2))], toks, labels[y]))
            y = int(rng.choice(len(labels), p=T[y]))
        convs.append(Conversation(f"synth-{seed}-{n:05d}", tuple(utts)))
    n_train = int(round(0.8 * n_conversations))
    n_val = int(round(0.1 * n_conversations))
    return CorpusSplits(convs[:n_train], convs[n_train:n_train + n_val], convs[n_train + n_val:])


def transition_counts(convs: Iterable[Conversation], labels: LabelSet) -> np.ndarray:
    counts = np.zeros((len(labels), len(labels)))
    for c in convs:
        ys = labels.encode(c.labels)
        for a, b in zip(ys, ys[1:]):
            counts[a, b] += 1
    return counts


def consecutive_label_mutual_information(convs: Iterable[Conversation], labels: LabelSet) -> float:
    """Plug-in estimate (nats) of I(y_i; y_{i+1}) over adjacent label pairs."""
    joint = transition_counts(convs, labels)
    total = joint.sum()
    if total == 0:
        return 0.0
    joint /= total
    pa, pb = joint.sum(axis=1, keepdims=True), joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])).sum())
