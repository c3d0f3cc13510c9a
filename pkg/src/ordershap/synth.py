"""Synthetic task datasets, correlation evaluation, and text transforms."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, UndefinedCorrelationError
from .models import RuleModel, task_rule_model


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    """Generation recipe for one binary sequence-classification task."""

    task: str = "task1"
    vocab_size: int = 200
    length: int = 8
    count: int = 10000
    test_fraction: float = 0.01
    positive_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < self.length:
            raise ConfigurationError(
                "vocab_size must be >= length so duplicate-free negatives exist"
            )
        if self.count < 2:
            raise ConfigurationError("count must be >= 2")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("test_fraction must lie in (0, 1)")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ConfigurationError("positive_fraction must lie in (0, 1)")

    @property
    def model(self) -> RuleModel:
        return task_rule_model(self.task)


@dataclass(frozen=True)
class LabeledDataset:
    sequences: tuple    # tuple of int tuples
    labels: tuple       # 0/1 per sequence
    spec: SyntheticDatasetSpec

    def split(self):
        """(train, test) views honoring the spec's test fraction."""
        test_count = max(1, round(len(self.sequences) * self.spec.test_fraction))
        cut = len(self.sequences) - test_count
        train = LabeledDataset(self.sequences[:cut], self.labels[:cut], self.spec)
        test = LabeledDataset(self.sequences[cut:], self.labels[cut:], self.spec)
        return train, test


def _positive_sample(task: str, k: int, vocab: int, rng) -> tuple:
    """Construct a sequence satisfying the task rule directly."""
    seq = rng.integers(0, vocab, size=k)
    if task == "task1":
        seq[1] = seq[0]
    elif task == "task2":
        j = int(rng.integers(0, k - 1))
        seq[j + 1] = seq[j]
    else:
        a, b = rng.choice(k, size=2, replace=False)
        seq[b] = seq[a]
    return tuple(int(t) for t in seq)


def _negative_sample(task: str, k: int, vocab: int, rng, model: RuleModel) -> tuple:
    # rejection against the rule; a distinct-symbol draw always terminates task3
    for _ in range(1000):
        if task == "task3":
            seq = tuple(int(t) for t in rng.choice(vocab, size=k, replace=False))
        else:
            seq = tuple(int(t) for t in rng.integers(0, vocab, size=k))
        if model.label(seq) == 0:
            return seq
    raise ConfigurationError(f"could not sample a negative for {task} after 1000 tries")


def generate_dataset(spec: SyntheticDatasetSpec) -> LabeledDataset:
    """Label-balanced dataset, deterministic per seed, positives built directly."""
    model = spec.model
    task = f"task{spec.task}" if str(spec.task) in ("1", "2", "3") else str(spec.task)
    num_pos = round(spec.count * spec.positive_fraction)
    num_neg = spec.count - num_pos
    if num_pos == 0 or num_neg == 0:
        raise ConfigurationError("requested balance leaves one class empty")
    sequences = []
    labels = []
    for record in range(spec.count):
        rng = np.random.default_rng([spec.seed, record])
        if record < num_pos:
            seq = _positive_sample(task, spec.length, spec.vocab_size, rng)
            if model.label(seq) != 1:
                raise DataError(f"constructed positive violates the {task} rule: {seq}")
            sequences.append(seq)
            labels.append(1)
        else:
            sequences.append(_negative_sample(task, spec.length, spec.vocab_size, rng, model))
            labels.append(0)
    # deterministic shuffle so splits stay balanced
    order = np.random.default_rng([spec.seed, spec.count, 1]).permutation(spec.count)
    sequences = tuple(sequences[i] for i in order)
    labels = tuple(labels[i] for i in order)
    return LabeledDataset(sequences, labels, spec)


def write_dataset(dataset: LabeledDataset, path) -> None:
    """One record per line: label TAB space-separated token ids."""
    with open(path, "w", encoding="utf-8") as handle:
        for seq, label in zip(dataset.sequences, dataset.labels):
            handle.write(f"{label}\t{' '.join(str(t) for t in seq)}\n")


def read_dataset(path) -> list[tuple[int, tuple]]:
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            label, _, toks = line.partition("\t")
            out.append((int(label), tuple(toks.split())))
    return out


TASK1 = task_rule_model("task1")


def select_w1(dataset: LabeledDataset, count: int = 1000) -> tuple:
    """Sequences satisfying the Task-1 rule (begins with a duplicate)."""
    hits = [s for s in dataset.sequences if TASK1.label(s) == 1]
    if len(hits) < count:
        raise DataError(
            f"need {count} Task-1 positives but only {len(hits)} available "
            f"(short by {count - len(hits)})"
        )
    return tuple(hits[:count])


@dataclass(frozen=True)
class GroundTruth:
    """0/1 indicator weights per occurrence and order feature."""

    occurrence_truth: tuple
    order_truth: tuple
    task: str
    mode: str = "absolute"

    @classmethod
    def for_task(cls, task, length: int, mode: str = "absolute") -> "GroundTruth":
        """Expected attribution pattern for Task-1-positive evaluation sequences.

        The leading duplicate pair carries the occurrence signal for every
        task; tasks 1 and 2 also depend on the pair's ordering, task 3 is
        order-free.
        """
        key = f"task{task}" if str(task) in ("1", "2", "3") else str(task)
        occ = [0.0] * length
        occ[0] = occ[1] = 1.0
        order = [0.0] * length
        if key in ("task1", "task2"):
            order[0] = order[1] = 1.0
        return cls(tuple(occ), tuple(order), key, mode)

    def vector(self) -> np.ndarray:
        return np.array(self.occurrence_truth + self.order_truth)


def pearson(explanation, truth: GroundTruth, scope: str = "all_2n") -> float:
    """Pearson correlation between an attribution report and the ground truth.

    ``all_2n`` correlates all 2n entries (missing order values of a plain-SV
    report are zeros by construction), ``occurrence_only`` just the n
    occurrence entries.
    """
    if scope not in ("all_2n", "occurrence_only"):
        raise ConfigurationError(f"unknown scope {scope!r}")
    if hasattr(explanation, "values") and callable(explanation.values):
        values = np.asarray(explanation.values(), dtype=np.float64)
    else:
        values = np.asarray(explanation, dtype=np.float64)
    target = truth.vector()
    if len(values) != len(target):
        raise DataError(f"explanation has {len(values)} entries, truth has {len(target)}")
    n = len(target) // 2
    if scope == "occurrence_only":
        values, target = values[:n], target[:n]
    if np.ptp(values) == 0.0 or np.ptp(target) == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance vector")
    return float(np.corrcoef(values, target)[0, 1])


# --- adversarial text transforms -------------------------------------------

NEGATION_PHRASES = (
    "not as expected",
    "not like the other",
    "not gonna lie",
    "never gonna lie",
    "never as expected",
)

PREPEND_SYMBOLS = tuple('!"#&\'*+,-./:<=>?@^_|~;') + ("<unk>",)

APPEND_POSITIONS = ("end", "end_with_comma", "begin")

_TERMINAL = re.compile(r"([.!?]+)\s*$")


def transform_hans_star(premise: str, hypothesis: str) -> tuple[str, str]:
    """Duplicate the premise into the hypothesis slot (label becomes entailment)."""
    if not premise.strip():
        raise DataError("premise must be non-empty")
    return premise, premise


def transform_append_phrase(sentence: str, phrase_id: int,
                            position: str = "end") -> str:
    """Insert one of the fixed negation-bearing neutral phrases.

    ``end`` keeps any terminal punctuation at the true end, ``end_with_comma``
    separates the phrase with ", ", ``begin`` prepends the phrase untouched.
    """
    if not 0 <= int(phrase_id) < len(NEGATION_PHRASES):
        raise ConfigurationError(
            f"phrase_id must index the fixed {len(NEGATION_PHRASES)}-phrase list"
        )
    if position not in APPEND_POSITIONS:
        raise ConfigurationError(f"position must be one of {APPEND_POSITIONS}")
    phrase = NEGATION_PHRASES[int(phrase_id)]
    if position == "begin":
        return f"{phrase} {sentence}"
    match = _TERMINAL.search(sentence)
    body = sentence[: match.start()] if match else sentence
    tail = match.group(1) if match else ""
    sep = ", " if position == "end_with_comma" else " "
    return f"{body}{sep}{phrase}{tail}"


def transform_prepend_symbol(sentence: str, symbol: str) -> str:
    """Prepend one allowed punctuation symbol (or <unk>) plus a space."""
    if symbol not in PREPEND_SYMBOLS:
        raise ConfigurationError(f"symbol {symbol!r} is outside the fixed symbol list")
    return f"{symbol} {sentence}"
