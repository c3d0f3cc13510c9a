"""Deterministic rule-based sequence classifiers used as ground-truth models.

Each model emits a 2-class probability vector (p_0, p_1) with p_0 + p_1 = 1;
a hard decision for class 1 maps to (eps, 1 - eps) and for class 0 to
(1 - eps, eps), where eps is the smoothing margin (0 by default).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .validation import as_token_tuple, check_probability

RULES = (
    "begins_with_duplicate",
    "adjacent_duplicate",
    "any_duplicate",
    "bag_of_words",
    "constant",
    "exact_sequence",
)


@dataclass(frozen=True)
class RuleModel:
    """2-class classifier driven by a token-pattern rule."""

    rule: str
    target_tokens: tuple = ()
    constant_class: int = 1
    reference: tuple = ()
    smoothing: float = 0.0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown rule {self.rule!r}; pick one of {RULES}")
        check_probability("smoothing", self.smoothing, 0.0, 0.5, inclusive_high=False)
        object.__setattr__(self, "target_tokens", tuple(self.target_tokens))
        object.__setattr__(self, "reference", tuple(self.reference))
        if self.rule == "bag_of_words" and not self.target_tokens:
            raise ConfigurationError("bag_of_words needs a non-empty target token set")
        if self.rule == "exact_sequence" and not self.reference:
            raise ConfigurationError("exact_sequence needs a reference sequence")
        if self.rule == "constant" and self.constant_class not in (0, 1):
            raise ConfigurationError("constant class must be 0 or 1")

    @property
    def class_labels(self) -> tuple:
        return ("0", "1")

    def label(self, tokens) -> int:
        """Hard 0/1 decision for one sequence."""
        toks = as_token_tuple(tokens)
        if self.rule == "begins_with_duplicate":
            return int(len(toks) >= 2 and toks[0] == toks[1])
        if self.rule == "adjacent_duplicate":
            return int(any(toks[i] == toks[i + 1] for i in range(len(toks) - 1)))
        if self.rule == "any_duplicate":
            return int(len(set(toks)) < len(toks))
        if self.rule == "bag_of_words":
            targets = set(self.target_tokens)
            return int(any(t in targets for t in toks))
        if self.rule == "constant":
            return self.constant_class
        return int(toks == self.reference)

    def predict(self, tokens) -> np.ndarray:
        """Probability vector (p_0, p_1) for one sequence."""
        p1 = 1.0 - self.smoothing if self.label(tokens) else self.smoothing
        return np.array([1.0 - p1, p1])

    def _labels_vectorized(self, batch: np.ndarray) -> np.ndarray:
        if self.rule == "begins_with_duplicate":
            if batch.shape[1] < 2:
                return np.zeros(len(batch), dtype=bool)
            return batch[:, 0] == batch[:, 1]
        if self.rule == "adjacent_duplicate":
            if batch.shape[1] < 2:
                return np.zeros(len(batch), dtype=bool)
            return (batch[:, :-1] == batch[:, 1:]).any(axis=1)
        if self.rule == "any_duplicate":
            srt = np.sort(batch, axis=1)
            if batch.shape[1] < 2:
                return np.zeros(len(batch), dtype=bool)
            return (srt[:, :-1] == srt[:, 1:]).any(axis=1)
        if self.rule == "bag_of_words":
            hit = np.zeros(len(batch), dtype=bool)
            for t in self.target_tokens:
                hit |= (batch == t).any(axis=1)
            return hit
        if self.rule == "constant":
            return np.full(len(batch), bool(self.constant_class))
        ref = np.asarray(self.reference)
        if batch.shape[1] != len(ref):
            return np.zeros(len(batch), dtype=bool)
        return (batch == ref).all(axis=1)

    def scores(self, batch) -> np.ndarray:
        """(batch, 2) probability matrix; vectorized for rectangular batches."""
        if len(batch) == 0:
            return np.zeros((0, 2))
        arr = None
        if isinstance(batch, np.ndarray) and batch.ndim == 2 and self.rule != "exact_sequence":
            arr = batch
        elif self.rule != "exact_sequence" and len({len(row) for row in batch}) == 1:
            try:
                candidate = np.asarray(batch)
                if candidate.ndim == 2:
                    arr = candidate
            except (ValueError, TypeError):
                arr = None
        if arr is not None:
            labels = self._labels_vectorized(arr)
        else:
            labels = np.array([bool(self.label(row)) for row in batch])
        p1 = np.where(labels, 1.0 - self.smoothing, self.smoothing)
        return np.stack([1.0 - p1, p1], axis=1)


def predict(model: RuleModel, seq) -> np.ndarray:
    tokens = seq.tokens if hasattr(seq, "tokens") else seq
    return model.predict(tokens)


class TokenFractionStub:
    """Conformance stub: score is the fraction of tokens equal to 'good'.

    Emits (1 - frac, frac) over classes (neg, pos); an empty sequence scores
    fraction 0. The arithmetic is a single double division so independent
    implementations can match it bit for bit.
    """

    class_labels = ("neg", "pos")

    def scores(self, batch) -> np.ndarray:
        out = np.empty((len(batch), 2))
        for row_index, row in enumerate(batch):
            toks = list(row)
            frac = (sum(1 for t in toks if str(t) == "good") / len(toks)) if toks else 0.0
            out[row_index, 0] = 1.0 - frac
            out[row_index, 1] = frac
        return out


_TASK_RULES = {
    "task1": "begins_with_duplicate",
    "task2": "adjacent_duplicate",
    "task3": "any_duplicate",
}


def task_rule_model(task: str, smoothing: float = 0.0) -> RuleModel:
    """Rule model for a synthetic task id ('task1' | 'task2' | 'task3' or 1|2|3)."""
    key = f"task{task}" if str(task) in ("1", "2", "3") else str(task)
    if key not in _TASK_RULES:
        raise ConfigurationError(f"unknown task {task!r}")
    return RuleModel(_TASK_RULES[key], smoothing=smoothing)


def resolve_model(name: str):
    """Model registry for CLI names: 'rule:task1', 'rule:any_duplicate', 'stub'."""
    if name == "stub":
        return TokenFractionStub()
    if name.startswith("rule:"):
        spec = name.split(":", 1)[1]
        if spec in _TASK_RULES or spec in ("1", "2", "3"):
            return task_rule_model(spec)
        if spec in RULES:
            return RuleModel(spec)
        raise ConfigurationError(f"unknown rule model {name!r}")
    raise ConfigurationError(f"unknown in-process model {name!r}")
