"""Sequence/coalition data model and exact attribution engines.

A sequence of length n is treated as a cooperative game over 2n features:
feature i < n is the occurrence of the token at canonical slot i, feature
n + i is the positional assignment of slot i. Removing an occurrence
feature triggers token replacement, removing an order feature allows the
slot's token to be relocated; both are governed by an InterventionSpec.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    CapacityError,
    ConfigurationError,
    ContractViolation,
    EvaluationError,
)
from .interventions import InterventionSpec
from .validation import (
    as_token_tuple,
    check_feature_index,
    check_finite_scores,
    check_permutation,
)

EXACT_MAX_FEATURES = 12  # hard cap on 2n for full coalition enumeration


@dataclass(frozen=True)
class TokenSequence:
    """An ordered token sequence; order features are implicitly 0..n-1."""

    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", as_token_tuple(self.tokens))

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def num_features(self) -> int:
        return 2 * len(self.tokens)


def make_sequence(tokens) -> TokenSequence:
    if isinstance(tokens, TokenSequence):
        return tokens
    return TokenSequence(tuple(tokens))


@dataclass(frozen=True)
class Coalition:
    """A subset of the 2n features, stored as a bit set.

    Bit i (i < n) marks occurrence feature i, bit n + i marks order
    feature i.
    """

    n: int
    mask: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ContractViolation("coalitions need n >= 1")
        if not 0 <= self.mask < (1 << (2 * self.n)):
            raise ContractViolation("coalition mask outside the 2n-feature universe")

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(n, 0)

    @classmethod
    def full(cls, n: int) -> "Coalition":
        return cls(n, (1 << (2 * n)) - 1)

    @classmethod
    def from_members(cls, n: int, members) -> "Coalition":
        mask = 0
        for i in members:
            check_feature_index(i, 2 * n)
            mask |= 1 << int(i)
        return cls(n, mask)

    @classmethod
    def from_sets(cls, n: int, occurrence=(), order=()) -> "Coalition":
        members = [int(i) for i in occurrence] + [n + int(i) for i in order]
        return cls.from_members(n, members)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def occurrence_members(self) -> frozenset:
        return frozenset(i for i in range(self.n) if self.mask >> i & 1)

    @property
    def order_members(self) -> frozenset:
        return frozenset(i for i in range(self.n) if self.mask >> (self.n + i) & 1)

    @property
    def occurrence_mask(self) -> int:
        return self.mask & ((1 << self.n) - 1)

    @property
    def order_mask(self) -> int:
        return self.mask >> self.n

    def has(self, i: int) -> bool:
        check_feature_index(i, 2 * self.n)
        return bool(self.mask >> int(i) & 1)

    def add(self, i: int) -> "Coalition":
        check_feature_index(i, 2 * self.n)
        return Coalition(self.n, self.mask | (1 << int(i)))

    def complement(self) -> "Coalition":
        return Coalition(self.n, self.mask ^ ((1 << (2 * self.n)) - 1))


_VALUE_HOOKS: dict[str, Callable] = {}


def register_value_function(name: str, hook: Callable) -> None:
    """Register a named scores->scalar hook usable as a raw functional."""
    _VALUE_HOOKS[name] = hook


@dataclass(frozen=True)
class ValueFunction:
    """Scalar functional of the per-class model output.

    ``prob_diff`` is the probability difference between a target and a
    contrast class, ``prob`` a single class probability, ``raw`` a named
    registered hook over the raw score vector.
    """

    kind: str
    class_labels: tuple
    target: Optional[str] = None
    contrast: Optional[str] = None
    hook_name: Optional[str] = None

    def __post_init__(self):
        labels = tuple(str(c) for c in self.class_labels)
        object.__setattr__(self, "class_labels", labels)
        if self.kind in ("prob_diff", "prob"):
            if self.target not in labels:
                raise ConfigurationError(f"target class {self.target!r} not in {labels}")
            if self.kind == "prob_diff" and self.contrast not in labels:
                raise ConfigurationError(f"contrast class {self.contrast!r} not in {labels}")
        elif self.kind == "raw":
            if self.hook_name not in _VALUE_HOOKS:
                raise ConfigurationError(f"no registered value hook named {self.hook_name!r}")
        else:
            raise ConfigurationError(f"unknown value-function kind {self.kind!r}")

    @classmethod
    def prob_diff(cls, target, contrast, class_labels) -> "ValueFunction":
        return cls("prob_diff", tuple(class_labels), target=str(target), contrast=str(contrast))

    @classmethod
    def prob(cls, target, class_labels) -> "ValueFunction":
        return cls("prob", tuple(class_labels), target=str(target))

    @classmethod
    def raw(cls, hook_name, class_labels) -> "ValueFunction":
        return cls("raw", tuple(class_labels), hook_name=hook_name)

    @classmethod
    def default_for(cls, class_labels) -> "ValueFunction":
        labels = tuple(str(c) for c in class_labels)
        if len(labels) < 2:
            raise ConfigurationError("need at least two classes")
        return cls.prob_diff(labels[1], labels[0], labels)

    def __call__(self, scores: np.ndarray) -> np.ndarray:
        scores = check_finite_scores(scores)
        if scores.ndim != 2 or scores.shape[1] != len(self.class_labels):
            raise ContractViolation(
                f"scores must be (batch, {len(self.class_labels)}), got {scores.shape}"
            )
        if self.kind == "prob_diff":
            t = self.class_labels.index(self.target)
            c = self.class_labels.index(self.contrast)
            return scores[:, t] - scores[:, c]
        if self.kind == "prob":
            return scores[:, self.class_labels.index(self.target)]
        return np.asarray(_VALUE_HOOKS[self.hook_name](scores), dtype=np.float64)


@dataclass
class AttributionReport:
    """Per-feature attributions plus estimation diagnostics."""

    occurrence_values: np.ndarray
    order_values: np.ndarray
    mode: str
    evaluation_count: int
    occurrence_stderr: np.ndarray
    order_stderr: np.ndarray
    seed: Optional[int] = None
    converged: bool = True
    permutations: int = 0
    baseline_value: float = 0.0
    full_value: float = 0.0

    @property
    def n(self) -> int:
        return len(self.occurrence_values)

    def values(self) -> np.ndarray:
        """All 2n attributions, occurrence features first."""
        return np.concatenate([self.occurrence_values, self.order_values])

    def stderrs(self) -> np.ndarray:
        return np.concatenate([self.occurrence_stderr, self.order_stderr])

    def completeness_gap(self) -> float:
        return float(self.values().sum() - (self.full_value - self.baseline_value))


@dataclass(frozen=True)
class CoalitionValueOracle:
    """Direct Coalition -> value mapping, bypassing model evaluation."""

    n: int
    fn: Callable[[Coalition], float]

    def __call__(self, coalition: Coalition) -> float:
        return float(self.fn(coalition))

    def value_of_mask(self, mask: int) -> float:
        return float(self.fn(Coalition(self.n, mask)))

    @classmethod
    def from_table(cls, n: int, table) -> "CoalitionValueOracle":
        return cls(n, lambda c: table[c.mask])

    @classmethod
    def order_gated(cls, n: int, occurrence_value: Callable[[int], float],
                    baseline: float = 0.0) -> "CoalitionValueOracle":
        """Completely order-sensitive oracle: baseline unless every order
        feature is present, otherwise a function of the occurrence subset size
        (or any occurrence-mask functional passed as ``occurrence_value``)."""
        full_order = (1 << n) - 1

        def fn(c: Coalition) -> float:
            if c.order_mask != full_order:
                return baseline
            return float(occurrence_value(c.occurrence_mask))

        return cls(n, fn)


def marginal_contribution(value_of: Callable[[Coalition], float],
                          coalition: Coalition, i: int) -> float:
    """value(S + i) - value(S) for a feature i outside S."""
    check_feature_index(i, 2 * coalition.n)
    if coalition.has(i):
        raise ContractViolation(f"feature {i} already belongs to the coalition")
    return float(value_of(coalition.add(i))) - float(value_of(coalition))


def permutation_marginals(sigma, value_of: Callable[[Coalition], float],
                          n: int) -> np.ndarray:
    """Marginal contribution of every feature along one permutation.

    Entry i of the result is the marginal of feature i when it joins its
    predecessors in sigma; the entries telescope to value(full) - value(empty).
    """
    p = 2 * n
    order = check_permutation(sigma, p)
    out = np.empty(p)
    current = Coalition.empty(n)
    prev = float(value_of(current))
    for i in order:
        current = current.add(int(i))
        val = float(value_of(current))
        out[int(i)] = val - prev
        prev = val
    return out


def shapley_weights(num_players: int) -> np.ndarray:
    """w[s] = s! (p - s - 1)! / p! for coalition size s."""
    fact = [math.factorial(k) for k in range(num_players + 1)]
    return np.array(
        [fact[s] * fact[num_players - s - 1] / fact[num_players] for s in range(num_players)]
    )


def shapley_from_value_table(values: np.ndarray, num_players: int) -> np.ndarray:
    """Exact Shapley values from a table indexed by coalition bit mask."""
    size = 1 << num_players
    if values.shape != (size,):
        raise ContractViolation(f"value table must have length {size}")
    w = shapley_weights(num_players)
    masks = np.arange(size, dtype=np.int64)
    sizes = np.zeros(size, dtype=np.int64)
    for i in range(num_players):
        sizes += (masks >> i) & 1
    phi = np.empty(num_players)
    for i in range(num_players):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = float(np.sum(w[sizes[without]] * (values[without | bit] - values[without])))
    return phi


def _scorer(model):
    """Adapt a model endpoint or bare model to batch -> (b, classes) scores."""
    if hasattr(model, "score_batch"):
        return model.score_batch, tuple(model.class_labels)
    if hasattr(model, "scores"):
        return model.scores, tuple(model.class_labels)
    raise ConfigurationError(
        "model must expose score_batch(batch) or scores(batch) plus class_labels"
    )


class _PatternValuer:
    """Memoized exact expectation of the value function over one coalition's
    intervention distribution.

    A pattern fixes, per output slot, either a concrete token or the canonical
    position whose replacement distribution fills the slot; its value is the
    uniform mean over all completions.
    """

    def __init__(self, seq: TokenSequence, value_fn: ValueFunction, model,
                 intervention: InterventionSpec, batch_size: int = 4096):
        self.seq = seq
        self.value_fn = value_fn
        self.score, labels = _scorer(model)
        self.intervention = intervention
        max_batch = getattr(model, "max_batch", None)
        self.batch_size = min(batch_size, int(max_batch)) if max_batch else batch_size
        self.cache: dict[tuple, float] = {}
        self.rows_scored = 0
        n = seq.n
        intervention.occurrence._check_positions(n)
        self.position_support = [
            tuple(intervention.occurrence.support_for_position(i)) for i in range(n)
        ]
        # one numpy dtype covering tokens and every support lets completion
        # grids be built without per-row python objects
        try:
            self.dtype = np.result_type(
                np.asarray(seq.tokens),
                *[np.asarray(s) for s in self.position_support],
            )
        except (TypeError, ValueError):
            self.dtype = None
        self.support_arrays = (
            [np.asarray(s, dtype=self.dtype) for s in self.position_support]
            if self.dtype is not None else None
        )

    def _evaluate_rows(self, rows) -> np.ndarray:
        vals = np.empty(len(rows))
        for start in range(0, len(rows), self.batch_size):
            chunk = rows[start:start + self.batch_size]
            if not isinstance(chunk, np.ndarray):
                chunk = [list(r) for r in chunk]
            scores = self.score(chunk)
            vals[start:start + len(chunk)] = self.value_fn(scores)
        self.rows_scored += len(rows)
        return vals

    def _completion_grid(self, pattern: tuple) -> np.ndarray:
        """All completions of a pattern as a (prod supports, n) array, free
        positions varying fastest from the right."""
        n = len(pattern)
        free = [entry[1] for entry in pattern
                if isinstance(entry, tuple) and entry and entry[0] == "free"]
        total = 1
        for pos in free:
            total *= len(self.support_arrays[pos])
        rows = np.empty((total, n), dtype=self.dtype)
        for slot, entry in enumerate(pattern):
            if not (isinstance(entry, tuple) and entry and entry[0] == "free"):
                rows[:, slot] = entry
        rep = total
        for entry_pos, entry in enumerate(pattern):
            if isinstance(entry, tuple) and entry and entry[0] == "free":
                arr = self.support_arrays[entry[1]]
                rep //= len(arr)
                rows[:, entry_pos] = np.tile(np.repeat(arr, rep), total // (rep * len(arr)))
        return rows

    def pattern_value(self, pattern: tuple) -> float:
        got = self.cache.get(pattern)
        if got is not None:
            return got
        if self.support_arrays is not None:
            rows = self._completion_grid(pattern)
        else:
            rows = [()]
            for entry in pattern:
                if isinstance(entry, tuple) and entry and entry[0] == "free":
                    choices = self.position_support[entry[1]]
                else:
                    choices = (entry,)
                rows = [r + (c,) for r in rows for c in choices]
        value = float(self._evaluate_rows(rows).mean())
        self.cache[pattern] = value
        return value

    def coalition_value(self, occurrence_mask: int, order_mask: int) -> float:
        n = self.seq.n
        retained_order = [i for i in range(n) if order_mask >> i & 1]
        total = 0.0
        support = self.intervention.order.support(n, retained_order)
        for z in support:
            pattern = [None] * n
            for i in range(n):
                if occurrence_mask >> i & 1:
                    pattern[z[i]] = self.seq.tokens[i]
                else:
                    pattern[z[i]] = ("free", i)
            total += self.pattern_value(tuple(pattern))
        return total / len(support)


def coalition_value_table(seq: TokenSequence, value_fn: ValueFunction, model,
                          intervention: InterventionSpec,
                          batch_size: int = 512) -> np.ndarray:
    """Exact value of every coalition of the 2n features, indexed by mask."""
    n = seq.n
    valuer = _PatternValuer(seq, value_fn, model, intervention, batch_size)
    size = 1 << (2 * n)
    values = np.empty(size)
    pair_cache: dict[tuple, float] = {}
    identity = intervention.order.mode == "identity"
    try:
        for mask in range(size):
            occ = mask & ((1 << n) - 1)
            order = 0 if identity else (mask >> n)
            key = (occ, order)
            got = pair_cache.get(key)
            if got is None:
                got = valuer.coalition_value(occ, mask >> n)
                pair_cache[key] = got
            values[mask] = got
    except (ContractViolation, ConfigurationError):
        raise
    except Exception as exc:  # pragma: no cover - depends on endpoint failure mode
        raise EvaluationError(str(exc), coalition=Coalition(n, mask)) from exc
    return values


def _exact_report(phi: np.ndarray, n: int, mode: str, evaluation_count: int,
                  baseline: float, full: float) -> AttributionReport:
    zeros = np.zeros(n)
    return AttributionReport(
        occurrence_values=phi[:n].copy(),
        order_values=phi[n:].copy(),
        mode=mode,
        evaluation_count=evaluation_count,
        occurrence_stderr=zeros.copy(),
        order_stderr=zeros.copy(),
        seed=None,
        converged=True,
        permutations=0,
        baseline_value=baseline,
        full_value=full,
    )


def osv_exact(seq=None, value_fn=None, model=None, intervention=None,
              batch_size: int = 512) -> AttributionReport:
    """Exact occurrence+order attributions by full coalition enumeration.

    ``model`` may be a CoalitionValueOracle (valued directly) or a model
    endpoint, in which case coalition values are exact expectations over the
    enumerated intervention supports. Deterministic; no sampling.
    """
    if isinstance(model, CoalitionValueOracle):
        n = model.n
        if 2 * n > EXACT_MAX_FEATURES:
            raise CapacityError(
                f"exact enumeration needs 2n <= {EXACT_MAX_FEATURES}, got 2n = {2 * n}"
            )
        size = 1 << (2 * n)
        values = np.array([model.value_of_mask(m) for m in range(size)])
        mode = intervention.mode if intervention is not None else "absolute"
        phi = shapley_from_value_table(values, 2 * n)
        return _exact_report(phi, n, mode, size, float(values[0]), float(values[-1]))

    sequence = make_sequence(seq)
    n = sequence.n
    if 2 * n > EXACT_MAX_FEATURES:
        raise CapacityError(
            f"exact enumeration needs 2n <= {EXACT_MAX_FEATURES}, got 2n = {2 * n}"
        )
    if intervention is None:
        raise ConfigurationError("osv_exact needs an InterventionSpec for model endpoints")
    if value_fn is None:
        _, labels = _scorer(model)
        value_fn = ValueFunction.default_for(labels)
    values = coalition_value_table(sequence, value_fn, model, intervention, batch_size)
    phi = shapley_from_value_table(values, 2 * n)
    return _exact_report(
        phi, n, intervention.mode, 1 << (2 * n), float(values[0]), float(values[-1])
    )


def sv_exact(seq=None, value_fn=None, model=None, g=None,
             batch_size: int = 512) -> AttributionReport:
    """Classic order-insensitive Shapley values over the n occurrence features.

    Order features are treated as omnipresent (identity intervention); their
    attributions are reported as zero.
    """
    from .interventions import OrderIntervention  # local to avoid cycle noise

    if isinstance(model, CoalitionValueOracle):
        n = model.n
        if n > EXACT_MAX_FEATURES // 2:
            raise CapacityError(f"sv_exact needs n <= {EXACT_MAX_FEATURES // 2}, got n = {n}")
        size = 1 << n
        values = np.array([model.value_of_mask(m) for m in range(size)])
        phi = shapley_from_value_table(values, n)
        occurrence = phi
        baseline, full = float(values[0]), float(values[-1])
        report = _exact_report(
            np.concatenate([occurrence, np.zeros(n)]), n, "identity", size, baseline, full
        )
        return report

    sequence = make_sequence(seq)
    n = sequence.n
    if n > EXACT_MAX_FEATURES // 2:
        raise CapacityError(f"sv_exact needs n <= {EXACT_MAX_FEATURES // 2}, got n = {n}")
    if g is None:
        raise ConfigurationError("sv_exact needs an occurrence intervention g")
    if value_fn is None:
        _, labels = _scorer(model)
        value_fn = ValueFunction.default_for(labels)
    intervention = InterventionSpec(occurrence=g, order=OrderIntervention("identity"))
    valuer = _PatternValuer(sequence, value_fn, model, intervention, batch_size)
    size = 1 << n
    values = np.empty(size)
    for occ_mask in range(size):
        values[occ_mask] = valuer.coalition_value(occ_mask, 0)
    phi = shapley_from_value_table(values, n)
    return _exact_report(
        np.concatenate([phi, np.zeros(n)]), n, "identity", size,
        float(values[0]), float(values[-1]),
    )
