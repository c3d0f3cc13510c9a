"""Occurrence and order interventions for sequence coalitions.

Order interventions draw a slot assignment ``z`` (a permutation of
``0..n-1``: token at canonical index i ends up in output slot ``z[i]``)
conditioned on the retained order features keeping their guarantee:

* ``absolute``  - retained indices keep their exact slot; the remaining
  tokens receive a uniformly random arrangement of the remaining slots.
* ``relative``  - retained indices keep pairwise order and pairwise gaps
  but are translated by one common offset, uniform over all offsets that
  keep every retained slot inside the sequence; the remaining tokens fill
  the leftover slots uniformly at random.
* ``identity``  - the canonical arrangement with probability one.

Occurrence interventions draw replacement tokens for positions whose
occurrence feature is removed, always in the canonical (pre-permutation)
frame of the original sequence.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation, UnsupportedConfigurationError
from .validation import as_token_tuple

ORDER_MODES = ("absolute", "relative", "identity")


def _retained_sorted(n: int, retained) -> list[int]:
    out = sorted(int(i) for i in retained)
    if out and (out[0] < 0 or out[-1] >= n):
        raise ContractViolation(f"retained order indices {out} outside 0..{n - 1}")
    if len(set(out)) != len(out):
        raise ContractViolation("retained order indices contain duplicates")
    return out


def _offset_range(n: int, retained: list[int]) -> range:
    """All common translations keeping every retained slot inside [0, n-1]."""
    if not retained:
        return range(0, 1)
    return range(-retained[0], n - retained[-1])


def sample_order_absolute(n: int, retained, rng: np.random.Generator) -> np.ndarray:
    """Draw z with retained indices fixed and the rest permuted among themselves."""
    kept = _retained_sorted(n, retained)
    z = np.arange(n)
    others = [i for i in range(n) if i not in set(kept)]
    if len(others) > 1:
        slots = np.array(others)
        z[others] = slots[rng.permutation(len(slots))]
    return z


def sample_order_relative(n: int, retained, rng: np.random.Generator) -> np.ndarray:
    """Draw z translating the retained block by a common in-bounds offset."""
    kept = _retained_sorted(n, retained)
    offsets = _offset_range(n, kept)
    d = int(rng.integers(offsets.start, offsets.stop)) if len(offsets) > 1 else offsets.start
    z = np.empty(n, dtype=np.int64)
    taken = set()
    for i in kept:
        z[i] = i + d
        taken.add(i + d)
    others = [i for i in range(n) if i not in set(kept)]
    if others:
        slots = np.array([p for p in range(n) if p not in taken])
        z[others] = slots[rng.permutation(len(slots))]
    return z


@dataclass(frozen=True)
class OrderIntervention:
    """Order-intervention distribution q, one of ORDER_MODES."""

    mode: str = "absolute"

    def __post_init__(self):
        if self.mode not in ORDER_MODES:
            raise ConfigurationError(f"unknown order mode {self.mode!r}; pick one of {ORDER_MODES}")

    def sample(self, n: int, retained, rng: np.random.Generator) -> np.ndarray:
        if self.mode == "identity":
            return np.arange(n)
        if self.mode == "absolute":
            return sample_order_absolute(n, retained, rng)
        return sample_order_relative(n, retained, rng)

    def support(self, n: int, retained) -> list[tuple[int, ...]]:
        """Enumerate the support; every element is equally likely."""
        kept = _retained_sorted(n, retained)
        if self.mode == "identity":
            return [tuple(range(n))]
        others = [i for i in range(n) if i not in set(kept)]
        out = []
        if self.mode == "absolute":
            for arrangement in itertools.permutations(others):
                z = list(range(n))
                for i, slot in zip(others, arrangement):
                    z[i] = slot
                out.append(tuple(z))
            return out
        for d in _offset_range(n, kept):
            placed = {i: i + d for i in kept}
            free_slots = [p for p in range(n) if p not in set(placed.values())]
            for arrangement in itertools.permutations(free_slots):
                z = [0] * n
                for i in kept:
                    z[i] = placed[i]
                for i, slot in zip(others, arrangement):
                    z[i] = slot
                out.append(tuple(z))
        return out

    def support_size(self, n: int, retained) -> int:
        kept = _retained_sorted(n, retained)
        if self.mode == "identity":
            return 1
        free = math.factorial(n - len(kept))
        if self.mode == "absolute":
            return free
        return len(_offset_range(n, kept)) * free


@dataclass(frozen=True)
class OccurrenceIntervention:
    """Replacement distribution g for removed occurrence features."""

    kind: str = "uniform_vocab"
    vocab: tuple = ()
    token: object = None
    slots: tuple = ()
    sampler: object = field(default=None, compare=False)

    @classmethod
    def uniform(cls, vocab) -> "OccurrenceIntervention":
        vocab = tuple(vocab)
        if not vocab:
            raise ConfigurationError("uniform_vocab intervention needs a non-empty vocabulary")
        return cls(kind="uniform_vocab", vocab=vocab)

    @classmethod
    def fixed(cls, token) -> "OccurrenceIntervention":
        return cls(kind="fixed_token", token=token)

    @classmethod
    def per_slot(cls, slots) -> "OccurrenceIntervention":
        slots = tuple(tuple(s) for s in slots)
        if not slots or any(len(s) == 0 for s in slots):
            raise ConfigurationError("slot_distribution needs a non-empty token list per position")
        return cls(kind="slot_distribution", slots=slots)

    @classmethod
    def custom(cls, sampler) -> "OccurrenceIntervention":
        """Arbitrary sampler(position, rng) -> token; sampling only, no exact support."""
        return cls(kind="sampler", sampler=sampler)

    def _check_positions(self, n: int):
        if self.kind == "slot_distribution" and len(self.slots) != n:
            raise ConfigurationError(
                f"slot_distribution covers {len(self.slots)} positions, sequence has {n}"
            )

    def support_for_position(self, position: int) -> tuple:
        """Equally likely replacement tokens for one position (exact mode)."""
        if self.kind == "uniform_vocab":
            return self.vocab
        if self.kind == "fixed_token":
            return (self.token,)
        if self.kind == "slot_distribution":
            return self.slots[position]
        raise UnsupportedConfigurationError(
            f"occurrence intervention kind {self.kind!r} has no enumerable support; "
            "exact computation requires a finite replacement distribution"
        )

    def sample(self, tokens, retained, rng: np.random.Generator) -> tuple:
        """Token assignment for all positions; retained positions keep their token."""
        tokens = as_token_tuple(tokens)
        n = len(tokens)
        self._check_positions(n)
        kept = set(int(i) for i in retained)
        out = list(tokens)
        for i in range(n):
            if i in kept:
                continue
            if self.kind == "uniform_vocab":
                out[i] = self.vocab[int(rng.integers(len(self.vocab)))]
            elif self.kind == "fixed_token":
                out[i] = self.token
            elif self.kind == "slot_distribution":
                choices = self.slots[i]
                out[i] = choices[int(rng.integers(len(choices)))]
            elif self.kind == "sampler":
                out[i] = self.sampler(i, rng)
            else:
                raise ConfigurationError(f"unknown occurrence intervention kind {self.kind!r}")
        return tuple(out)

    def is_degenerate(self, n: int, retained) -> bool:
        """True when every replaced position has a single possible token."""
        kept = set(int(i) for i in retained)
        free = [i for i in range(n) if i not in kept]
        if not free:
            return True
        if self.kind == "fixed_token":
            return True
        if self.kind == "uniform_vocab":
            return len(self.vocab) == 1
        if self.kind == "slot_distribution":
            self._check_positions(n)
            return all(len(self.slots[i]) == 1 for i in free)
        return False


def sample_occurrence(g: OccurrenceIntervention, tokens, retained,
                      rng: np.random.Generator) -> tuple:
    return g.sample(tokens, retained, rng)


def realize(x_assignment, z_permutation) -> tuple:
    """Place token x[i] into output slot z[i]."""
    x = tuple(x_assignment)
    z = np.asarray(z_permutation, dtype=np.int64)
    if len(x) != len(z):
        raise ContractViolation(
            f"assignment length {len(x)} does not match permutation length {len(z)}"
        )
    n = len(x)
    if sorted(z.tolist()) != list(range(n)):
        raise ContractViolation("z is not a permutation of 0..n-1")
    out = [None] * n
    for i in range(n):
        out[z[i]] = x[i]
    return tuple(out)


@dataclass(frozen=True)
class InterventionSpec:
    """The (g, q) pair used when valuing coalitions."""

    occurrence: OccurrenceIntervention
    order: OrderIntervention = OrderIntervention("absolute")

    @property
    def mode(self) -> str:
        return self.order.mode
