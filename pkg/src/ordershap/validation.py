"""Input validation helpers used at API boundaries."""
from __future__ import annotations

import numpy as np

from .errors import ContractViolation, DataError


def as_token_tuple(tokens) -> tuple:
    """Coerce any iterable of tokens to a non-empty tuple."""
    if isinstance(tokens, str):
        raise ContractViolation(
            "a bare string is ambiguous; pass a list of tokens (e.g. line.split())"
        )
    out = tuple(tokens)
    if len(out) == 0:
        raise ContractViolation("empty sequences are rejected (n must be >= 1)")
    return out


def check_feature_index(i: int, num_features: int) -> int:
    i = int(i)
    if not 0 <= i < num_features:
        raise ContractViolation(f"feature index {i} out of range [0, {num_features})")
    return i


def check_permutation(sigma, num_features: int) -> np.ndarray:
    """Validate that sigma is a bijection on {0..num_features-1}."""
    arr = np.asarray(sigma, dtype=np.int64)
    if arr.shape != (num_features,) or sorted(arr.tolist()) != list(range(num_features)):
        raise ContractViolation(f"sigma is not a permutation of 0..{num_features - 1}")
    return arr


def check_aligned_instances(instances) -> list[tuple]:
    """All instances must share one length (template alignment)."""
    rows = [as_token_tuple(t) for t in instances]
    if not rows:
        raise DataError("no instances provided")
    n = len(rows[0])
    for idx, row in enumerate(rows):
        if len(row) != n:
            raise DataError(
                f"instances are not template-aligned: row 0 has {n} slots, row {idx} has {len(row)}"
            )
    return rows


def check_probability(name: str, value: float, low: float, high: float,
                      inclusive_low=True, inclusive_high=True) -> float:
    value = float(value)
    ok_low = value >= low if inclusive_low else value > low
    ok_high = value <= high if inclusive_high else value < high
    if not (ok_low and ok_high):
        lo = "[" if inclusive_low else "("
        hi = "]" if inclusive_high else ")"
        raise ContractViolation(f"{name}={value} outside {lo}{low}, {high}{hi}")
    return value


def check_finite_scores(scores: np.ndarray, context: str = "model scores") -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(scores).all():
        raise DataError(f"{context} contain non-finite values")
    return scores
