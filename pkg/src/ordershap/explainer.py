"""Sklearn-style estimator facade over the exact and sampled engines."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .bridge import InProcessEndpoint, resolve_endpoint
from .core import make_sequence, osv_exact, sv_exact
from .errors import ConfigurationError
from .estimators import (
    EstimatorConfig,
    GlobalExplanationJob,
    global_explain,
    osv_sampled,
    sv_sampled,
)
from .interventions import InterventionSpec, OccurrenceIntervention, OrderIntervention
from .validation import as_token_tuple, check_aligned_instances

ORDER_MODE_CHOICES = ("absolute", "relative", "none")


class OrderShapleyExplainer(BaseEstimator):
    """Occurrence- and order-feature attributions behind a fit/transform API.

    ``fit(X)`` pools template-aligned instances into a global slot-level
    report (exposed as ``report_`` / ``attributions_``), ``explain(tokens)``
    produces a local report for one sequence, and ``transform(X)`` returns a
    per-instance attribution matrix of shape (len(X), 2n). ``order_mode``
    'none' yields plain order-insensitive Shapley values with zero order
    attributions.
    """

    def __init__(self, model="rule:task1", value_fn=None, order_mode="absolute",
                 vocab=None, mask_token=None, q_samples=4, g_samples=5,
                 tolerance=0.005, max_permutations=10000, batch_size=64,
                 workers=1, seed=0, exact=False):
        self.model = model
        self.value_fn = value_fn
        self.order_mode = order_mode
        self.vocab = vocab
        self.mask_token = mask_token
        self.q_samples = q_samples
        self.g_samples = g_samples
        self.tolerance = tolerance
        self.max_permutations = max_permutations
        self.batch_size = batch_size
        self.workers = workers
        self.seed = seed
        self.exact = exact

    # -- resolution helpers -------------------------------------------------

    def _endpoint(self):
        if isinstance(self.model, str):
            return resolve_endpoint(self.model)
        if hasattr(self.model, "score_batch"):
            return self.model
        return InProcessEndpoint(self.model)

    def _occurrence(self, instances):
        if self.mask_token is not None:
            return OccurrenceIntervention.fixed(self.mask_token)
        vocab = self.vocab
        if vocab is None:
            seen = []
            for row in instances:
                for t in row:
                    if t not in seen:
                        seen.append(t)
            vocab = seen
        return OccurrenceIntervention.uniform(vocab)

    def _config(self):
        return EstimatorConfig(
            q_samples=self.q_samples,
            g_samples=self.g_samples,
            tolerance=self.tolerance,
            max_permutations=self.max_permutations,
            batch_size=self.batch_size,
            workers=self.workers,
            seed=self.seed,
        )

    def _spec(self, instances):
        if self.order_mode not in ORDER_MODE_CHOICES:
            raise ConfigurationError(f"order_mode must be one of {ORDER_MODE_CHOICES}")
        mode = "identity" if self.order_mode == "none" else self.order_mode
        return InterventionSpec(self._occurrence(instances), OrderIntervention(mode))

    # -- estimator API ------------------------------------------------------

    def explain(self, tokens):
        """Local attribution report for one token sequence."""
        seq = make_sequence(as_token_tuple(tokens))
        endpoint = self._endpoint()
        spec = self._spec([seq.tokens])
        if self.exact:
            if self.order_mode == "none":
                return sv_exact(seq, self.value_fn, endpoint, g=spec.occurrence)
            return osv_exact(seq, self.value_fn, endpoint, spec)
        if self.order_mode == "none":
            return sv_sampled(endpoint, self.value_fn, seq, spec.occurrence, self._config())
        return osv_sampled(endpoint, self.value_fn, seq, spec, self._config())

    def fit(self, X, y=None):
        """Global slot-level explanation over template-aligned instances."""
        rows = check_aligned_instances(X)
        endpoint = self._endpoint()
        spec = self._spec(rows)
        job = GlobalExplanationJob(
            instances=tuple(rows),
            model=endpoint,
            intervention=spec,
            value_fn=self.value_fn,
            config=self._config(),
        )
        walk = "occurrence" if self.order_mode == "none" else "all"
        self.report_ = global_explain(job, walk=walk)
        self.attributions_ = self.report_.values()
        self.n_slots_ = len(rows[0])
        return self

    def transform(self, X):
        """Per-instance attribution matrix, occurrence features first."""
        return np.stack([self.explain(row).values() for row in X])

    def fit_transform(self, X, y=None):
        self.fit(X, y)
        return self.transform(X)
