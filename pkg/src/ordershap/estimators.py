"""Permutation-sampling attribution estimators with convergence control.

One sampling unit is a uniform feature permutation applied to one instance:
the chain of prefix coalitions is valued by Monte-Carlo means over the
intervention distributions, consecutive differences give one marginal
contribution sample per feature. Units are consumed in a fixed order
(rounds over the instance list), so results are bitwise reproducible for a
fixed seed regardless of worker count; workers only prefetch future units.

Convergence follows the running standard error of every feature mean
against ``tolerance * (max mean - min mean)``, checked after each unit once
every feature has at least two samples and a full pass over the instances
has completed. Hitting ``max_permutations`` rounds flags the report as
non-converged instead of raising.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    AttributionReport,
    Coalition,
    CoalitionValueOracle,
    ValueFunction,
    make_sequence,
    _scorer,
)
from .errors import ConfigurationError, ContractViolation, EvaluationError
from .interventions import InterventionSpec, OccurrenceIntervention, OrderIntervention
from .validation import as_token_tuple


@dataclass(frozen=True)
class EstimatorConfig:
    """Sampling budget and stopping rule for the permutation estimator."""

    q_samples: int = 4
    g_samples: int = 5
    tolerance: float = 0.005
    max_permutations: int = 10000
    batch_size: int = 64
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.q_samples < 1 or self.g_samples < 1:
            raise ConfigurationError("q_samples and g_samples must be >= 1")
        if not 0.0 < self.tolerance < 1.0:
            raise ConfigurationError("tolerance must lie strictly between 0 and 1")
        if self.max_permutations < 1:
            raise ConfigurationError("max_permutations must be >= 1")
        if self.batch_size < 1 or self.workers < 1:
            raise ConfigurationError("batch_size and workers must be >= 1")

    @property
    def convergence_factor(self) -> float:
        """Alias for tolerance: the t in the SE <= t * attribution-range rule."""
        return self.tolerance


@dataclass(frozen=True)
class GlobalExplanationJob:
    """Template-aligned instances explained as one slot-level report."""

    instances: tuple
    model: object
    intervention: InterventionSpec
    value_fn: ValueFunction = None
    config: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        rows = tuple(as_token_tuple(t) for t in self.instances)
        if not rows:
            raise ConfigurationError("global explanation needs at least one instance")
        n = len(rows[0])
        for idx, row in enumerate(rows):
            if len(row) != n:
                raise ConfigurationError(
                    f"instances are not template-aligned: row 0 has {n} slots, "
                    f"row {idx} has {len(row)}"
                )
        object.__setattr__(self, "instances", rows)

    @property
    def slot_count(self) -> int:
        return len(self.instances[0])


class _RowSampler:
    """Builds the realized-sequence batch for one coalition of one instance."""

    def __init__(self, tokens, intervention: InterventionSpec):
        self.tokens = as_token_tuple(tokens)
        self.n = len(self.tokens)
        self.intervention = intervention
        intervention.occurrence._check_positions(self.n)
        self.fast = intervention.occurrence.kind in (
            "uniform_vocab", "fixed_token", "slot_distribution"
        )
        if self.fast:
            self.tokens_arr = np.asarray(self.tokens)
            g = intervention.occurrence
            if g.kind == "uniform_vocab":
                self.vocab_arr = np.asarray(g.vocab)
            elif g.kind == "fixed_token":
                self.vocab_arr = np.asarray([g.token])
            else:
                self.slot_arrs = [np.asarray(s) for s in g.slots]

    def draw_counts(self, occ_mask: int, ord_mask: int, config: EstimatorConfig):
        n = self.n
        retained_ord = [i for i in range(n) if ord_mask >> i & 1]
        retained_occ = [i for i in range(n) if occ_mask >> i & 1]
        nq = 1 if self.intervention.order.support_size(n, retained_ord) == 1 else config.q_samples
        ng = 1 if self.intervention.occurrence.is_degenerate(n, retained_occ) else config.g_samples
        return nq, ng, retained_ord, retained_occ

    def _draw_replacements(self, free, count, rng):
        g = self.intervention.occurrence
        if g.kind == "slot_distribution":
            cols = np.empty((count, len(free)), dtype=self.tokens_arr.dtype)
            for j, pos in enumerate(free):
                arr = self.slot_arrs[pos]
                cols[:, j] = arr[rng.integers(0, len(arr), size=count)]
            return cols
        return self.vocab_arr[rng.integers(0, len(self.vocab_arr), size=(count, len(free)))]

    def rows(self, occ_mask: int, ord_mask: int, config: EstimatorConfig, rng):
        """Realized sequences sampled for one coalition (nq * ng rows)."""
        n = self.n
        nq, ng, retained_ord, retained_occ = self.draw_counts(occ_mask, ord_mask, config)
        if self.fast:
            out = np.empty((nq * ng, n), dtype=self.tokens_arr.dtype)
            free = [i for i in range(n) if not occ_mask >> i & 1]
            r = 0
            for _ in range(nq):
                z = self.intervention.order.sample(n, retained_ord, rng)
                reps = self._draw_replacements(free, ng, rng) if free else None
                for k in range(ng):
                    x = self.tokens_arr.copy()
                    if free:
                        x[free] = reps[k]
                    out[r, z] = x
                    r += 1
            return out
        rows = []
        for _ in range(nq):
            z = self.intervention.order.sample(n, retained_ord, rng)
            for _ in range(ng):
                x = self.intervention.occurrence.sample(self.tokens, retained_occ, rng)
                realized = [None] * n
                for i in range(n):
                    realized[z[i]] = x[i]
                rows.append(realized)
        return rows


def _score_values(score, value_fn, rows, chunk: int, coalition=None) -> np.ndarray:
    out = np.empty(len(rows))
    for start in range(0, len(rows), chunk):
        block = rows[start:start + chunk]
        try:
            scores = score(block)
        except Exception as exc:
            raise EvaluationError(f"model evaluation failed: {exc}", coalition=coalition) from exc
        out[start:start + len(block)] = value_fn(scores)
    return out


def estimate_value(model, value_fn, seq, coalition: Coalition,
                   intervention: InterventionSpec, config: EstimatorConfig,
                   rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of one coalition's value under the (g, q) pair."""
    sequence = make_sequence(seq)
    if coalition.n != sequence.n:
        raise ContractViolation("coalition and sequence disagree on n")
    score, labels = _scorer(model)
    if value_fn is None:
        value_fn = ValueFunction.default_for(labels)
    sampler = _RowSampler(sequence.tokens, intervention)
    rows = sampler.rows(coalition.occurrence_mask, coalition.order_mask, config, rng)
    chunk = _effective_chunk(model, config)
    return float(_score_values(score, value_fn, rows, chunk, coalition).mean())


def _effective_chunk(model, config: EstimatorConfig) -> int:
    max_batch = getattr(model, "max_batch", None)
    if max_batch:
        return max(1, min(config.batch_size, int(max_batch)))
    return config.batch_size


def _unit_marginals(sampler, score, value_fn, num_walk: int,
                    feature_ids, config: EstimatorConfig, seed_key, chunk: int):
    """One permutation chain: per-feature marginals plus bookkeeping."""
    n = sampler.n
    rng = np.random.default_rng(seed_key)
    sigma = rng.permutation(num_walk)
    occ_mask = ord_mask = 0
    states = []
    for step in range(num_walk + 1):
        if step > 0:
            f = feature_ids[sigma[step - 1]]
            if f < n:
                occ_mask |= 1 << f
            else:
                ord_mask |= 1 << (f - n)
        states.append((occ_mask, ord_mask))
    if isinstance(sampler, _OracleSampler):
        chain = np.array([sampler.value(occ, order) for occ, order in states])
        rows_scored = len(states)
    else:
        all_rows = []
        bounds = [0]
        for occ, order in states:
            rows = sampler.rows(occ, order, config, rng)
            all_rows.append(rows)
            bounds.append(bounds[-1] + len(rows))
        if sampler.fast:
            stacked = np.concatenate(all_rows, axis=0)
        else:
            stacked = [row for block in all_rows for row in block]
        values = _score_values(score, value_fn, stacked, chunk,
                               Coalition(n, states[-1][0] | (states[-1][1] << n)))
        chain = np.array([
            values[bounds[s]:bounds[s + 1]].mean() for s in range(num_walk + 1)
        ])
        rows_scored = len(stacked)
    marginals = np.diff(chain)
    per_feature = np.zeros(2 * n)
    touched = np.zeros(2 * n, dtype=bool)
    for step, pos in enumerate(sigma):
        fid = feature_ids[pos]
        per_feature[fid] = marginals[step]
        touched[fid] = True
    return per_feature, touched, rows_scored, float(chain[0]), float(chain[-1])


class _OracleSampler:
    """Chain valuation straight from a coalition oracle (exact inner values)."""

    def __init__(self, oracle: CoalitionValueOracle):
        self.oracle = oracle
        self.n = oracle.n

    def value(self, occ_mask: int, ord_mask: int) -> float:
        return self.oracle.value_of_mask(occ_mask | (ord_mask << self.n))


def _run_units(unit_fn, total_units: int, workers: int, consume):
    """Evaluate units 0..total in order; consume returns True to stop early."""
    if workers <= 1:
        for u in range(total_units):
            if consume(u, unit_fn(u)):
                return
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        window = workers * 2
        futures = {}
        next_submit = 0
        while next_submit < min(window, total_units):
            futures[next_submit] = pool.submit(unit_fn, next_submit)
            next_submit += 1
        for u in range(total_units):
            result = futures.pop(u).result()
            if next_submit < total_units:
                futures[next_submit] = pool.submit(unit_fn, next_submit)
                next_submit += 1
            if consume(u, result):
                for f in futures.values():
                    f.cancel()
                return


def _sampled_run(model, value_fn, instances, intervention: InterventionSpec,
                 config: EstimatorConfig, walk: str = "all") -> AttributionReport:
    if isinstance(model, CoalitionValueOracle):
        n = model.n
        score = None
        chunk = config.batch_size
        samplers = [_OracleSampler(model)]
        if intervention is None:
            # metadata only: oracle values never touch the intervention pair
            intervention = InterventionSpec(
                OccurrenceIntervention.fixed(None), OrderIntervention("absolute")
            )
    else:
        rows = [as_token_tuple(t) for t in instances]
        n = len(rows[0])
        score, labels = _scorer(model)
        if hasattr(model, "handshake"):
            model.handshake()
        if value_fn is None:
            value_fn = ValueFunction.default_for(labels)
        chunk = _effective_chunk(model, config)
        samplers = None
    if walk == "occurrence":
        feature_ids = list(range(n))
        intervention = replace(intervention, order=OrderIntervention("identity"))
    else:
        feature_ids = list(range(2 * n))
    num_walk = len(feature_ids)
    if samplers is None:
        samplers = [_RowSampler(tokens, intervention) for tokens in rows]
    num_instances = len(samplers)
    total_units = config.max_permutations * num_instances

    p = 2 * n
    count = np.zeros(p, dtype=np.int64)
    mean = np.zeros(p)
    m2 = np.zeros(p)
    stats = {"evals": 0, "units": 0, "converged": False,
             "baseline_sum": 0.0, "full_sum": 0.0}
    eligible_after = max(2, num_instances)
    walk_mask = np.zeros(p, dtype=bool)
    walk_mask[feature_ids] = True

    def unit_fn(u: int):
        round_idx, inst_idx = divmod(u, num_instances)
        return _unit_marginals(
            samplers[inst_idx], score, value_fn, num_walk, feature_ids,
            config, [config.seed, inst_idx, round_idx], chunk,
        )

    def consume(u: int, result) -> bool:
        per_feature, touched, evals, v_empty, v_full = result
        stats["evals"] += evals
        stats["units"] += 1
        stats["baseline_sum"] += v_empty
        stats["full_sum"] += v_full
        idx = np.flatnonzero(touched)
        count[idx] += 1
        delta = per_feature[idx] - mean[idx]
        mean[idx] += delta / count[idx]
        m2[idx] += delta * (per_feature[idx] - mean[idx])
        if u + 1 < eligible_after:
            return False
        walked_counts = count[walk_mask]
        se = np.sqrt(np.maximum(m2[walk_mask], 0.0) / (walked_counts * (walked_counts - 1)))
        walked_means = mean[walk_mask]
        width = float(walked_means.max() - walked_means.min())
        if bool((se <= config.tolerance * width).all()):
            stats["converged"] = True
            return True
        return False

    _run_units(unit_fn, total_units, config.workers, consume)

    units = stats["units"]
    se_all = np.zeros(p)
    walked = count >= 2
    se_all[walked] = np.sqrt(
        np.maximum(m2[walked], 0.0) / (count[walked] * (count[walked] - 1))
    )
    return AttributionReport(
        occurrence_values=mean[:n].copy(),
        order_values=mean[n:].copy(),
        mode=intervention.mode,
        evaluation_count=stats["evals"],
        occurrence_stderr=se_all[:n].copy(),
        order_stderr=se_all[n:].copy(),
        seed=config.seed,
        converged=stats["converged"],
        permutations=units,
        baseline_value=stats["baseline_sum"] / max(units, 1),
        full_value=stats["full_sum"] / max(units, 1),
    )


def osv_sampled(model, value_fn=None, seq=None, intervention: InterventionSpec = None,
                config: EstimatorConfig = None) -> AttributionReport:
    """Sampled occurrence+order attributions for one instance.

    ``model`` may be a CoalitionValueOracle, in which case chain values are
    exact and only the permutation sampling is stochastic.
    """
    config = config or EstimatorConfig()
    if isinstance(model, CoalitionValueOracle):
        return _sampled_run(model, value_fn, [None], intervention, config, walk="all")
    if intervention is None:
        raise ConfigurationError("osv_sampled needs an InterventionSpec for model endpoints")
    return _sampled_run(model, value_fn, [make_sequence(seq).tokens],
                        intervention, config, walk="all")


def sv_sampled(model, value_fn, seq, g, config: EstimatorConfig = None) -> AttributionReport:
    """Sampled classic Shapley values over the n occurrence features only."""
    config = config or EstimatorConfig()
    intervention = InterventionSpec(occurrence=g, order=OrderIntervention("identity"))
    return _sampled_run(model, value_fn, [make_sequence(seq).tokens],
                        intervention, config, walk="occurrence")


def global_explain(job: GlobalExplanationJob, walk: str = "all") -> AttributionReport:
    """Slot-level attribution means pooled over template-aligned instances."""
    return _sampled_run(job.model, job.value_fn, list(job.instances),
                        job.intervention, job.config, walk=walk)
