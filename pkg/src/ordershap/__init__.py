"""Occurrence- and order-feature Shapley attributions for sequence classifiers."""

from .core import (
    AttributionReport,
    Coalition,
    CoalitionValueOracle,
    TokenSequence,
    ValueFunction,
    make_sequence,
    marginal_contribution,
    osv_exact,
    permutation_marginals,
    register_value_function,
    shapley_from_value_table,
    shapley_weights,
    sv_exact,
)
from .bridge import InProcessEndpoint, SubprocessEndpoint, TcpEndpoint, resolve_endpoint
from .errors import (
    BridgeError,
    CapacityError,
    ConfigurationError,
    ContractViolation,
    DataError,
    EvaluationError,
    HandshakeError,
    OrderShapError,
    ProtocolError,
    TransportError,
    UndefinedCorrelationError,
    UnsupportedConfigurationError,
)
from .estimators import (
    EstimatorConfig,
    GlobalExplanationJob,
    estimate_value,
    global_explain,
    osv_sampled,
    sv_sampled,
)
from .explainer import OrderShapleyExplainer
from .interventions import (
    InterventionSpec,
    OccurrenceIntervention,
    OrderIntervention,
    realize,
    sample_occurrence,
    sample_order_absolute,
    sample_order_relative,
)
from .models import RuleModel, TokenFractionStub, task_rule_model
from .synth import (
    GroundTruth,
    SyntheticDatasetSpec,
    generate_dataset,
    pearson,
    select_w1,
    transform_append_phrase,
    transform_hans_star,
    transform_prepend_symbol,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
