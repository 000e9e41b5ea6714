"""Behavior- and capability-aware access control for assisted living.

The package authenticates residents of an instrumented home from their
sensor-observed behavior plus a credential, reasons over a fact base with
forward-chained Horn rules, and answers access requests with
permit/deny decisions carrying obligations, recommendations, trust and
priority values.
"""

from .behavior import (
    BehaviorClass,
    BehaviorModel,
    FeatureVector,
    SensorEvent,
    classify,
    extract_features,
    holding_time,
    moving_time,
    trust_score,
    update_class,
)
from .engine import (
    Conflict,
    Derivation,
    InferenceReport,
    check_consistency,
    explain,
    infer_fixpoint,
)
from .facts import (
    Constant,
    Fact,
    FactStore,
    Variable,
    assert_fact,
    ground,
    load_facts,
    match_pattern,
    retract_fact,
    save_facts,
)
from .pdp import (
    AuditLog,
    AuthnRequest,
    AuthnResult,
    AuthzRequest,
    Credential,
    Decision,
    authenticate,
    authorize,
    assign_group,
    detect_anomaly,
    flag_anomaly,
    record_audit,
    select_auth_mean,
)
from .query import ConjunctiveQuery, eval_query, parse_query
from .rules import Atom, Rule, format_rule, parse_rule, parse_ruleset, validate_rule

__version__ = "0.1.0"
