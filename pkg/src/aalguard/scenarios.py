"""Built-in scenario fixtures and the pipeline harness that runs them.

Each scenario models one resident in a risky situation: a hearing-impaired
user asking to read an alert (served visually), a visually-impaired user
asking the same (served audibly), and a cognitively-impaired user trying to
open the front door at midnight (denied, with an emergency obligation raised
by the wandering detected in their recent movement stream).

A run walks the whole pipeline: ingest events, extract features, classify
and authenticate, assign groups, check the recent stream for anomalies, then
authorize the scenario request and compare against the expected outcome.
Reports are deterministic: same fixtures, same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Tuple

from . import behavior, pdp
from .config import Config
from .facts import FactStore, load_facts
from .rules import parse_ruleset

SCENARIO_NAMES = ("deaf", "blind", "alzheimer")

# Fixture secrets live here so the harness can present them; the credentials
# file stores only the salted hashes (and the tag token).
FIXTURE_SECRETS = {
    "u1": pdp.Credential("password", "door-chime-7"),
    "u2": pdp.Credential("password", "braille-lane-9"),
    "u3": pdp.Credential("tag", "tag-u3-0042"),
}


@dataclass(frozen=True)
class ScenarioFixture:
    name: str
    user: str
    service: str
    device: Optional[str]
    context: Dict[str, str]
    expected_effect: str
    expected_recommendations: Tuple[str, ...] = ()
    expected_obligations: Tuple[str, ...] = ()
    expects_anomaly: bool = False


SCENARIOS = {
    "deaf": ScenarioFixture(
        name="deaf", user="u1", service="ReadAlert", device="VisualAid",
        context={"time": "10.00", "location": "livingroom"},
        expected_effect="permit",
        expected_recommendations=("visual-alert",),
    ),
    "blind": ScenarioFixture(
        name="blind", user="u2", service="ReadAlert", device="AudioAid",
        context={"time": "10.00", "location": "livingroom"},
        expected_effect="permit",
        expected_recommendations=("audible-alert",),
    ),
    "alzheimer": ScenarioFixture(
        name="alzheimer", user="u3", service="OpenDoor", device=None,
        context={"time": "00.00", "location": "corridor"},
        expected_effect="deny",
        expected_obligations=(pdp.EMERGENCY_OBLIGATION,),
        expects_anomaly=True,
    ),
}


def fixture_text(*parts: str) -> str:
    node = resources.files("aalguard").joinpath("fixtures")
    for part in parts:
        node = node.joinpath(part)
    return node.read_text(encoding="utf-8")


def load_fixture_rules() -> list:
    return parse_ruleset(fixture_text("rules", "policy_core.swl")
                         + "\n" + fixture_text("rules", "assistive_actions.swl"))


def load_core_rules() -> list:
    return parse_ruleset(fixture_text("rules", "policy_core.swl"))


def load_fixture_model(distance_floor: float) -> behavior.BehaviorModel:
    return behavior.load_model(fixture_text("model_seed.txt"),
                               distance_floor=distance_floor)


def load_fixture_credentials() -> Dict[str, Tuple[str, str]]:
    return pdp.load_credentials(fixture_text("credentials.txt"))


@dataclass
class ScenarioRun:
    """Everything a scenario run produced, for reporting and inspection."""

    name: str
    passed: bool
    lines: List[str]
    store: FactStore
    authn: pdp.AuthnResult
    decision: pdp.Decision
    anomaly_flagged: bool
    audit_log: pdp.AuditLog


def _scenario_events(name: str) -> list:
    return behavior.load_events(fixture_text("scenarios", name, "events.csv"))


def _recent_events(name: str) -> list:
    if name == "alzheimer":
        return behavior.load_events(
            fixture_text("scenarios", name, "wandering.csv"))
    return _scenario_events(name)


def run_scenario(name: str, audit_path=None,
                 config: Optional[Config] = None) -> ScenarioRun:
    """Run one named scenario end to end against the packaged fixtures."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario: {name!r}")
    fixture = SCENARIOS[name]
    config = config or Config()

    store = load_facts(fixture_text("scenarios", name, "facts.kb"))
    rules = load_fixture_rules()
    model = load_fixture_model(config.distance_floor)
    credentials = load_fixture_credentials()
    audit_log = pdp.AuditLog(audit_path, truncate=True) if audit_path \
        else pdp.AuditLog()

    events = _scenario_events(name)
    features = behavior.extract_features(events, fixture.user)

    authn = pdp.authenticate(
        pdp.AuthnRequest(user=fixture.user,
                         credential=FIXTURE_SECRETS.get(fixture.user),
                         features=features),
        store, rules, model, credentials,
        trust_threshold=config.trust_threshold,
        default_mean=config.default_auth_mean,
        audit_log=audit_log)

    pdp.assign_group(store, rules)
    groups = [g.text() for g in pdp.groups_of(store, fixture.user)]

    recent = behavior.extract_features(_recent_events(name), fixture.user)
    flagged = pdp.flag_anomaly(store, model, fixture.user, authn.behavior_class,
                               recent, threshold=config.anomaly_threshold,
                               audit_log=audit_log)

    decision = pdp.authorize(
        pdp.AuthzRequest(user=fixture.user, service=fixture.service,
                         device=fixture.device, context=dict(fixture.context)),
        store, rules, priority_table=config.priority_table,
        audit_log=audit_log)

    checks = [
        ("authenticated", authn.authenticated == "yes"),
        ("effect", decision.effect == fixture.expected_effect),
        ("recommendations",
         sorted(decision.recommendations) == sorted(fixture.expected_recommendations)),
        ("obligations",
         sorted(decision.obligations) == sorted(fixture.expected_obligations)),
        ("anomaly", flagged == fixture.expects_anomaly),
    ]
    passed = all(ok for _, ok in checks)

    lines = [
        f"scenario {name}: authenticate {fixture.user} -> {authn.authenticated}"
        f" (mean {authn.mean_used}, class {authn.behavior_class},"
        f" trust {authn.trust:.2f})",
        f"scenario {name}: groups -> {', '.join(groups) if groups else '(none)'}",
        f"scenario {name}: anomaly -> {'flagged' if flagged else 'clear'}",
        f"scenario {name}: decision -> {decision.effect}"
        f" priority={decision.priority}"
        f" obligations=[{', '.join(decision.obligations)}]"
        f" recommendations=[{', '.join(decision.recommendations)}]",
    ]
    for label, ok in checks:
        if not ok:
            lines.append(f"scenario {name}: check {label} FAILED")
    lines.append(f"scenario {name}: {'PASS' if passed else 'FAIL'}")

    return ScenarioRun(name=name, passed=passed, lines=lines, store=store,
                       authn=authn, decision=decision, anomaly_flagged=flagged,
                       audit_log=audit_log)


def prime_store(store: FactStore, rules, model, credentials, audit_log=None,
                config: Optional[Config] = None) -> None:
    """Warm a shared store with the three fixture residents.

    Loads each scenario's profile facts, authenticates every resident from
    their fixture stream, assigns groups, and runs the anomaly check on the
    recent stream, so a serving process can answer the scenario authorization
    requests straight away.
    """
    config = config or Config()
    for name in SCENARIO_NAMES:
        load_facts(fixture_text("scenarios", name, "facts.kb"), store)
    for name in SCENARIO_NAMES:
        fixture = SCENARIOS[name]
        events = _scenario_events(name)
        features = behavior.extract_features(events, fixture.user)
        pdp.authenticate(
            pdp.AuthnRequest(user=fixture.user,
                             credential=FIXTURE_SECRETS.get(fixture.user),
                             features=features),
            store, rules, model, credentials,
            trust_threshold=config.trust_threshold,
            default_mean=config.default_auth_mean,
            audit_log=audit_log)
    pdp.assign_group(store, rules)
    for name in SCENARIO_NAMES:
        fixture = SCENARIOS[name]
        recent = behavior.extract_features(_recent_events(name), fixture.user)
        class_id, _ = behavior.classify(
            model, behavior.extract_features(_scenario_events(name), fixture.user))
        pdp.flag_anomaly(store, model, fixture.user, class_id, recent,
                         threshold=config.anomaly_threshold,
                         audit_log=audit_log)
