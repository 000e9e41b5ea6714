"""Security layer: authentication, authorization decisions and accounting.

Authentication runs a pipeline: classify the requester's recent features
against the behavior model, score trust, pick the authentication mean the
policy rules prescribe for that capability/class combination, then verify
the presented credential under that mean.  Authorization asserts the request
context into a working snapshot of the store, runs the rule engine, and
combines every ``hasAccess`` / ``Obligation`` / ``Recommendation`` fact that
names the user or one of their groups.

Decision combining is conservative: any deny wins over any permit, and a
request nothing rules on is denied (closed world).  Every authentication and
authorization, and every flagged anomaly, appends one entry to an append-only
audit log.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

from .behavior import BehaviorModel, FeatureVector, classify, trust_score
from .engine import infer_fixpoint
from .facts import Constant, Fact, FactStore, ground
from .rules import Rule

PASSWORD_MEAN = "username/password"
TAG_MEAN = "tag-mean"

DEFAULT_TRUST_THRESHOLD = 0.5
DEFAULT_ANOMALY_THRESHOLD = 0.5
DEFAULT_AUTH_MEAN = PASSWORD_MEAN

# Capability severity -> assistance priority.  Configurable; these defaults
# rank cognitive impairment highest.
DEFAULT_PRIORITY_TABLE = {
    "cognitive": 3,
    "visual": 2,
    "hearing": 2,
    "physical": 1,
    "no": 0,
    "none": 0,
}

COGNITIVE_GROUP = "Group3"
EMERGENCY_OBLIGATION = "signal-emergency"

PERMIT = "permit"
DENY = "deny"

_TIME_RE = re.compile(r"\d\d\.\d\d\Z")

# Context components asserted per request; the newest request replaces these
# for the user in the evaluation snapshot (history stays in the live store).
_CONTEXT_PREDICATES = ("AskedService", "UsedDevice", "HasContext", "HasTime",
                      "HasLocation", "HasActivity", "HasEnvironment")


class PdpError(ValueError):
    pass


class AuditError(RuntimeError):
    """Appending to the audit log failed; decisions are not rolled back."""


@dataclass(frozen=True)
class Credential:
    kind: str    # password | tag
    secret: str

    def __post_init__(self) -> None:
        if self.kind not in ("password", "tag"):
            raise PdpError(f"unknown credential kind: {self.kind!r}")
        if self.kind == "password" and not self.secret:
            raise PdpError("password credential must have a non-empty secret")


@dataclass
class AuthnRequest:
    user: str
    credential: Optional[Credential]
    features: FeatureVector = field(default_factory=FeatureVector)


@dataclass
class AuthnResult:
    authenticated: str       # yes | no
    mean_used: str
    trust: float
    behavior_class: str
    reason: Optional[str] = None


@dataclass
class AuthzRequest:
    user: str
    service: str
    device: Optional[str] = None
    context: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        time_value = self.context.get("time")
        if time_value is not None and not _TIME_RE.fullmatch(time_value):
            raise PdpError(f"context time must look like HH.MM, got {time_value!r}")


@dataclass
class Decision:
    effect: str                 # permit | deny
    obligations: List[str] = field(default_factory=list)
    recommendations: List[str] = field(default_factory=list)
    priority: int = 0
    rationale: List[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Audit log: `seq|iso-time|kind|subject|outcome|detail`, one entry per line.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditEntry:
    seq: int
    time: str
    kind: str        # authn | authz | anomaly
    subject: str
    detail: str
    outcome: str


def _escape_detail(detail: str) -> str:
    return (detail.replace("\\", "\\\\").replace("|", "\\|")
            .replace("\n", "\\n"))


def _unescape_detail(detail: str) -> str:
    out = []
    i = 0
    while i < len(detail):
        ch = detail[i]
        if ch == "\\" and i + 1 < len(detail):
            nxt = detail[i + 1]
            out.append("\n" if nxt == "n" else nxt)
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def serialize_entry(entry: AuditEntry) -> str:
    return "|".join([str(entry.seq), entry.time, entry.kind, entry.subject,
                     entry.outcome, _escape_detail(entry.detail)])


def parse_entry(line: str) -> AuditEntry:
    parts = line.split("|", 5)
    if len(parts) != 6:
        raise AuditError(f"malformed audit line: {line!r}")
    seq, time, kind, subject, outcome, detail = parts
    return AuditEntry(seq=int(seq), time=time, kind=kind, subject=subject,
                      detail=_unescape_detail(detail), outcome=outcome)


class AuditLog:
    """Append-only accounting log, optionally backed by a file.

    Sequence numbers increase gap-free from 1 within a log; a log opened on
    an existing file continues the sequence found there.
    """

    def __init__(self, path=None, *, truncate: bool = False):
        self._path = path
        self._entries: List[AuditEntry] = []
        if path is not None:
            if truncate:
                open(path, "w", encoding="utf-8").close()
            elif os.path.exists(path):
                self._entries = list(self.load(path))

    def append(self, kind: str, subject: str, outcome: str,
               detail: str = "") -> AuditEntry:
        entry = AuditEntry(
            seq=len(self._entries) + 1,
            time=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            kind=kind,
            subject=subject,
            detail=detail,
            outcome=outcome,
        )
        if self._path is not None:
            try:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(serialize_entry(entry) + "\n")
            except OSError as err:
                raise AuditError(f"audit append failed: {err}") from err
        self._entries.append(entry)
        return entry

    def entries(self) -> Tuple[AuditEntry, ...]:
        return tuple(self._entries)

    @property
    def path(self):
        return self._path

    @staticmethod
    def load(path) -> List[AuditEntry]:
        with open(path, "r", encoding="utf-8") as fh:
            return [parse_entry(line) for line in fh.read().splitlines() if line]


def record_audit(log: AuditLog, kind: str, subject: str, outcome: str,
                 detail: str = "") -> int:
    """Append one entry; returns the sequence number it received."""
    return log.append(kind, subject, outcome, detail).seq


# ---------------------------------------------------------------------------
# Credentials: lines `user:kind:record`; passwords stored as salt$sha256.
# ---------------------------------------------------------------------------

def hash_password(secret: str, salt: Optional[str] = None) -> str:
    salt = salt if salt is not None else os.urandom(8).hex()
    digest = hashlib.sha256(f"{salt}:{secret}".encode("utf-8")).hexdigest()
    return f"{salt}${digest}"


def verify_password(secret: str, record: str) -> bool:
    salt, _, digest = record.partition("$")
    if not digest:
        return False
    probe = hashlib.sha256(f"{salt}:{secret}".encode("utf-8")).hexdigest()
    return hmac.compare_digest(probe, digest)


def load_credentials(text: str) -> Dict[str, Tuple[str, str]]:
    out: Dict[str, Tuple[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(":", 2)
        if len(parts) != 3:
            raise PdpError(f"credentials line {lineno}: expected user:kind:record")
        user, kind, record = parts
        out[user] = (kind, record)
    return out


def load_credentials_file(path) -> Dict[str, Tuple[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_credentials(fh.read())


# ---------------------------------------------------------------------------
# Authentication
# ---------------------------------------------------------------------------

def _derive_auth_mean(profile_facts: List[Fact], rules: List[Rule],
                      default_mean: str) -> str:
    scratch = FactStore()
    for fact in profile_facts:
        scratch.assert_fact(fact)
    report = infer_fixpoint(scratch, rules)
    for fact in report.derived:
        if fact.predicate.lower() == "authentication" and len(fact.args) == 1:
            return fact.args[0].text()
    return default_mean


def select_auth_mean(capability: str, behavior_class: str, rules: List[Rule],
                     default_mean: str = DEFAULT_AUTH_MEAN) -> str:
    """Authentication mean the rules prescribe for a capability and class.

    Pure: same inputs, same mean.  When several means derive, the first by
    rule order wins; when none does, the configured default applies.
    """
    subject = "candidate"
    return _derive_auth_mean(
        [ground("HasRecognizedBehavior", subject, behavior_class),
         ground("HasCapability", subject, capability)],
        rules, default_mean)


def _capabilities_of(store: FactStore, user: str) -> List[Constant]:
    user_constant = Constant.symbol(user)
    values = []
    for fact in store.facts_for("HasCapability"):
        if len(fact.args) == 2 and fact.args[0] == user_constant:
            values.append(fact.args[1])
    return values


def _verify_credential(mean: str, credential: Optional[Credential],
                       entry: Optional[Tuple[str, str]]):
    if entry is None:
        return False, "unknown user in credentials database"
    if credential is None:
        return False, "no credential presented"
    stored_kind, record = entry
    wanted_kind = {PASSWORD_MEAN: "password", TAG_MEAN: "tag"}.get(mean,
                                                                   stored_kind)
    if credential.kind != wanted_kind or stored_kind != wanted_kind:
        return False, f"mean {mean} requires a {wanted_kind} credential"
    if wanted_kind == "password":
        if verify_password(credential.secret, record):
            return True, None
        return False, "password mismatch"
    if hmac.compare_digest(credential.secret, record):
        return True, None
    return False, "tag mismatch"


def _replace_user_facts(store: FactStore, predicate: str, user: str) -> None:
    user_constant = Constant.symbol(user)
    for fact in store.facts_for(predicate):
        if fact.args and fact.args[0] == user_constant:
            store.retract_fact(fact.predicate, fact.args)


def authenticate(req: AuthnRequest, store: FactStore, rules: List[Rule],
                 model: BehaviorModel, credentials: Dict[str, Tuple[str, str]],
                 *, trust_threshold: float = DEFAULT_TRUST_THRESHOLD,
                 default_mean: str = DEFAULT_AUTH_MEAN,
                 audit_log: Optional[AuditLog] = None) -> AuthnResult:
    """Authenticate a user from behavior plus credential.

    Yes requires both gates: trust at or above the threshold and a verified
    credential under the selected mean.  The outcome is asserted into the
    store as ``Authenticated(user, yes|no)`` along with the recognized
    behavior class; earlier outcomes for the same user are replaced.
    """
    behavior_class, _ = classify(model, req.features)
    trust = trust_score(model, behavior_class, req.features)

    profile = [ground("HasRecognizedBehavior", req.user, behavior_class)]
    for value in _capabilities_of(store, req.user):
        profile.append(ground("HasCapability", req.user, value))
    mean = _derive_auth_mean(profile, rules, default_mean)

    verified, reason = _verify_credential(mean, req.credential,
                                          credentials.get(req.user))
    if verified and trust < trust_threshold:
        verified = False
        reason = f"trust {trust:.3f} below threshold {trust_threshold}"
    answer = "yes" if verified else "no"

    _replace_user_facts(store, "Authenticated", req.user)
    _replace_user_facts(store, "HasRecognizedBehavior", req.user)
    store.assert_fact(ground("Authenticated", req.user, answer))
    store.assert_fact(ground("HasRecognizedBehavior", req.user, behavior_class))

    if audit_log is not None:
        detail = f"mean={mean} class={behavior_class} trust={trust:.3f}"
        if reason:
            detail += f" reason={reason}"
        audit_log.append("authn", req.user, answer, detail)
    return AuthnResult(authenticated=answer, mean_used=mean, trust=trust,
                       behavior_class=behavior_class, reason=reason)


# ---------------------------------------------------------------------------
# Group assignment and authorization
# ---------------------------------------------------------------------------

def assign_group(store: FactStore, rules: List[Rule]) -> List[Fact]:
    """Materialize the store and return the newly derived group memberships."""
    report = infer_fixpoint(store, rules)
    return [f for f in report.derived
            if f.predicate.lower() == "behaviorcapability"]


def groups_of(store: FactStore, user: str) -> List[Constant]:
    user_constant = Constant.symbol(user)
    groups = []
    for fact in store.facts_for("BehaviorCapability"):
        if len(fact.args) == 2 and fact.args[0] == user_constant:
            groups.append(fact.args[1])
    return groups


def _request_facts(req: AuthzRequest) -> List[Fact]:
    facts = [ground("AskedService", req.user, req.service)]
    if req.device:
        facts.append(ground("UsedDevice", req.user, req.device))
    component_predicate = {"time": "HasTime", "location": "HasLocation",
                           "activity": "HasActivity",
                           "environment": "HasEnvironment"}
    for component, value in req.context.items():
        predicate = component_predicate.get(component)
        if predicate is None:
            raise PdpError(f"unknown context component: {component!r}")
        facts.append(ground(predicate, req.user, value))
        facts.append(ground("HasContext", req.user, value))
    return facts


def _priority_for(store: FactStore, user: str, table: Dict[str, int]) -> int:
    priorities = [table.get(value.text().lower(), 0)
                  for value in _capabilities_of(store, user)]
    return max(priorities, default=0)


def _collect(working: FactStore, subjects: set):
    permits, denies = [], []
    obligations: List[str] = []
    recommendations: List[str] = []
    rationale: List[str] = []

    def note_rationale(fact: Fact) -> None:
        label = fact.rule_id if fact.rule_id else "asserted"
        if label not in rationale:
            rationale.append(label)

    for fact in working.facts_for("hasAccess"):
        if len(fact.args) < 2 or fact.args[0].key() not in subjects:
            continue
        effect = fact.args[-1].text().lower()
        if effect == PERMIT:
            permits.append(fact)
            note_rationale(fact)
        elif effect == DENY:
            denies.append(fact)
            note_rationale(fact)
    for predicate, sink in (("Obligation", obligations),
                            ("Recommendation", recommendations)):
        for fact in working.facts_for(predicate):
            if len(fact.args) == 2 and fact.args[0].key() in subjects:
                action = fact.args[1].text()
                if action not in sink:
                    sink.append(action)
                note_rationale(fact)
    return permits, denies, obligations, recommendations, rationale


def authorize(req: AuthzRequest, store: FactStore, rules: List[Rule],
              *, priority_table: Optional[Dict[str, int]] = None,
              audit_log: Optional[AuditLog] = None) -> Decision:
    """Evaluate an access request against the policy rules.

    The request context is asserted into a working snapshot (replacing any
    earlier context facts for the user, so the newest request is what rules
    see), inference runs, and the decision facts naming the user or one of
    the user's groups are combined deny-overrides with a deny default.  The
    live store keeps the request facts as history; derived decision facts
    stay in the snapshot.
    """
    table = priority_table if priority_table is not None else DEFAULT_PRIORITY_TABLE
    if not store.holds("Authenticated", req.user, "yes"):
        decision = Decision(effect=DENY, priority=_priority_for(store, req.user, table),
                            rationale=["not-authenticated"])
        if audit_log is not None:
            audit_log.append("authz", req.user, DENY,
                             f"service={req.service} reason=not-authenticated")
        return decision

    request_facts = _request_facts(req)
    working = store.snapshot()
    for predicate in _CONTEXT_PREDICATES:
        _replace_user_facts(working, predicate, req.user)
    for fact in request_facts:
        working.assert_fact(fact)
    infer_fixpoint(working, rules)

    subjects = {Constant.symbol(req.user).key()}
    subjects.update(g.key() for g in groups_of(working, req.user))
    permits, denies, obligations, recommendations, rationale = _collect(
        working, subjects)

    if denies:
        effect = DENY
    elif permits:
        effect = PERMIT
    else:
        effect = DENY
        rationale = ["default-deny"]

    decision = Decision(effect=effect, obligations=obligations,
                        recommendations=recommendations,
                        priority=_priority_for(store, req.user, table),
                        rationale=rationale)

    for fact in request_facts:  # history for behavioral rules
        store.assert_fact(fact)
    if audit_log is not None:
        audit_log.append("authz", req.user, effect,
                         f"service={req.service} rationale={','.join(rationale)}")
    return decision


# ---------------------------------------------------------------------------
# Anomaly detection
# ---------------------------------------------------------------------------

def detect_anomaly(model: BehaviorModel, class_id: str, recent: FeatureVector,
                   threshold: float = DEFAULT_ANOMALY_THRESHOLD) -> bool:
    """Flag when recent behavior no longer matches the recognized class."""
    return trust_score(model, class_id, recent) < threshold


def flag_anomaly(store: FactStore, model: BehaviorModel, user: str,
                 class_id: str, recent: FeatureVector,
                 threshold: float = DEFAULT_ANOMALY_THRESHOLD,
                 audit_log: Optional[AuditLog] = None) -> bool:
    """Run anomaly detection and record the consequences.

    A flagged event appends one ``anomaly`` audit entry; for users in the
    cognitive-impairment group it additionally asserts an
    ``Obligation(user, signal-emergency)`` fact so the next authorization
    carries the emergency obligation.
    """
    flagged = detect_anomaly(model, class_id, recent, threshold)
    if not flagged:
        return False
    trust = trust_score(model, class_id, recent)
    if audit_log is not None:
        audit_log.append("anomaly", user, "flagged",
                         f"class={class_id} trust={trust:.3f}")
    cognitive = any(g.text() == COGNITIVE_GROUP for g in groups_of(store, user))
    if cognitive:
        store.assert_fact(ground("Obligation", user, EMERGENCY_OBLIGATION))
    return True
