"""Ground-fact storage for the smart-environment knowledge base.

Facts are ground predicates over one to three constant terms, e.g.
``HasCapability(u1, "hearing")``.  The store keeps one copy of each fact,
indexes by predicate, tracks where inferred facts came from, and reads and
writes a flat text format (one fact per line, trailing period, ``#``
comments).

Two interoperability rules shape equality here: predicate names compare
case-insensitively (the source rule corpus spells the same relation several
ways), and quoted strings compare equal to bare symbols with the same text
(``class2`` and ``"class2"`` name the same behavior class).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

SYMBOL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_/.\-]*\Z")
VARIABLE_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?\Z")

MAX_ARITY = 3

ASSERTED = "asserted"
INFERRED = "inferred"

SYMBOL = "symbol"
STRING = "string"
NUMBER = "number"

# Canonical spellings for the ontology relations the policy rules use.  The
# store registers additional predicates on first sight; these seeds make sure
# the mixed spellings found in the rule corpus all canonicalize the same way.
DEFAULT_VOCABULARY = (
    "HasCapability",
    "HasActivity",
    "HasLocation",
    "HasTime",
    "HasRecognizedBehavior",
    "BehaviorCapability",
    "AskedService",
    "UsedDevice",
    "HasContext",
    "HasEnvironment",
    "Authenticated",
    "Authentication",
    "hasAccess",
    "Username",
    "Password",
    "Obligation",
    "Recommendation",
    "TrustValue",
    "PriorityValue",
)


class FactError(ValueError):
    """Base class for knowledge-base errors."""


class ArityError(FactError):
    """Fact or pattern has zero arguments or more than three."""


class FactParseError(FactError):
    """A fact file line could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Constant:
    """A ground term: bare symbol, quoted string, or decimal number."""

    kind: str
    value: object  # str for symbol/string, float for number

    @classmethod
    def symbol(cls, text: str) -> "Constant":
        if not SYMBOL_RE.fullmatch(text):
            raise FactError(f"invalid symbol: {text!r}")
        return cls(SYMBOL, text)

    @classmethod
    def string(cls, text: str) -> "Constant":
        return cls(STRING, text)

    @classmethod
    def number(cls, value: float) -> "Constant":
        value = float(value)
        if not math.isfinite(value):
            raise FactError(f"number constant must be finite, got {value!r}")
        return cls(NUMBER, value)

    def key(self) -> tuple:
        # Strings and symbols compare by text alone; numbers stay separate.
        if self.kind == NUMBER:
            return (NUMBER, self.value)
        return ("text", self.value)

    def text(self) -> str:
        """The plain value without quoting."""
        if self.kind == NUMBER:
            return format_number(self.value)
        return str(self.value)

    def render(self) -> str:
        """Source form: strings quoted and escaped, everything else bare."""
        if self.kind == STRING:
            escaped = str(self.value).replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        return self.text()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Constant) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"Constant({self.render()})"


@dataclass(frozen=True)
class Variable:
    """A ``?name`` placeholder inside a pattern or rule atom."""

    name: str

    def __post_init__(self) -> None:
        if not VARIABLE_RE.fullmatch(self.name):
            raise FactError(f"invalid variable name: {self.name!r}")

    def render(self) -> str:
        return f"?{self.name}"


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def coerce_constant(value: object) -> Constant:
    """Best-effort conversion of a raw Python value to a Constant.

    Strings become symbols when they scan as one, otherwise quoted strings;
    the two compare equal anyway, so the choice only affects rendering.
    """
    if isinstance(value, Constant):
        return value
    if isinstance(value, bool):
        return Constant.symbol("yes" if value else "no")
    if isinstance(value, (int, float)):
        return Constant.number(float(value))
    text = str(value)
    if SYMBOL_RE.fullmatch(text):
        return Constant.symbol(text)
    return Constant.string(text)


@dataclass(frozen=True, eq=False)
class Fact:
    """A ground predicate over 1-3 constants, asserted or inferred."""

    predicate: str
    args: tuple
    origin: str = ASSERTED
    rule_id: Optional[str] = None

    def __post_init__(self) -> None:
        if not SYMBOL_RE.fullmatch(self.predicate):
            raise FactError(f"invalid predicate name: {self.predicate!r}")
        args = tuple(self.args)
        if not 1 <= len(args) <= MAX_ARITY:
            raise ArityError(
                f"{self.predicate}: arity {len(args)} outside 1..{MAX_ARITY}"
            )
        for a in args:
            if not isinstance(a, Constant):
                raise FactError(f"fact argument is not a Constant: {a!r}")
        object.__setattr__(self, "args", args)
        if self.origin not in (ASSERTED, INFERRED):
            raise FactError(f"unknown origin: {self.origin!r}")

    def key(self) -> tuple:
        return (self.predicate.lower(), tuple(a.key() for a in self.args))

    def render(self) -> str:
        return f"{self.predicate}({', '.join(a.render() for a in self.args)})"

    def __eq__(self, other: object) -> bool:
        # Origin-insensitive: the same ground atom is the same fact.
        return isinstance(other, Fact) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"Fact({self.render()})"


def ground(predicate: str, *values: object, origin: str = ASSERTED,
           rule_id: Optional[str] = None) -> Fact:
    """Build a fact from raw Python values."""
    return Fact(predicate, tuple(coerce_constant(v) for v in values),
                origin=origin, rule_id=rule_id)


def unify_against_fact(predicate: str, terms, fact: Fact, binding: dict):
    """Extend ``binding`` so that (predicate, terms) matches ``fact``.

    Returns the extended binding dict, or None if the fact does not match.
    Repeated variables must bind to equal constants.
    """
    if fact.predicate.lower() != predicate.lower():
        return None
    if len(fact.args) != len(terms):
        return None
    out = dict(binding)
    for term, arg in zip(terms, fact.args):
        if isinstance(term, Variable):
            bound = out.get(term.name)
            if bound is None:
                out[term.name] = arg
            elif bound != arg:
                return None
        elif isinstance(term, Constant):
            if term != arg:
                return None
        else:
            raise FactError(f"pattern term is neither Variable nor Constant: {term!r}")
    return out


@dataclass
class Justification:
    """Why an inferred fact holds: the rule that fired and its premises."""

    rule_id: Optional[str]
    premises: tuple


class FactStore:
    """Set of ground facts with a predicate index and provenance records.

    Single-writer, multiple-reader contract: callers serialize mutations;
    readers that need a stable view take a :meth:`snapshot` first.
    Justifications recorded here are not truth-maintained across retraction;
    inference is re-run on a fresh snapshot instead.
    """

    def __init__(self, vocabulary: Iterable[str] = DEFAULT_VOCABULARY):
        self._facts: dict = {}          # key -> Fact, insertion ordered
        self._index: dict = {}          # predicate lower -> dict key -> Fact
        self._canon: dict = {}          # predicate lower -> first-seen spelling
        self._justifications: dict = {}  # key -> Justification
        for name in vocabulary:
            self._canon.setdefault(name.lower(), name)

    def __len__(self) -> int:
        return len(self._facts)

    def __iter__(self) -> Iterator[Fact]:
        return iter(self._facts.values())

    def __contains__(self, fact: Fact) -> bool:
        return fact.key() in self._facts

    def facts(self) -> tuple:
        return tuple(self._facts.values())

    def canonical_predicate(self, name: str) -> str:
        return self._canon.setdefault(name.lower(), name)

    def facts_for(self, predicate: str) -> tuple:
        return tuple(self._index.get(predicate.lower(), {}).values())

    def get(self, predicate: str, args) -> Optional[Fact]:
        probe = Fact(predicate, tuple(coerce_constant(a) for a in args))
        return self._facts.get(probe.key())

    def holds(self, predicate: str, *values: object) -> bool:
        return self.get(predicate, values) is not None

    def assert_fact(self, fact: Fact) -> bool:
        """Insert a fact; returns True iff it was not already present.

        Re-asserting an inferred fact as asserted upgrades its origin
        (asserted wins) but still returns False.
        """
        canonical = self.canonical_predicate(fact.predicate)
        if canonical != fact.predicate:
            fact = Fact(canonical, fact.args, origin=fact.origin,
                        rule_id=fact.rule_id)
        key = fact.key()
        existing = self._facts.get(key)
        if existing is not None:
            if existing.origin == INFERRED and fact.origin == ASSERTED:
                upgraded = Fact(existing.predicate, existing.args,
                                origin=ASSERTED, rule_id=None)
                self._facts[key] = upgraded
                self._index[fact.predicate.lower()][key] = upgraded
                self._justifications.pop(key, None)
            return False
        self._facts[key] = fact
        self._index.setdefault(fact.predicate.lower(), {})[key] = fact
        return True

    def retract_fact(self, predicate: str, args) -> bool:
        """Remove a fact; returns True iff it was present.

        Facts inferred from it stay (no truth maintenance); re-run inference
        on a fresh snapshot when that matters.
        """
        try:
            probe = Fact(predicate, tuple(coerce_constant(a) for a in args))
        except ArityError:
            return False
        key = probe.key()
        if key not in self._facts:
            return False
        del self._facts[key]
        bucket = self._index.get(predicate.lower())
        if bucket is not None:
            bucket.pop(key, None)
            if not bucket:
                del self._index[predicate.lower()]
        self._justifications.pop(key, None)
        return True

    def match(self, pattern) -> list:
        """All bindings that turn ``pattern`` into a stored fact.

        ``pattern`` is anything with ``predicate`` and ``terms`` attributes
        where each term is a :class:`Constant` or :class:`Variable` (rule
        atoms qualify).  A variable-free pattern that is present yields one
        empty binding.
        """
        terms = tuple(pattern.terms)
        if not 1 <= len(terms) <= MAX_ARITY:
            raise ArityError(f"pattern arity {len(terms)} outside 1..{MAX_ARITY}")
        results = []
        for fact in self.facts_for(pattern.predicate):
            binding = unify_against_fact(pattern.predicate, terms, fact, {})
            if binding is not None:
                results.append(binding)
        return results

    def record_justification(self, fact: Fact, rule_id: Optional[str],
                             premises: tuple) -> None:
        self._justifications.setdefault(fact.key(),
                                        Justification(rule_id, tuple(premises)))

    def justification(self, fact: Fact) -> Optional[Justification]:
        return self._justifications.get(fact.key())

    def snapshot(self) -> "FactStore":
        """Independent copy; facts themselves are immutable and shared."""
        clone = FactStore(vocabulary=())
        clone._facts = dict(self._facts)
        clone._index = {p: dict(bucket) for p, bucket in self._index.items()}
        clone._canon = dict(self._canon)
        clone._justifications = dict(self._justifications)
        return clone


def assert_fact(store: FactStore, fact: Fact) -> bool:
    return store.assert_fact(fact)


def retract_fact(store: FactStore, predicate: str, args) -> bool:
    return store.retract_fact(predicate, args)


def match_pattern(store: FactStore, pattern) -> list:
    return store.match(pattern)


# ---------------------------------------------------------------------------
# Fact file format: one fact per line, `Predicate(arg, ...).`, `#` comments.
# ---------------------------------------------------------------------------

_INFERRED_MARK = re.compile(r"inferred(?:\s+rule=(?P<rule>\S+))?\s*\Z")


def split_comment(line: str) -> tuple:
    """Split a line at the first ``#`` that is outside a quoted string."""
    in_string = False
    i = 0
    while i < len(line):
        ch = line[i]
        if in_string:
            if ch == "\\":
                i += 2
                continue
            if ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "#":
            return line[:i], line[i + 1:]
        i += 1
    return line, None


class _LineScanner:
    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.i = 0

    def error(self, message: str) -> FactParseError:
        return FactParseError(message, self.line)

    def skip_ws(self) -> None:
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self) -> str:
        return self.text[self.i] if self.i < len(self.text) else ""

    def take_symbol(self) -> str:
        start = self.i
        while self.i < len(self.text) and (self.text[self.i].isalnum()
                                           or self.text[self.i] in "_/.-"):
            self.i += 1
        return self.text[start:self.i]

    def take_string(self) -> str:
        # Caller consumed nothing; self.text[self.i] == '"'.
        self.i += 1
        out = []
        while self.i < len(self.text):
            ch = self.text[self.i]
            if ch == "\\":
                if self.i + 1 >= len(self.text):
                    raise self.error("dangling escape in string")
                out.append(self.text[self.i + 1])
                self.i += 2
                continue
            if ch == '"':
                self.i += 1
                return "".join(out)
            out.append(ch)
            self.i += 1
        raise self.error("unterminated string")

    def take_constant(self) -> Constant:
        ch = self.peek()
        if ch == '"':
            return Constant.string(self.take_string())
        if ch.isdigit() or (ch == "-" and self.i + 1 < len(self.text)
                            and self.text[self.i + 1].isdigit()):
            start = self.i
            if ch == "-":
                self.i += 1
            while self.i < len(self.text) and (self.text[self.i].isdigit()
                                               or self.text[self.i] in ".eE+-"):
                self.i += 1
            lexeme = self.text[start:self.i]
            if not NUMBER_RE.fullmatch(lexeme):
                raise self.error(f"invalid number: {lexeme!r}")
            return Constant.number(float(lexeme))
        if ch.isalpha() or ch == "_":
            return Constant.symbol(self.take_symbol())
        raise self.error(f"expected a constant, found {ch!r}"
                         if ch else "expected a constant, found end of line")


def parse_fact(text: str, line: int = 1, *, require_period: bool = True) -> Fact:
    """Parse one ``Predicate(arg, ...)`` with optional trailing period."""
    scanner = _LineScanner(text, line)
    scanner.skip_ws()
    if not (scanner.peek().isalpha() or scanner.peek() == "_"):
        raise scanner.error("expected a predicate name")
    predicate = scanner.take_symbol()
    scanner.skip_ws()
    if scanner.peek() != "(":
        raise scanner.error(f"expected '(' after predicate {predicate!r}")
    scanner.i += 1
    args = []
    while True:
        scanner.skip_ws()
        args.append(scanner.take_constant())
        scanner.skip_ws()
        if scanner.peek() == ",":
            scanner.i += 1
            continue
        if scanner.peek() == ")":
            scanner.i += 1
            break
        raise scanner.error("expected ',' or ')' in argument list")
    scanner.skip_ws()
    if scanner.peek() == ".":
        scanner.i += 1
    elif require_period:
        raise scanner.error("missing trailing period")
    scanner.skip_ws()
    if scanner.i < len(scanner.text):
        raise scanner.error(f"trailing input: {scanner.text[scanner.i:]!r}")
    if len(args) > MAX_ARITY or not args:
        raise scanner.error(f"{predicate}: arity {len(args)} outside 1..{MAX_ARITY}")
    return Fact(predicate, tuple(args))


def load_facts(text: str, store: Optional[FactStore] = None) -> FactStore:
    """Load a fact file; duplicate lines collapse silently."""
    store = store if store is not None else FactStore()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        code, comment = split_comment(raw)
        code = code.strip()
        origin = ASSERTED
        rule_id = None
        if comment is not None:
            marked = _INFERRED_MARK.fullmatch(comment.strip())
            if marked:
                origin = INFERRED
                rule_id = marked.group("rule")
        if not code:
            continue
        parsed = parse_fact(code, lineno)
        store.assert_fact(Fact(parsed.predicate, parsed.args,
                               origin=origin, rule_id=rule_id))
    return store


def load_facts_file(path) -> FactStore:
    with open(path, "r", encoding="utf-8") as fh:
        return load_facts(fh.read())


def save_facts(store: FactStore) -> str:
    """Canonical text form; inferred facts carry an ``# inferred`` marker."""
    lines = []
    for fact in store:
        line = f"{fact.render()}."
        if fact.origin == INFERRED:
            line += "  # inferred"
            if fact.rule_id:
                line += f" rule={fact.rule_id}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


def save_facts_file(store: FactStore, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(save_facts(store))
