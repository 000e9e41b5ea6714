"""Command-line entry point: ``aal-guard <command> [flags]``.

Commands cover the three architectural layers: ``load`` and ``classify``
ingest files (acquisition), ``infer``, ``explain`` and ``query`` drive the
knowledge base (management), and ``scenario`` plus ``serve`` exercise the
decision point (security).  Exit codes: 0 success, 1 validation or policy
error, 2 I/O error.

Serve mode reads one JSON request per line from standard input
(``--listen -``) or a TCP socket (``--listen host:port``) and answers one
JSON response per line, in order; a malformed message yields an error
response and the loop continues.
"""

from __future__ import annotations

import argparse
import json
import socketserver
import sys
import threading
from typing import List, Optional

from . import behavior, engine, pdp, query, scenarios
from .config import Config, ConfigError, apply_key, load_config
from .facts import (
    FactError,
    FactStore,
    load_facts_file,
    parse_fact,
    save_facts_file,
)
from .rules import RuleSyntaxError, load_ruleset_file

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aal-guard",
        description="Context-aware access control for assisted living")
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument("--trust-threshold", type=float, default=None,
                        help="override trust_threshold")
    parser.add_argument("--anomaly-threshold", type=float, default=None,
                        help="override anomaly_threshold")
    parser.add_argument("--distance-floor", type=float, default=None,
                        help="override distance_floor")
    parser.add_argument("--default-auth-mean", default=None,
                        help="override default_auth_mean")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (e.g. priority.visual=2)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *names):
        if "facts" in names:
            p.add_argument("--facts", help="fact file (.kb)")
        if "rules" in names:
            p.add_argument("--rules", action="append", default=None,
                           help="rule file (.swl); repeatable")
        if "events" in names:
            p.add_argument("--events", help="sensor event CSV")
        if "model" in names:
            p.add_argument("--model", help="behavior model checkpoint")
        if "audit" in names:
            p.add_argument("--audit", help="audit log path")

    p = sub.add_parser("load", help="parse inputs and report counts")
    add_common(p, "facts", "rules", "events")

    p = sub.add_parser("infer", help="run forward chaining to fixpoint")
    add_common(p, "facts", "rules")
    p.add_argument("--save", help="write the materialized store here")

    p = sub.add_parser("explain", help="show the derivation of a fact")
    add_common(p, "facts", "rules")
    p.add_argument("fact", help="fact to explain, e.g. 'Authenticated(u1, yes)'")

    p = sub.add_parser("query", help="evaluate a conjunctive query")
    add_common(p, "facts", "rules")
    p.add_argument("query", help="SELECT ?v WHERE { ... } [LIMIT n]")

    p = sub.add_parser("classify", help="classify users from an event stream")
    add_common(p, "events", "model")

    p = sub.add_parser("scenario", help="run a built-in scenario fixture")
    p.add_argument("name", choices=sorted(scenarios.SCENARIO_NAMES) + ["all"])
    p.add_argument("--audit", help="audit log path (fresh per run)")

    p = sub.add_parser("serve", help="serve line-delimited JSON requests")
    add_common(p, "facts", "rules", "model", "audit")
    p.add_argument("--credentials", help="credentials file")
    p.add_argument("--listen", default="-",
                   help="'-' for stdin/stdout or host:port")
    p.add_argument("--prime-scenarios", action="store_true",
                   help="preload and authenticate the fixture residents")
    return parser


def _load_rules(args, config: Config) -> list:
    paths: List[str] = []
    if getattr(args, "rules", None):
        for chunk in args.rules:
            paths.extend(part.strip() for part in chunk.split(",") if part.strip())
    else:
        paths = list(config.rules)
    rules = []
    for path in paths:
        rules.extend(load_ruleset_file(path))
    return rules


def _load_store(args, config: Config) -> FactStore:
    path = getattr(args, "facts", None) or config.facts
    if path:
        return load_facts_file(path)
    return FactStore()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_load(args, config: Config) -> int:
    reported = False
    if args.facts or config.facts:
        store = _load_store(args, config)
        print(f"facts: {len(store)}")
        reported = True
    rules = _load_rules(args, config)
    if rules:
        print(f"rules: {len(rules)}")
        reported = True
    events_path = args.events or config.events
    if events_path:
        events = behavior.load_events_file(events_path)
        print(f"events: {len(events)} ({len(behavior.users_in(events))} users)")
        reported = True
    if not reported:
        print("nothing to load; pass --facts, --rules or --events",
              file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_infer(args, config: Config) -> int:
    store = _load_store(args, config)
    rules = _load_rules(args, config)
    report = engine.infer_fixpoint(store, rules)
    for fact in report.derived:
        print(f"+ {fact.render()}  [{fact.rule_id}]")
    print(f"derived {len(report.derived)} fact(s) in "
          f"{report.iterations} iteration(s)")
    fired = {rid: n for rid, n in report.rule_firings.items() if n}
    if fired:
        print("firings: " + ", ".join(f"{rid}={n}" for rid, n in fired.items()))
    conflicts = engine.check_consistency(store)
    for conflict in conflicts:
        a, b = conflict.facts
        print(f"conflict ({conflict.kind}): {a.render()} vs {b.render()}")
    if args.save:
        save_facts_file(store, args.save)
    return EXIT_OK


def cmd_explain(args, config: Config) -> int:
    store = _load_store(args, config)
    rules = _load_rules(args, config)
    if rules:
        engine.infer_fixpoint(store, rules)
    target = parse_fact(args.fact, require_period=False)
    derivation = engine.explain(store, target)
    print(engine.render_derivation(derivation))
    return EXIT_OK


def cmd_query(args, config: Config) -> int:
    store = _load_store(args, config)
    rules = _load_rules(args, config)
    if rules:
        engine.infer_fixpoint(store, rules)
    parsed = query.parse_query(args.query)
    rows = query.eval_query(store, parsed)
    for row in rows:
        print("  ".join(f"?{name}={row[name].text()}" for name in parsed.select))
    print(f"{len(rows)} row(s)")
    return EXIT_OK


def cmd_classify(args, config: Config) -> int:
    events_path = args.events or config.events
    model_path = args.model or config.model
    events = behavior.load_events_file(events_path)
    if model_path:
        model = behavior.load_model_file(model_path,
                                         distance_floor=config.distance_floor)
    else:
        model = scenarios.load_fixture_model(config.distance_floor)
    for user in behavior.users_in(events):
        features = behavior.extract_features(events, user)
        class_id, dist = behavior.classify(model, features)
        trust = behavior.trust_score(model, class_id, features)
        print(f"{user}: class={class_id} distance={dist:.2f} trust={trust:.2f}")
    return EXIT_OK


def cmd_scenario(args, config: Config) -> int:
    names = scenarios.SCENARIO_NAMES if args.name == "all" else (args.name,)
    all_passed = True
    for name in names:
        audit_path = args.audit
        if audit_path and len(names) > 1:
            audit_path = f"{audit_path}.{name}"  # one fresh log per run
        run = scenarios.run_scenario(name, audit_path=audit_path, config=config)
        for line in run.lines:
            print(line)
        all_passed = all_passed and run.passed
    return EXIT_OK if all_passed else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# Serve mode
# ---------------------------------------------------------------------------

class ServeState:
    """Shared serving state; decision evaluation is single-writer."""

    def __init__(self, store, rules, model, credentials, config, audit_log):
        self.store = store
        self.rules = rules
        self.model = model
        self.credentials = credentials
        self.config = config
        self.audit_log = audit_log
        self.lock = threading.Lock()


def _features_from_message(msg: dict) -> behavior.FeatureVector:
    fv = behavior.FeatureVector()
    for key, value in (msg.get("features") or {}).items():
        fv.entries[str(key)] = float(value)
        fv.support[str(key)] = 1
    return fv


def handle_message(state: ServeState, line: str) -> dict:
    try:
        msg = json.loads(line)
        if not isinstance(msg, dict):
            raise ValueError("message must be a JSON object")
    except ValueError as err:
        return {"ok": False, "error": f"bad message: {err}"}
    op = msg.get("op")
    try:
        if op == "ping":
            return {"ok": True}
        if op == "authn":
            with state.lock:
                result = query.authn_query(
                    state.store, str(msg["user"]),
                    _features_from_message(msg),
                    rules=state.rules, model=state.model,
                    credentials=state.credentials,
                    password=msg.get("password"), tag=msg.get("tag"),
                    trust_threshold=state.config.trust_threshold,
                    default_mean=state.config.default_auth_mean,
                    audit_log=state.audit_log)
            return {"ok": True, "authenticated": result.authenticated,
                    "mean": result.mean_used, "trust": round(result.trust, 6),
                    "class": result.behavior_class,
                    **({"reason": result.reason} if result.reason else {})}
        if op == "authorize":
            with state.lock:
                decision = query.authz_query(
                    state.store, str(msg["user"]), str(msg["service"]),
                    device=msg.get("device"), context=msg.get("context") or {},
                    rules=state.rules,
                    priority_table=state.config.priority_table,
                    audit_log=state.audit_log)
            return {"ok": True, "effect": decision.effect,
                    "obligations": decision.obligations,
                    "recommendations": decision.recommendations,
                    "priority": decision.priority,
                    "rationale": decision.rationale}
        if op == "query":
            parsed = query.parse_query(str(msg["q"]))
            with state.lock:
                snapshot = state.store.snapshot()
            rows = query.eval_query(snapshot, parsed)
            return {"ok": True,
                    "rows": [{name: row[name].text() for name in parsed.select}
                             for row in rows]}
        return {"ok": False, "error": f"unknown op: {op!r}"}
    except KeyError as err:
        return {"ok": False, "error": f"missing field: {err.args[0]!r}"}
    except (FactError, RuleSyntaxError, query.QueryError, pdp.PdpError,
            ValueError) as err:
        return {"ok": False, "error": str(err)}


def cmd_serve(args, config: Config) -> int:
    store = _load_store(args, config)
    rules = _load_rules(args, config)
    if not rules and (args.prime_scenarios or not args.rules):
        rules = scenarios.load_fixture_rules()
    model_path = args.model or config.model
    if model_path:
        model = behavior.load_model_file(model_path,
                                         distance_floor=config.distance_floor)
    else:
        model = scenarios.load_fixture_model(config.distance_floor)
    credentials_path = args.credentials or config.credentials
    if credentials_path:
        credentials = pdp.load_credentials_file(credentials_path)
    else:
        credentials = scenarios.load_fixture_credentials()
    audit_path = args.audit or config.audit
    audit_log = pdp.AuditLog(audit_path) if audit_path else pdp.AuditLog()
    state = ServeState(store, rules, model, credentials, config, audit_log)

    if args.prime_scenarios:
        scenarios.prime_store(state.store, state.rules, state.model,
                              state.credentials, audit_log=None, config=config)

    if args.listen == "-":
        for line in sys.stdin:
            line = line.strip()
            if not line:
                continue
            response = handle_message(state, line)
            sys.stdout.write(json.dumps(response) + "\n")
            sys.stdout.flush()
        return EXIT_OK

    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        print(f"bad --listen address: {args.listen!r}", file=sys.stderr)
        return EXIT_VALIDATION

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            while True:
                raw = self.rfile.readline()
                if not raw:
                    break
                line = raw.decode("utf-8", errors="replace").strip()
                if not line:
                    continue
                response = handle_message(state, line)
                self.wfile.write((json.dumps(response) + "\n").encode("utf-8"))
                self.wfile.flush()

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((host, int(port)), Handler) as server:
        actual_host, actual_port = server.server_address[:2]
        print(f"listening on {actual_host}:{actual_port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return EXIT_OK


COMMANDS = {
    "load": cmd_load,
    "infer": cmd_infer,
    "explain": cmd_explain,
    "query": cmd_query,
    "classify": cmd_classify,
    "scenario": cmd_scenario,
    "serve": cmd_serve,
}


def _apply_overrides(config: Config, args) -> Config:
    for flag, key in (("trust_threshold", "trust_threshold"),
                      ("anomaly_threshold", "anomaly_threshold"),
                      ("distance_floor", "distance_floor"),
                      ("default_auth_mean", "default_auth_mean")):
        value = getattr(args, flag)
        if value is not None:
            setattr(config, key, value)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            apply_key(config, key.strip(), value.strip())
        except ValueError as err:
            raise ConfigError(str(err)) from None
    return config.validate()


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](args, config)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (FactError, RuleSyntaxError, ConfigError, engine.EngineError,
            behavior.EventFormatError, behavior.ModelFormatError,
            behavior.OrderingError, query.QueryError, pdp.PdpError,
            pdp.AuditError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
