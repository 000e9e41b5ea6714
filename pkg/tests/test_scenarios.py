from aalguard.pdp import AuditLog, serialize_entry
from aalguard.scenarios import SCENARIO_NAMES, run_scenario


def test_deaf_scenario_passes():
    run = run_scenario("deaf")
    assert run.passed
    assert run.decision.effect == "permit"
    assert run.decision.recommendations == ["visual-alert"]
    assert run.authn.mean_used == "username/password"
    assert run.authn.trust == 1.0


def test_blind_scenario_passes():
    run = run_scenario("blind")
    assert run.passed
    assert run.decision.effect == "permit"
    assert run.decision.recommendations == ["audible-alert"]


def test_alzheimer_scenario_passes():
    run = run_scenario("alzheimer")
    assert run.passed
    assert run.decision.effect == "deny"
    assert run.decision.obligations == ["signal-emergency"]
    assert run.authn.mean_used == "tag-mean"
    assert run.anomaly_flagged


def test_scenario_reports_are_deterministic():
    for name in SCENARIO_NAMES:
        first = run_scenario(name)
        second = run_scenario(name)
        assert first.lines == second.lines


def test_alzheimer_audit_has_one_entry_per_kind(tmp_path):
    run = run_scenario("alzheimer", audit_path=tmp_path / "audit.log")
    kinds = [e.kind for e in run.audit_log.entries()]
    assert kinds.count("authn") == 1
    assert kinds.count("authz") == 1
    assert kinds.count("anomaly") == 1
    assert len(kinds) == 3


def test_scenario_audit_sequence_gap_free_and_reloadable(tmp_path):
    path = tmp_path / "audit.log"
    run = run_scenario("deaf", audit_path=path)
    seqs = [e.seq for e in run.audit_log.entries()]
    assert seqs == list(range(1, len(seqs) + 1))
    on_disk = path.read_text(encoding="utf-8")
    reloaded = AuditLog.load(path)
    assert "\n".join(serialize_entry(e) for e in reloaded) + "\n" == on_disk
    assert list(reloaded) == list(run.audit_log.entries())
