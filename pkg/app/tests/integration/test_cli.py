"""Integration tests for the twinmesh command line"""
import json
from contextlib import nullcontext

import pytest

import app.cli as cli
import app.evaluation as evaluation
from app.core.errors import InvariantViolation
from app.evaluation import BenchmarkRun, Experiment, read_csv
from app.security.principals import parse_credentials
from app.tests.support import CONFIG_DIR

pytestmark = pytest.mark.integration

TESTING_ENV = str(CONFIG_DIR / "environments" / "testing.json")


def test_bench_dynamic_writes_csv(tmp_path, capsys):
    """Test a tiny dynamic run with invariant checks"""
    out = tmp_path / "dynamic.csv"
    code = cli.main(["bench", "dynamic", "--max-pairs", "2", "--trials", "3", "--verify", "--out", str(out)])
    assert code == cli.EXIT_OK
    points = read_csv(out)
    assert [(p.tags_per_pair, p.pair_count, p.n) for p in points] == [(None, 0, 3), (None, 1, 3), (None, 2, 3)]
    assert "trials=3 completed=3 aborted=0" in capsys.readouterr().out


def test_bench_static_series(tmp_path):
    """Test a tiny static run over two series"""
    out = tmp_path / "static.csv"
    code = cli.main(["bench", "static", "--tags", "1,2", "--max-pairs", "2", "--trials", "2", "--out", str(out)])
    assert code == cli.EXIT_OK
    points = read_csv(out)
    assert {(p.tags_per_pair, p.pair_count) for p in points} == {(s, k) for s in (1, 2) for k in range(3)}


def test_bench_all_trials_aborted(monkeypatch):
    """Test exit code 3 when no trial completed"""
    monkeypatch.setattr(
        evaluation,
        "run_dynamic_scaling",
        lambda **kwargs: BenchmarkRun(Experiment.DYNAMIC, trials=2, aborted=2),
    )
    assert cli.main(["bench", "dynamic", "--trials", "2"]) == cli.EXIT_ABORTED


def test_bench_invariant_violation_aborts(monkeypatch, capsys):
    """Test that a failed per-step check under --verify exits 3 with the reason"""

    def violate(**kwargs):
        raise InvariantViolation("step 3: 8 tag attachments, expected 9")

    monkeypatch.setattr(evaluation, "run_dynamic_scaling", violate)
    assert cli.main(["bench", "dynamic", "--trials", "2", "--verify"]) == cli.EXIT_ABORTED
    assert "step 3: 8 tag attachments" in capsys.readouterr().err


def test_bad_tag_series_is_a_usage_error():
    """Test argument validation for --tags"""
    with pytest.raises(SystemExit):
        cli.main(["bench", "static", "--tags", "0,3"])


def test_missing_config_file(tmp_path, capsys):
    """Test exit code 2 for configuration errors"""
    code = cli.main(["bench", "dynamic", "--config", str(tmp_path / "missing.json")])
    assert code == cli.EXIT_CONFIG_ERROR
    assert "Configuration error" in capsys.readouterr().err


def test_hash_password_prints_a_usable_entry(capsys):
    """Test that the printed entry authenticates"""
    assert cli.main(["admin", "hash-password", "--principal", "bob", "--secret", "s3cret", "--roles", "app"]) == 0
    entry = json.loads(capsys.readouterr().out)
    store = parse_credentials({"principals": [entry]})
    assert store.authenticate_password("bob", "s3cret").id == "bob"


def test_acl_from_local_files(capsys):
    """Test the offline ACL export"""
    assert cli.main(["admin", "--config", TESTING_ENV, "acl"]) == 0
    out = capsys.readouterr().out
    assert "user admin\ntopic readwrite #" in out
    assert "user dashboard" in out


@pytest.fixture
def admin_over(monkeypatch, http_client):
    """Route admin commands to the in-process TestClient with the given credentials."""

    def use(user, password):
        http_client.auth = (user, password)
        monkeypatch.setattr(cli, "admin_client", lambda args, config: nullcontext(http_client))

    return use


def test_admin_grant_and_revoke(admin_over, capsys):
    """Test grant and revoke against a running service"""
    admin_over("admin", "twinmesh-admin")
    grant = ["--principal", "fleet-tracker", "--device", "truck-2", "--tag", "#base"]
    assert cli.main(["admin", "grant", *grant]) == 0
    assert json.loads(capsys.readouterr().out) == {"grants": 6}
    assert cli.main(["admin", "revoke", *grant]) == 0
    assert json.loads(capsys.readouterr().out) == {"grants": 5}


def test_admin_push_tags_and_twins(admin_over, capsys):
    """Test push-tags, twins and reap"""
    admin_over("admin", "twinmesh-admin")
    assert cli.main(["admin", "push-tags", "--device", "truck-1", "--tags", "fleet, leased"]) == 0
    assert json.loads(capsys.readouterr().out)["tags"] == ["fleet", "leased"]
    assert cli.main(["admin", "twins", "--device", "truck-1"]) == 0
    assert json.loads(capsys.readouterr().out)["device_id"] == "truck-1"
    assert cli.main(["admin", "reap"]) == 0


def test_admin_request_failure(admin_over, capsys):
    """Test exit code 1 when the service refuses"""
    admin_over("dashboard", "dashboard-pass")
    assert cli.main(["admin", "reap"]) == cli.EXIT_REQUEST_FAILED
    assert "Request failed (403)" in capsys.readouterr().err
