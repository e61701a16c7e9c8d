import numpy as np
import pytest

from database import Database


@pytest.fixture
def db(tmp_path):
    return Database(str(tmp_path / "runs" / "ledger.db"))


def check_report(c2_passed):
    return {"command": "check", "spectral_bounds": {"a_hat": np.float64(0.667), "b_hat": 1.0},
            "verdicts": {"C1": {"name": "C1", "passed": True, "margin": 0.03},
                         "C2": {"name": "C2", "passed": c2_passed, "margin": -0.2}}}


def test_record_and_read_back(db):
    run_id = db.record_run("check", "model.json", 2 ** 64 - 1, 2, check_report(False))
    run = db.get_run(run_id)
    assert run["reference_number"].startswith("RUN")
    assert run["seed"] == str(2 ** 64 - 1)
    assert run["report"]["spectral_bounds"]["a_hat"] == pytest.approx(0.667)
    verdicts = db.get_verdicts(run_id)
    assert verdicts["name"].tolist() == ["C1", "C2"]
    assert verdicts["passed"].tolist() == [True, False]
    assert db.get_run(run_id + 1) is None


def test_runs_are_listed_newest_first(db):
    first = db.record_run("check", "a.json", 1, 0, check_report(True))
    second = db.record_run("tangent", "a.json", None, 0, {"command": "tangent"})
    assert db.get_runs()["run_id"].tolist() == [second, first]
    only = db.get_runs("tangent")
    assert len(only) == 1
    assert only.loc[0, "seed"] is None


def test_run_statistics(db):
    db.record_run("check", "a.json", 1, 2, check_report(False))
    db.record_run("check", "a.json", 1, 0, check_report(True))
    db.record_run("selftest", None, None, 0, None)
    stats = db.get_run_statistics()
    assert stats["command_counts"] == {"check": 2, "selftest": 1}
    assert stats["exit_counts"] == {0: 2, 2: 1}
    assert stats["failure_counts"] == {"C2": 1}
