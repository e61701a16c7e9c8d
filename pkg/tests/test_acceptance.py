import pytest

import acceptance
from acceptance import (
    SAMPLING_CHECKS, check_cf_closed_forms, check_envelope, check_example_conditions,
    check_example_integrability, check_independence_scaling, check_jump_sweep, check_levy_process_sweep,
    check_multistable_sweep, check_polar_homogeneity, check_sampler_gof, check_self_similarity, run_selftest,
    selftest_runners,
)


@pytest.mark.parametrize("check", [
    lambda: check_polar_homogeneity(n=50),
    lambda: check_envelope(n=50),
    check_cf_closed_forms,
    check_example_conditions,
    check_example_integrability,
    lambda: check_self_similarity(n_probes=4, n_control=2),
    check_levy_process_sweep,
])
def test_fast_checks_pass(check):
    passed, detail = check()
    assert passed, detail


@pytest.mark.slow
@pytest.mark.parametrize("check", [
    check_sampler_gof,
    check_independence_scaling,
    check_multistable_sweep,
    check_jump_sweep,
])
def test_full_size_checks_pass(check):
    passed, detail = check()
    assert passed, detail


def test_selftest_table():
    table = run_selftest(["cf_closed_forms", "condition_examples"])
    assert list(table.columns) == ["check", "passed", "detail"]
    assert table["passed"].all()


def test_every_check_is_registered():
    runners = selftest_runners()
    assert len(runners) == 14
    assert set(SAMPLING_CHECKS) <= set(runners)


def test_quick_selftest_skips_sampling(monkeypatch):
    ran = []

    def runner(name):
        def run():
            ran.append(name)
            return True, "ok"
        return run

    monkeypatch.setattr(acceptance, "selftest_runners",
                        lambda: {name: runner(name) for name in ("cf_closed_forms",) + SAMPLING_CHECKS})
    table = run_selftest(quick=True)
    assert ran == ["cf_closed_forms"]
    assert table["check"].tolist() == ["cf_closed_forms"]
    assert len(run_selftest(list(SAMPLING_CHECKS), quick=True)) == 2


def test_unknown_check():
    with pytest.raises(ValueError):
        run_selftest(["no_such_check"])


def test_raising_check_is_reported_as_failure(monkeypatch):
    def broken():
        raise RuntimeError("boom")

    monkeypatch.setattr(acceptance, "selftest_runners", lambda: {"broken": broken})
    table = run_selftest()
    assert not table.loc[0, "passed"]
    assert table.loc[0, "detail"] == "error: boom"
