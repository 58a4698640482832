import numpy as np

from ccslab import verify_suite
from ccslab.schedule import NoiseSchedule


def test_ledger_deterministic_under_seed():
    a = verify_suite(7)
    b = verify_suite(7)
    assert a == b


def test_fault_injection_flags_corrupt_ladder():
    # Non-monotone ladder injected past validation: the ladder check must
    # fail while the ledger still completes.
    corrupt = NoiseSchedule._unchecked(
        np.array([0.9999, 0.5, 0.7, 0.2, 0.009])
    )
    ledger = verify_suite(0, schedule=corrupt)
    by_name = {c.name: c for c in ledger.checks}
    assert not by_name["schedule/ladder-shape"].passed
    assert not ledger.all_passed
    assert len(ledger.checks) > 5  # the rest of the suite still ran


def test_ledger_table_lists_every_check():
    ledger = verify_suite(0)
    table = ledger.format_table()
    for check in ledger.checks:
        assert check.name in table
    assert table.count("\n") == len(ledger.checks)
