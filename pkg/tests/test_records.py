import logging
import math

import pytest
from sqlalchemy.exc import OperationalError

from app.core.config import ExperimentSpec
from app.db.database import SessionLocal, get_db, init_db
from app.db.models import ExperimentRecord
from app.services.experiment_service import RunOutcome
from app.services.record_service import (
    RunLedger,
    add_runs,
    create_experiment,
    error_summary,
    finish_experiment,
    get_runs,
)


@pytest.fixture
def db():
    init_db()
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()


def _outcomes():
    return [
        RunOutcome(0, 3, 5.5, 1e-4, 10),
        RunOutcome(1, 4, math.nan, math.nan, 2, status="failed", message="iteration 2: loss became nan"),
    ]


def test_experiment_and_runs(db):
    spec = ExperimentSpec(name="ledger")
    record = create_experiment(db, spec, "sweep", "noise")
    assert record.id is not None and record.status == "running"
    assert record.polarization == "TE" and record.data_case == "A"

    add_runs(db, record.id, _outcomes(), axis_value="0.05")
    add_runs(db, record.id, [RunOutcome(0, 3, 7.0, 1e-4, 10)], axis_value="0.1")
    rows = get_runs(db, record.id)
    assert [r.seed for r in rows] == [3, 4, 3]
    assert rows[1].l2_error is None and rows[1].status == "failed"
    assert error_summary(db, record.id) == {"0.05": [5.5], "0.1": [7.0]}

    finish_experiment(db, record.id)
    assert db.get(ExperimentRecord, record.id).status == "done"
    with pytest.raises(KeyError):
        finish_experiment(db, record.id + 100)


def test_get_db_yields_session():
    init_db()
    gen = get_db()
    session = next(gen)
    assert session.query(ExperimentRecord).count() == 0
    gen.close()


def test_ledger_records_a_command(db):
    ledger = RunLedger()
    ledger.start(ExperimentSpec(name="cli"), "reconstruct")
    ledger.add(_outcomes())
    ledger.finish("failed")
    record = db.get(ExperimentRecord, ledger.experiment_id)
    assert record.status == "failed" and record.command == "reconstruct"
    assert len(record.runs) == 2


def test_disabled_ledger_writes_nothing(db):
    ledger = RunLedger(enabled=False)
    ledger.start(ExperimentSpec(), "reconstruct")
    ledger.add(_outcomes())
    assert ledger.experiment_id is None
    assert db.query(ExperimentRecord).count() == 0


def test_ledger_survives_database_errors(caplog):
    def broken():
        raise OperationalError("connect", {}, Exception("disk I/O error"))

    ledger = RunLedger(session_factory=broken)
    with caplog.at_level(logging.WARNING):
        ledger.start(ExperimentSpec(), "sweep", "noise")
        ledger.add(_outcomes())
        ledger.finish()
    assert not ledger.enabled and ledger.experiment_id is None
    assert "Run ledger" in caplog.text
