"""Experiment ledger: one ExperimentRecord per command, one RunRecord per seed."""
from __future__ import annotations

import json
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence

from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session

from app.core.config import ExperimentSpec
from app.db.database import SessionLocal
from app.db.models import ExperimentRecord, RunRecord
from app.services.experiment_service import RunOutcome

logger = logging.getLogger(__name__)


def _finite(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def create_experiment(db: Session, spec: ExperimentSpec, command: str, axis: Optional[str] = None) -> ExperimentRecord:
    """
    Register an experiment before any run starts.

    Args:
        db: Database session
        spec: Fully resolved experiment
        command: CLI command that launched it
        axis: Sweep axis, if any

    Returns:
        ExperimentRecord model instance
    """
    record = ExperimentRecord(
        name=spec.name,
        command=command,
        axis=axis,
        polarization=spec.train.polarization.value,
        data_case=spec.train.data_case.value,
        spec_json=json.dumps(spec.model_dump(mode="json"), sort_keys=True),
        status="running",
    )
    db.add(record)
    db.commit()
    db.refresh(record)
    return record


def add_runs(
    db: Session,
    experiment_id: int,
    outcomes: Sequence[RunOutcome],
    axis_value: Optional[str] = None,
) -> List[RunRecord]:
    """Persist one batch (a whole reconstruct call or one sweep point) in a single commit."""
    rows = [
        RunRecord(
            experiment_id=experiment_id,
            axis_value=axis_value,
            run_index=o.run_index,
            seed=o.seed,
            l2_error=_finite(o.error),
            final_loss=_finite(o.final_loss),
            iterations=o.iterations,
            status=o.status,
            message=o.message or None,
        )
        for o in outcomes
    ]
    db.add_all(rows)
    db.commit()
    return rows


def finish_experiment(db: Session, experiment_id: int, status: str = "done") -> None:
    record = db.get(ExperimentRecord, experiment_id)
    if record is None:
        raise KeyError(f"no experiment with id {experiment_id}")
    record.status = status
    db.commit()


def get_runs(db: Session, experiment_id: int) -> List[RunRecord]:
    return (
        db.query(RunRecord)
        .filter(RunRecord.experiment_id == experiment_id)
        .order_by(RunRecord.id)
        .all()
    )


def error_summary(db: Session, experiment_id: int) -> Dict[Optional[str], List[float]]:
    """Stored l2 errors grouped by axis value, in insertion order."""
    grouped: Dict[Optional[str], List[float]] = {}
    for row in get_runs(db, experiment_id):
        if row.l2_error is not None:
            grouped.setdefault(row.axis_value, []).append(row.l2_error)
    return grouped


class RunLedger:
    """Side ledger for CLI commands; database failures are logged, never raised."""

    def __init__(self, session_factory=None, enabled: bool = True) -> None:
        self._session_factory = session_factory or SessionLocal
        self.enabled = enabled
        self.experiment_id: Optional[int] = None

    def _write(self, action: str, fn: Callable[[Session], None]) -> None:
        if not self.enabled:
            return
        try:
            with self._session_factory() as db:
                fn(db)
        except SQLAlchemyError:
            logger.warning("Run ledger: could not %s; continuing without it", action, exc_info=True)
            self.enabled = False

    def start(self, spec: ExperimentSpec, command: str, axis: Optional[str] = None) -> None:
        def _start(db: Session) -> None:
            self.experiment_id = create_experiment(db, spec, command, axis).id

        self._write("register experiment", _start)

    def add(self, outcomes: Sequence[RunOutcome], axis_value: Optional[str] = None) -> None:
        if self.experiment_id is not None:
            self._write("store runs", lambda db: add_runs(db, self.experiment_id, outcomes, axis_value))

    def finish(self, status: str = "done") -> None:
        if self.experiment_id is not None:
            self._write("close experiment", lambda db: finish_experiment(db, self.experiment_id, status))
