"""SQLAlchemy models for the experiment ledger."""
from __future__ import annotations

from datetime import datetime

from sqlalchemy import DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import Mapped, mapped_column, relationship
from sqlalchemy.sql import func

from app.db.database import Base  # Base is defined in database.py


class ExperimentRecord(Base):
    __tablename__ = "experiments"

    id: Mapped[int] = mapped_column(primary_key=True)
    name: Mapped[str] = mapped_column(String(128))
    command: Mapped[str] = mapped_column(String(32))  # reconstruct or sweep
    axis: Mapped[str | None] = mapped_column(String(32), nullable=True)
    polarization: Mapped[str] = mapped_column(String(4))
    data_case: Mapped[str] = mapped_column(String(4))
    spec_json: Mapped[str] = mapped_column(Text)  # full ExperimentSpec dump
    status: Mapped[str] = mapped_column(String(20), default="running")  # running, done, failed
    created_at: Mapped[datetime] = mapped_column(DateTime, server_default=func.now())

    runs: Mapped[list["RunRecord"]] = relationship(back_populates="experiment", cascade="all, delete-orphan")


class RunRecord(Base):
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(primary_key=True)
    experiment_id: Mapped[int] = mapped_column(ForeignKey("experiments.id"))
    axis_value: Mapped[str | None] = mapped_column(String(64), nullable=True)
    run_index: Mapped[int] = mapped_column(Integer)
    seed: Mapped[int] = mapped_column(Integer)
    l2_error: Mapped[float | None] = mapped_column(Float, nullable=True)  # percent
    final_loss: Mapped[float | None] = mapped_column(Float, nullable=True)
    iterations: Mapped[int] = mapped_column(Integer, default=0)
    status: Mapped[str] = mapped_column(String(20), default="ok")  # ok, failed
    message: Mapped[str | None] = mapped_column(Text, nullable=True)
    created_at: Mapped[datetime] = mapped_column(DateTime, server_default=func.now())

    experiment: Mapped["ExperimentRecord"] = relationship(back_populates="runs")
