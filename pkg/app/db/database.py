"""Database setup and configuration."""
from __future__ import annotations

from typing import Iterator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from app.core.settings import get_settings

# Create Base here to avoid circular import
Base = declarative_base()

SessionLocal = sessionmaker(autocommit=False, autoflush=False)
engine: Optional[Engine] = None


def make_engine(url: str) -> Engine:
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def init_db(url: Optional[str] = None) -> Engine:
    """Bind SessionLocal to `url` (default: settings) and create missing tables."""
    global engine
    engine = make_engine(url or get_settings().database_url)
    SessionLocal.configure(bind=engine)
    # Import models here to ensure they're registered with Base
    from app.db import models  # noqa: F401

    Base.metadata.create_all(bind=engine)
    return engine


def get_db() -> Iterator[Session]:
    """Get database session"""
    if engine is None:
        init_db()
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
