# Engine / session setup for the trajectory store
from contextlib import contextmanager
from pathlib import Path

from sqlalchemy import create_engine, event
from sqlalchemy.engine import Engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import sessionmaker, Session

from ...models.dbmodels import Base
from ...util import error


# The engine is the singleton; sessions are short-lived, one per command


def sqlite_url(path: str | Path) -> str:
    return f"sqlite:///{Path(path)}"


def _enable_foreign_keys(dbapi_connection, connection_record):
    cursor = dbapi_connection.cursor()
    cursor.execute("PRAGMA foreign_keys=ON")
    cursor.close()


def build_sessionmaker(db_url: str) -> tuple[Engine, sessionmaker]:
    engine = create_engine(db_url, pool_pre_ping=True)
    if engine.dialect.name == "sqlite":
        event.listen(engine, "connect", _enable_foreign_keys)
    Base.metadata.create_all(engine)
    SessionLocal = sessionmaker(bind=engine, expire_on_commit=False)
    return engine, SessionLocal


@contextmanager
def open_store(path: str | Path):
    """Session on the SQLite trajectory container at path; the engine is disposed on exit."""
    try:
        engine, SessionLocal = build_sessionmaker(sqlite_url(path))
    except SQLAlchemyError as exc:
        raise error.DatabaseOperationError("open_store", str(exc))
    db: Session = SessionLocal()
    try:
        yield db
    finally:
        db.close()
        engine.dispose()
