import pytest
from sqlalchemy.orm import Session

from src.dependencies.database.config import build_sessionmaker


@pytest.fixture
def db_session():
    """
    Function-scoped session on a private in-memory SQLite database.

    The schema is created fresh for every test; anything left uncommitted
    is rolled back when the test finishes.
    """
    engine, SessionLocal = build_sessionmaker("sqlite://")
    session: Session = SessionLocal()
    try:
        yield session
    finally:
        session.rollback()
        session.close()
        engine.dispose()
