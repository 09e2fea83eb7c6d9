from sqlalchemy import (
    Integer,
    Float,
    String,
    ForeignKey,
    LargeBinary,
    Text,
    DateTime,
    UniqueConstraint,
)
from sqlalchemy.orm import declarative_base, relationship, Mapped, mapped_column
from typing import List, Optional
from datetime import datetime, timezone

Base = declarative_base()


class TrajectoryRecord(Base):
    """Header of a stored trajectory: what produced it and on which mesh."""

    __tablename__ = "trajectory"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    mesh_hash: Mapped[str] = mapped_column(String(64), nullable=False, index=True)
    domain: Mapped[str] = mapped_column(String(20), nullable=False)
    n_vertices: Mapped[int] = mapped_column(Integer, nullable=False)
    n_triangles: Mapped[int] = mapped_column(Integer, nullable=False)
    config_json: Mapped[str] = mapped_column(Text, nullable=False)
    model_json: Mapped[str] = mapped_column(Text, nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False, index=True)
    n_steps: Mapped[int] = mapped_column(Integer, nullable=False)
    n_dofs: Mapped[int] = mapped_column(Integer, nullable=False)
    snapshot_stride: Mapped[int] = mapped_column(Integer, nullable=False, default=1)
    # little-endian binary64 arrays of length n_steps + 1
    l2_history: Mapped[bytes] = mapped_column(LargeBinary, nullable=False)
    h1_history: Mapped[bytes] = mapped_column(LargeBinary, nullable=False)
    reports_json: Mapped[str] = mapped_column(Text, nullable=False, default="[]")
    created_at: Mapped[datetime] = mapped_column(
        DateTime,
        default=lambda: datetime.now(timezone.utc),
        nullable=False,
    )

    snapshots: Mapped[List["SnapshotRecord"]] = relationship(
        back_populates="trajectory",
        cascade="all, delete-orphan",
        order_by="SnapshotRecord.step",
    )


class SnapshotRecord(Base):
    __tablename__ = "snapshot"
    __table_args__ = (UniqueConstraint("trajectory_id", "step", name="uq_snapshot_step"),)

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    trajectory_id: Mapped[int] = mapped_column(
        ForeignKey("trajectory.id", ondelete="CASCADE"), nullable=False
    )
    step: Mapped[int] = mapped_column(Integer, nullable=False)
    coefficients: Mapped[bytes] = mapped_column(LargeBinary, nullable=False)
    pressure: Mapped[Optional[bytes]] = mapped_column(LargeBinary, nullable=True)
    l2_norm: Mapped[float] = mapped_column(Float, nullable=False)
    h1_seminorm: Mapped[float] = mapped_column(Float, nullable=False)
    newton_iterations: Mapped[Optional[int]] = mapped_column(Integer, nullable=True)
    residual: Mapped[Optional[float]] = mapped_column(Float, nullable=True)

    trajectory: Mapped["TrajectoryRecord"] = relationship(back_populates="snapshots")
