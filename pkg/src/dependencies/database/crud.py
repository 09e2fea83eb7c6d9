import json
from typing import List, Optional

import numpy as np
from sqlalchemy import select
from sqlalchemy.exc import IntegrityError, SQLAlchemyError
from sqlalchemy.orm import Session

from ...fem.spaces import TaylorHoodSpace
from ...models import dbmodels, pydanticmodels
from ...stochastic.noise import NoiseModel, model_from_config
from ...stochastic.scheme import Trajectory
from ...util import error

_DTYPE = np.dtype("<f8")


def _to_blob(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()


def _from_blob(blob: bytes) -> np.ndarray:
    return np.frombuffer(blob, dtype=_DTYPE).astype(np.float64)


def _commit(db: Session, operation: str) -> None:
    try:
        db.commit()
    except IntegrityError as exc:
        db.rollback()
        raise error.DatabaseOperationError(operation, f"Integrity error: {exc.orig}")
    except SQLAlchemyError as exc:
        db.rollback()
        raise error.DatabaseOperationError(operation, str(exc))


def save_trajectory(db: Session, traj: Trajectory, model: NoiseModel) -> dbmodels.TrajectoryRecord:
    mesh = traj.space.mesh
    model_header = {"domain": model.domain.value, **model.to_config().model_dump(mode="json")}

    record = dbmodels.TrajectoryRecord(
        mesh_hash=mesh.hash(),
        domain=mesh.domain.value,
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
        config_json=traj.config.model_dump_json(),
        model_json=json.dumps(model_header, sort_keys=True),
        seed=traj.seed,
        n_steps=traj.J,
        n_dofs=traj.space.n_vel_free,
        snapshot_stride=traj.snapshot_stride,
        l2_history=_to_blob(traj.l2_norms),
        h1_history=_to_blob(traj.h1_seminorms),
        reports_json=json.dumps([r.model_dump(mode="json") for r in traj.reports]),
    )

    for k, j in enumerate(traj.stored_steps):
        j = int(j)
        report = traj.reports[j - 1] if j > 0 and traj.reports else None
        pressure = traj.pressures[j - 1] if j > 0 and traj.pressures is not None else None
        record.snapshots.append(
            dbmodels.SnapshotRecord(
                step=j,
                coefficients=_to_blob(traj.snapshots[k]),
                pressure=None if pressure is None else _to_blob(pressure),
                l2_norm=float(traj.l2_norms[j]),
                h1_seminorm=float(traj.h1_seminorms[j]),
                newton_iterations=None if report is None else report.iterations,
                residual=None if report is None else report.final_residual,
            )
        )

    db.add(record)
    _commit(db, "save_trajectory")
    db.refresh(record)
    return record


def get_trajectory_record(db: Session, trajectory_id: int) -> dbmodels.TrajectoryRecord:
    record = db.get(dbmodels.TrajectoryRecord, trajectory_id)
    if record is None:
        raise error.NotFoundError("Trajectory", trajectory_id)
    return record


def load_trajectory(db: Session, trajectory_id: int, space: TaylorHoodSpace) -> Trajectory:
    """
    Rebuild a Trajectory on space. Coefficients come back bit for bit.

    Raises:
        NotFoundError: no trajectory with that id
        ValidationError: space is on a different mesh than the stored one
    """
    record = get_trajectory_record(db, trajectory_id)
    if record.mesh_hash != space.mesh.hash():
        raise error.ValidationError(
            "stored trajectory belongs to a different mesh",
            {"stored": record.mesh_hash, "given": space.mesh.hash()},
        )

    config = pydanticmodels.SchemeConfig.model_validate_json(record.config_json)
    snapshots = np.stack([_from_blob(s.coefficients) for s in record.snapshots])
    if snapshots.shape[1] != space.n_vel_free:
        raise error.DatabaseOperationError(
            "load_trajectory", f"snapshot length {snapshots.shape[1]} != {space.n_vel_free}"
        )
    pressures = None
    stored_pressures = [s.pressure for s in record.snapshots if s.step > 0]
    if stored_pressures and all(p is not None for p in stored_pressures) and record.snapshot_stride == 1:
        pressures = np.stack([_from_blob(p) for p in stored_pressures])

    reports = [pydanticmodels.StepReport.model_validate(r) for r in json.loads(record.reports_json)]
    return Trajectory(
        config=config,
        space=space,
        seed=record.seed,
        snapshots=snapshots,
        l2_norms=_from_blob(record.l2_history),
        h1_seminorms=_from_blob(record.h1_history),
        reports=reports,
        path=None,
        pressures=pressures,
        snapshot_stride=record.snapshot_stride,
    )


def load_noise_model(record: dbmodels.TrajectoryRecord) -> NoiseModel:
    header = json.loads(record.model_json)
    domain = pydanticmodels.Domain(header.pop("domain"))
    return model_from_config(pydanticmodels.NoiseConfig.model_validate(header), domain)


def list_trajectories(
    db: Session, seed: Optional[int] = None, mesh_hash: Optional[str] = None
) -> List[dbmodels.TrajectoryRecord]:
    query = select(dbmodels.TrajectoryRecord)
    if seed is not None:
        query = query.where(dbmodels.TrajectoryRecord.seed == seed)
    if mesh_hash is not None:
        query = query.where(dbmodels.TrajectoryRecord.mesh_hash == mesh_hash)
    query = query.order_by(dbmodels.TrajectoryRecord.id)
    return list(db.execute(query).scalars().all())


def delete_trajectory(db: Session, trajectory_id: int) -> None:
    record = get_trajectory_record(db, trajectory_id)
    db.delete(record)
    _commit(db, "delete_trajectory")
