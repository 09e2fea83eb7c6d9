import math

import numpy as np
import pytest

from src.fem.mesh import (
    Mesh,
    build_mesh,
    build_polygon_disk_mesh,
    build_unit_square_mesh,
    domain_area,
    read_mesh,
    refine_uniform,
    validate,
    write_mesh,
)
from src.models.pydanticmodels import Domain
from src.util import error


def test_square_mesh_counts():
    m = build_unit_square_mesh(2)

    assert m.n_vertices == 13
    assert m.n_triangles == 16
    # Euler characteristic of a disk: V - E + T = 1
    assert m.n_vertices - m.n_edges + m.n_triangles == 1
    assert m.area == pytest.approx(1.0, abs=1e-14)
    assert m.h == pytest.approx(0.5)


def test_square_mesh_is_admissible():
    report = validate(build_unit_square_mesh(3))

    assert report.ok, report.violations


def test_disk_mesh_covers_inscribed_polygon():
    m = build_polygon_disk_mesh(16)

    assert validate(m).ok
    assert m.area == pytest.approx(domain_area(Domain.POLYGON_DISK, 16), rel=1e-13)
    radii = np.linalg.norm(m.vertices[m.boundary_vertex_mask], axis=1)
    assert np.allclose(radii, 1.0)
    assert m.boundary_vertex_mask.sum() == 16


def test_refinement_quarters_triangles():
    coarse = build_mesh(Domain.POLYGON_DISK, 8)
    fine = refine_uniform(coarse)

    assert fine.n_triangles == 4 * coarse.n_triangles
    assert fine.n_vertices == coarse.n_vertices + coarse.n_edges
    assert fine.area == pytest.approx(coarse.area, rel=1e-13)
    assert fine.h == pytest.approx(coarse.h / 2)
    assert np.array_equal(fine.parents, np.repeat(np.arange(coarse.n_triangles), 4))
    # children lie inside their parents
    _, bary = coarse.locate_points(fine.centroids)
    assert bary.min() >= -1e-12


def test_build_is_deterministic():
    a = build_mesh(Domain.SQUARE, 2, level=2)
    b = build_mesh(Domain.SQUARE, 2, level=2)

    assert a.hash() == b.hash()
    assert a.hash() != build_mesh(Domain.SQUARE, 2, level=1).hash()


def test_invalid_sizes_rejected():
    with pytest.raises(error.ValidationError):
        build_unit_square_mesh(0)
    with pytest.raises(error.ValidationError):
        build_polygon_disk_mesh(6)


def test_validate_flags_clockwise_triangles():
    m = build_unit_square_mesh(2)
    flipped = Mesh(m.vertices, m.triangles[:, [0, 2, 1]])

    assert "orientation" in validate(flipped).rules()


def test_validate_flags_triangle_without_interior_vertex():
    lone = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))

    assert "interior-vertex condition" in validate(lone).rules()


def test_validate_flags_bad_quasi_uniformity():
    m = build_unit_square_mesh(2)

    report = validate(m, quasi_uniformity_bound=1.0)

    assert "quasi-uniformity" in report.rules()


def test_locate_points_finds_own_centroids():
    m = build_mesh(Domain.POLYGON_DISK, 8, level=1)

    found, bary = m.locate_points(m.centroids)

    assert np.array_equal(found, np.arange(m.n_triangles))
    assert np.allclose(bary, 1.0 / 3.0)


def test_locate_points_outside_raises():
    m = build_unit_square_mesh(2)

    with pytest.raises(error.PointOutsideDomainError):
        m.locate_points(np.array([[1.5, 0.5]]))


def test_locate_points_accepts_boundary_points():
    m = build_unit_square_mesh(2)
    pts = np.array([[0.0, 0.0], [1.0, 0.3], [0.25, 1.0]])

    found, bary = m.locate_points(pts)

    assert np.all(found >= 0)
    recon = np.einsum("pk,pkd->pd", bary, m.vertices[m.triangles[found]])
    assert np.allclose(recon, pts, atol=1e-14)


def test_mesh_file_round_trip(tmp_path):
    m = build_mesh(Domain.POLYGON_DISK, 8, level=1)
    path = tmp_path / "disk.mesh"

    write_mesh(m, path)
    loaded = read_mesh(path)

    assert loaded.domain == Domain.POLYGON_DISK
    assert np.array_equal(loaded.vertices, m.vertices)
    assert loaded.hash() == m.hash()


def test_read_mesh_errors(tmp_path):
    with pytest.raises(error.NotFoundError):
        read_mesh(tmp_path / "missing.mesh")

    bad = tmp_path / "bad.mesh"
    bad.write_text("vertices 3\n0 0\n")
    with pytest.raises(error.ValidationError):
        read_mesh(bad)


def test_square_domain_area():
    assert domain_area(Domain.SQUARE, 7) == 1.0
    assert domain_area(Domain.POLYGON_DISK, 8) == pytest.approx(2 * math.sqrt(2))


@pytest.mark.parametrize("n", [1, 2, 4])
def test_square_h_is_cell_side(n):
    assert build_unit_square_mesh(n).h == pytest.approx(1.0 / n)
