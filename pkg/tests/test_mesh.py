"""Interface-fitted mesh generation, validation and the text file format."""

import dataclasses

import numpy as np
import pytest

from stcontrol import mesh, problem
from stcontrol.errors import GeometryError, MeshFormatError, MeshingError


def curve_distance(spec, pts):
    s = problem.displacement(spec, pts[:, 1])
    da = np.abs(pts[:, 0] - (spec.offset_a + s))
    db = np.abs(pts[:, 0] - (spec.offset_b + s))
    return np.minimum(da, db)


def test_static_coarse_structure(static_spec):
    m = mesh.build_mesh(static_spec, 4)
    assert m.num_vertices == 35
    assert m.num_triangles == 48
    assert len(m.interface_edges) == 8          # two chords per strip
    assert m.h == pytest.approx(np.sqrt(2.0) / 4.0, rel=1e-12)
    assert np.bincount(m.regions, minlength=3).tolist() == [0, 16, 32]
    # initial line tagged, one xmin/xmax vertex per time line
    assert int(np.sum((m.boundary_tags & mesh.TAG_T0) != 0)) == 7
    assert int(np.sum((m.boundary_tags & mesh.TAG_XMIN) != 0)) == 5
    assert int(np.sum((m.boundary_tags & mesh.TAG_TFINAL) != 0)) == 7


def test_interface_vertices_sit_on_exact_curves(moving_spec):
    m = mesh.build_mesh(moving_spec, 13)
    ids = np.unique(m.interface_edges)
    assert ids.size > 0
    assert np.max(curve_distance(moving_spec, m.vertices[ids])) <= 1e-10


def test_presets_validate_clean(static_spec, moving_spec):
    for spec in (static_spec, moving_spec):
        for layers in (2, 5, 8, 30):
            m = mesh.build_mesh(spec, layers)
            rep = mesh.validate_mesh(m, spec)
            assert rep.ok, rep.as_dict()
            assert rep.straddle_count == 0
            assert rep.conformity_violations == 0
            assert rep.region_mismatches == 0
            assert rep.max_fit_residual <= mesh.FIT_RESIDUAL_LIMIT
            assert rep.quasi_uniformity <= 8.0


def test_refinement_halves_mesh_size(static_spec, moving_spec):
    for spec in (static_spec, moving_spec):
        h30 = mesh.build_mesh(spec, 30).h
        h60 = mesh.build_mesh(spec, 60).h
        assert 0.4 <= h60 / h30 <= 0.6


def test_band_area_is_exact(static_spec, moving_spec):
    # both curves shift together, so the discrete band keeps area 0.2
    for spec in (static_spec, moving_spec):
        for layers in (12, 30):
            m = mesh.build_mesh(spec, layers)
            p = m.vertices[m.triangles]
            areas = 0.5 * (
                (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
            )
            band = float(np.sum(areas[m.regions == 1]))
            assert band == pytest.approx(0.2, abs=1e-12)
            assert float(np.sum(areas)) == pytest.approx(1.0, abs=1e-12)


def test_layer_count_validation(static_spec):
    with pytest.raises(ValueError):
        mesh.build_mesh(static_spec, 1)
    with pytest.raises(ValueError):
        mesh.build_mesh(static_spec, 2.5)


def test_pinched_band_raises_meshing_error():
    spec = problem.ProblemSpec(
        x_min=0.0, x_max=1.0, t_final=1.0, kappa1=1.0, kappa2=1.0, eta=1.0,
        velocity=problem.velocity_zero(), offset_a=0.4, offset_b=0.4 + 1e-10,
    )
    with pytest.raises(MeshingError) as err:
        mesh.build_mesh(spec, 4)
    assert err.value.layer == 0


def test_validator_flags_flipped_triangle(static_spec):
    m = mesh.build_mesh(static_spec, 5)
    tris = m.triangles.copy()
    tris[0] = tris[0][[0, 2, 1]]
    bad = dataclasses.replace(m, triangles=tris)
    rep = mesh.validate_mesh(bad, static_spec)
    assert rep.orientation_violations >= 1
    assert not rep.ok


def test_validator_flags_perturbed_interface_vertex(static_spec):
    m = mesh.build_mesh(static_spec, 5)
    verts = m.vertices.copy()
    vid = int(m.interface_edges[0, 0])
    verts[vid, 0] += 1e-6
    bad = dataclasses.replace(m, vertices=verts)
    rep = mesh.validate_mesh(bad, static_spec)
    assert rep.max_fit_residual > mesh.FIT_RESIDUAL_LIMIT
    assert not rep.ok


def test_validator_flags_straddling_triangle(static_spec):
    m = mesh.build_mesh(static_spec, 5)
    verts = m.vertices.copy()
    vid = int(m.interface_edges[0, 0])
    verts[vid, 0] += 0.05      # drag an interface vertex into the band
    bad = dataclasses.replace(m, vertices=verts)
    rep = mesh.validate_mesh(bad, static_spec)
    assert rep.straddle_count >= 1
    assert not rep.ok


def test_validator_flags_region_mislabels(moving_spec):
    m = mesh.build_mesh(moving_spec, 5)
    regions = m.regions.copy()
    regions[:4] = np.where(regions[:4] == 1, 2, 1)
    bad = dataclasses.replace(m, regions=regions)
    rep = mesh.validate_mesh(bad, moving_spec)
    assert rep.region_mismatches == 4
    assert not rep.ok


def test_validator_quasi_uniformity_threshold(static_spec):
    m = mesh.build_mesh(static_spec, 5)
    rep = mesh.validate_mesh(m, static_spec, rho_max=1.0)
    assert rep.quasi_uniformity > 1.0
    assert not rep.ok


def test_file_roundtrip_is_lossless(moving_spec, tmp_path):
    m = mesh.build_mesh(moving_spec, 6)
    path = tmp_path / "m.stmesh"
    mesh.write_mesh(m, path)
    back = mesh.read_mesh(path)
    assert np.array_equal(m.vertices, back.vertices)
    assert np.array_equal(m.triangles, back.triangles)
    assert np.array_equal(m.regions, back.regions)
    assert np.array_equal(m.interface_edges, back.interface_edges)
    assert np.array_equal(m.boundary_tags, back.boundary_tags)
    assert back.h == pytest.approx(m.h, rel=1e-15)
    # writing the parsed mesh again reproduces the file byte for byte
    path2 = tmp_path / "m2.stmesh"
    mesh.write_mesh(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def write_and_patch(m, tmp_path, match, repl):
    path = tmp_path / "broken.stmesh"
    mesh.write_mesh(m, path)
    lines = path.read_text().splitlines()
    idx = next(i for i, line in enumerate(lines) if match(i, line))
    lines[idx] = repl(lines[idx])
    path.write_text("\n".join(lines) + "\n")
    return path


def test_read_mesh_rejects_bad_region_label(static_spec, tmp_path):
    m = mesh.build_mesh(static_spec, 3)
    first_tri = 3 + m.num_vertices + 1   # header+comment+count, vertices, count
    path = write_and_patch(
        m, tmp_path,
        lambda i, line: i == first_tri,
        lambda line: line.rsplit(" ", 1)[0] + " 3",
    )
    with pytest.raises(MeshFormatError) as err:
        mesh.read_mesh(path)
    assert err.value.line == first_tri + 1
    assert "region" in str(err.value)


def test_read_mesh_rejects_bad_header(static_spec, tmp_path):
    m = mesh.build_mesh(static_spec, 3)
    path = write_and_patch(
        m, tmp_path, lambda i, line: i == 0, lambda line: "stmesh 9"
    )
    with pytest.raises(MeshFormatError):
        mesh.read_mesh(path)


def test_read_mesh_rejects_truncation(static_spec, tmp_path):
    m = mesh.build_mesh(static_spec, 3)
    path = tmp_path / "short.stmesh"
    mesh.write_mesh(m, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(MeshFormatError):
        mesh.read_mesh(path)


def test_read_mesh_rejects_out_of_range_index(static_spec, tmp_path):
    m = mesh.build_mesh(static_spec, 3)
    first_tri = 3 + m.num_vertices + 1
    path = write_and_patch(
        m, tmp_path,
        lambda i, line: i == first_tri,
        lambda line: f"0 1 {10 * m.num_vertices} " + line.rsplit(" ", 1)[1],
    )
    with pytest.raises(MeshFormatError):
        mesh.read_mesh(path)


def test_read_mesh_rejects_bad_tag(static_spec, tmp_path):
    m = mesh.build_mesh(static_spec, 3)
    path = write_and_patch(
        m, tmp_path,
        lambda i, line: i == 3,          # first vertex line
        lambda line: line.rsplit(" ", 1)[0] + " 16",
    )
    with pytest.raises(MeshFormatError):
        mesh.read_mesh(path)


def test_mesher_rejects_interface_hugging_the_wall():
    # strictly interior (so the spec is legal) but inside the mesher's
    # safety margin against the lateral boundary
    spec = problem.ProblemSpec(
        x_min=0.0, x_max=1.0, t_final=1.0, kappa1=1.0, kappa2=1.0,
        eta=1.0, velocity=problem.velocity_zero(),
        offset_a=0.4, offset_b=1.0 - 1e-12,
    )
    with pytest.raises(GeometryError):
        mesh.build_mesh(spec, 4)
