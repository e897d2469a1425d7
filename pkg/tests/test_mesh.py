import numpy as np
import pytest

import membrane_homog.meshing as meshing
from membrane_homog.errors import MeshQualityFailure, StitchFailure
from membrane_homog.geometry import BernoulliCellwiseMap, IdentityMap, InterfaceSpec
from membrane_homog.meshing import (
    MINUS,
    PLUS,
    MembraneMesh,
    build_cell_mesh,
    build_square_mesh,
    build_truncated_mesh,
    export_mesh,
    import_mesh,
    interface_node_count,
    membrane_cells,
    mesh_report,
    tile_domain_mesh,
)

SPEC = InterfaceSpec()


@pytest.fixture(scope="module")
def cell_h01():
    return build_cell_mesh(SPEC, 0.1)


class TestCellMesh:
    @pytest.mark.parametrize("h", [0.25, 0.1, 0.05, 0.0125])
    def test_quality_and_conformity(self, h):
        mesh = build_cell_mesh(SPEC, h)
        rep = mesh_report(mesh)
        assert rep.ok, rep.issues
        assert rep.min_angle_deg >= 20.0
        assert rep.pairing_residual == 0.0

    @pytest.mark.parametrize("h", [0.25, 0.1, 0.05])
    def test_total_area_is_one(self, h):
        mesh = build_cell_mesh(SPEC, h)
        assert abs(mesh.triangle_areas().sum() - 1.0) < 1e-12

    def test_minus_area_approximates_disk(self):
        mesh = build_cell_mesh(SPEC, 0.05)
        a_minus = mesh.triangle_areas()[mesh.tri_region == MINUS].sum()
        assert abs(a_minus - np.pi * SPEC.radius**2) < 2e-3

    def test_interface_edge_count_matches_node_count(self, cell_h01):
        edges = cell_h01.interface_edges()
        assert len(edges) == len(cell_h01.interface_pairs)
        # closed polyline: each minus node appears once as source, once as target
        assert sorted(edges[:, 2]) == sorted(edges[:, 3])

    def test_interface_nodes_lie_on_circle(self, cell_h01):
        for col in (0, 1):
            pts = cell_h01.vertices[cell_h01.interface_pairs[:, col]]
            rad = np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.5)
            assert np.abs(rad - SPEC.radius).max() < 1e-12

    def test_boundary_nodes_on_unit_square(self, cell_h01):
        pts = cell_h01.vertices[cell_h01.boundary_nodes]
        on_edge = (
            (pts[:, 0] == 0.0) | (pts[:, 0] == 1.0) | (pts[:, 1] == 0.0) | (pts[:, 1] == 1.0)
        )
        assert on_edge.all()

    def test_boundary_is_mirror_symmetric(self, cell_h01):
        """Opposite cell edges carry bitwise-identical node coordinates, the
        property that makes node-to-node tiling possible."""
        pts = cell_h01.vertices[cell_h01.boundary_nodes]
        left = np.sort(pts[pts[:, 0] == 0.0][:, 1])
        right = np.sort(pts[pts[:, 0] == 1.0][:, 1])
        bottom = np.sort(pts[pts[:, 1] == 0.0][:, 0])
        top = np.sort(pts[pts[:, 1] == 1.0][:, 0])
        assert np.array_equal(left, right)
        assert np.array_equal(bottom, top)
        assert np.array_equal(left, bottom)

    def test_coarse_h_clamped(self):
        a = build_cell_mesh(SPEC, 0.7)
        b = build_cell_mesh(SPEC, 0.25)
        assert np.array_equal(a.vertices, b.vertices)

    def test_interface_node_count_multiple_of_eight(self):
        for h in (0.25, 0.17, 0.1, 0.06, 0.05, 0.02, 0.0125):
            n = interface_node_count(SPEC.radius, h)
            assert n % 8 == 0
            assert n >= np.ceil(2 * np.pi * SPEC.radius / h)

    def test_bad_grading_raises_quality_failure(self, monkeypatch):
        monkeypatch.setattr(meshing, "RING_GRADING", 0.2)
        with pytest.raises(MeshQualityFailure):
            build_cell_mesh(SPEC, 0.05)


class TestMembraneCells:
    def test_quarter_eps_keeps_center_four(self):
        assert membrane_cells(4, SPEC.beta) == [(1, 1), (1, 2), (2, 1), (2, 2)]

    def test_half_eps_keeps_none(self):
        assert membrane_cells(2, SPEC.beta) == []

    def test_interior_count(self):
        assert len(membrane_cells(10, SPEC.beta)) == 64


class TestTiledDomain:
    def test_identity_quarter_eps(self, cell_h01):
        mesh = tile_domain_mesh(cell_h01, IdentityMap(), 0.25, SPEC)
        rep = mesh_report(mesh)
        assert rep.ok, rep.issues
        assert abs(mesh.triangle_areas().sum() - 1.0) < 1e-12
        cells = set(map(tuple, mesh.tri_cell[mesh.tri_region == MINUS].tolist()))
        assert cells == {(1, 1), (1, 2), (2, 1), (2, 2)}
        n_if = len(cell_h01.interface_pairs)
        assert len(mesh.interface_pairs) == 4 * n_if

    def test_half_eps_has_no_membranes(self, cell_h01):
        mesh = tile_domain_mesh(cell_h01, IdentityMap(), 0.5, SPEC)
        assert len(mesh.interface_pairs) == 0
        assert (mesh.tri_region == PLUS).all()
        assert abs(mesh.triangle_areas().sum() - 1.0) < 1e-12

    def test_deformed_tiling_conforms(self, cell_h01):
        dmap = BernoulliCellwiseMap(seed=42)
        mesh = tile_domain_mesh(cell_h01, dmap, 0.125, SPEC)
        rep = mesh_report(mesh)
        assert rep.ok, rep.issues
        assert abs(mesh.triangle_areas().sum() - 1.0) < 1e-10

    def test_membranes_off(self, cell_h01):
        mesh = tile_domain_mesh(cell_h01, IdentityMap(), 0.25, SPEC, membranes_rule="off")
        assert len(mesh.interface_pairs) == 0
        assert (mesh.tri_region == PLUS).all()

    def test_seed_changes_only_flipped_cells(self, cell_h01):
        a = tile_domain_mesh(cell_h01, BernoulliCellwiseMap(seed=1), 0.125, SPEC)
        b = tile_domain_mesh(cell_h01, BernoulliCellwiseMap(seed=2), 0.125, SPEC)
        bits_a = BernoulliCellwiseMap(seed=1).field
        bits_b = BernoulliCellwiseMap(seed=2).field
        same = np.array(
            [bits_a.bit(tuple(k)) == bits_b.bit(tuple(k)) for k in a.tri_cell]
        )
        # triangle connectivity is shared; vertex positions agree exactly on
        # cells whose Bernoulli bits agree
        assert np.array_equal(a.triangles, b.triangles)
        for tri_a, tri_b, keep in zip(a.triangles, b.triangles, same):
            if keep:
                assert np.array_equal(a.vertices[tri_a], b.vertices[tri_b])

    def test_rejects_non_integer_reciprocal_eps(self, cell_h01):
        with pytest.raises(ValueError):
            tile_domain_mesh(cell_h01, IdentityMap(), 0.3, SPEC)

    def test_stitch_failure_on_perturbed_template(self, cell_h01):
        bad = MembraneMesh(
            vertices=cell_h01.vertices.copy(),
            triangles=cell_h01.triangles,
            tri_region=cell_h01.tri_region,
            tri_cell=cell_h01.tri_cell,
            interface_pairs=cell_h01.interface_pairs,
            boundary_nodes=cell_h01.boundary_nodes,
            h=cell_h01.h,
        )
        left = [v for v in bad.boundary_nodes if bad.vertices[v, 0] == 0.0]
        target = next(v for v in left if 0.2 < bad.vertices[v, 1] < 0.8)
        bad.vertices[target, 1] += 5e-12  # below the key grid, above tolerance
        with pytest.raises(StitchFailure):
            tile_domain_mesh(bad, IdentityMap(), 0.25, SPEC)


class TestTruncatedMesh:
    def test_single_cell_halfwidth(self, cell_h01):
        mesh = build_truncated_mesh(cell_h01, IdentityMap(), 1)
        cells = set(map(tuple, mesh.tri_cell.tolist()))
        assert cells == {(-1, -1), (-1, 0), (0, -1), (0, 0)}
        assert len(mesh.interface_pairs) == 4 * len(cell_h01.interface_pairs)
        assert abs(mesh.triangle_areas().sum() - 4.0) < 1e-12

    def test_deformed_area_preserved(self, cell_h01):
        """Each cell maps onto itself, so mesh area equals the cube area."""
        mesh = build_truncated_mesh(cell_h01, BernoulliCellwiseMap(seed=7), 4)
        assert abs(mesh.triangle_areas().sum() - 64.0) < 1e-10
        assert mesh_report(mesh).ok

    def test_all_cells_carry_membranes(self, cell_h01):
        mesh = build_truncated_mesh(cell_h01, IdentityMap(), 2)
        cells = set(map(tuple, mesh.tri_cell[mesh.tri_region == MINUS].tolist()))
        assert len(cells) == 16

    def test_boundary_nodes_on_cube(self, cell_h01):
        mesh = build_truncated_mesh(cell_h01, BernoulliCellwiseMap(seed=3), 2)
        pts = mesh.ref_vertices[mesh.boundary_nodes]
        on_edge = (np.abs(np.abs(pts[:, 0]) - 2.0) < 1e-12) | (
            np.abs(np.abs(pts[:, 1]) - 2.0) < 1e-12
        )
        assert on_edge.all()

    def test_reference_vertices_track_lattice(self, cell_h01):
        dmap = BernoulliCellwiseMap(seed=11)
        mesh = build_truncated_mesh(cell_h01, dmap, 1)
        phys = dmap.apply(mesh.ref_vertices)
        assert np.abs(phys - mesh.vertices).max() < 1e-14


class TestSquareMesh:
    def test_counts_and_area(self):
        mesh = build_square_mesh(8)
        assert mesh.num_triangles == 128
        assert mesh.num_vertices == 81
        assert abs(mesh.triangle_areas().sum() - 1.0) < 1e-14
        assert len(mesh.boundary_nodes) == 32
        assert mesh_report(mesh).ok


class TestExportImport:
    def test_round_trip_bit_exact(self, cell_h01, tmp_path):
        mesh = tile_domain_mesh(cell_h01, BernoulliCellwiseMap(seed=5), 0.25, SPEC)
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        export_mesh(mesh, p1)
        again = import_mesh(p1)
        export_mesh(again, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(mesh.vertices, again.vertices)
        assert np.array_equal(mesh.triangles, again.triangles)
        assert np.array_equal(mesh.tri_region, again.tri_region)
        assert np.array_equal(mesh.interface_pairs, again.interface_pairs)
        assert np.array_equal(mesh.boundary_nodes, again.boundary_nodes)

    def test_rebuild_is_deterministic(self, tmp_path):
        paths = []
        for i in range(2):
            cell = build_cell_mesh(SPEC, 0.1)
            mesh = tile_domain_mesh(cell, BernoulliCellwiseMap(seed=9), 0.125, SPEC)
            p = tmp_path / f"m{i}.txt"
            export_mesh(mesh, p)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_rejects_bad_header(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("not-a-mesh\n")
        with pytest.raises(ValueError):
            import_mesh(p)


class TestReportFaultDetection:
    def test_flags_broken_pairing(self, cell_h01):
        mesh = MembraneMesh(
            vertices=cell_h01.vertices.copy(),
            triangles=cell_h01.triangles,
            tri_region=cell_h01.tri_region,
            tri_cell=cell_h01.tri_cell,
            interface_pairs=cell_h01.interface_pairs,
            boundary_nodes=cell_h01.boundary_nodes,
            h=cell_h01.h,
        )
        mesh.vertices[mesh.interface_pairs[0, 1]] += 1e-6
        rep = mesh_report(mesh)
        assert not rep.ok
        assert rep.pairing_residual > 1e-7

    def test_flags_nonconforming_triangle(self, cell_h01):
        tris = cell_h01.triangles.copy()
        # retarget one vertex of an interior PLUS triangle, leaving a hole
        idx = int(np.flatnonzero(cell_h01.tri_region == PLUS)[-1])
        tris[idx, 0] = cell_h01.triangles[idx - 2, 0]
        mesh = MembraneMesh(
            vertices=cell_h01.vertices,
            triangles=tris,
            tri_region=cell_h01.tri_region,
            tri_cell=cell_h01.tri_cell,
            interface_pairs=cell_h01.interface_pairs,
            boundary_nodes=cell_h01.boundary_nodes,
            h=cell_h01.h,
        )
        rep = mesh_report(mesh)
        assert not rep.ok
        assert not rep.conforming or not rep.positive_areas

    def test_rejects_empty_mesh(self):
        empty = MembraneMesh(
            vertices=np.zeros((0, 2)),
            triangles=np.zeros((0, 3), dtype=np.int64),
            tri_region=np.zeros(0, dtype=np.int8),
            tri_cell=np.zeros((0, 2), dtype=np.int64),
            interface_pairs=np.zeros((0, 2), dtype=np.int64),
            boundary_nodes=np.zeros(0, dtype=np.int64),
            h=0.1,
        )
        with pytest.raises(ValueError):
            mesh_report(empty)
