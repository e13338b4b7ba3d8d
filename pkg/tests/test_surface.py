import json
import math
import random
from pathlib import Path

import numpy as np
import pytest

from dycksurf import surface as sf
from dycksurf.constants import SurfaceParameters
from dycksurf.surface import ConeSurface, CutGraph, SurfaceError

GOLDEN = Path(__file__).parent / "golden"

EXTREMAL_AREA = 1.152794345841759
ANGLE_6A = 6.62580327841745
ANGLE_CYL = 7.216176867963563  # 2*pi + theta


@pytest.fixture(scope="module")
def dyck():
    return sf.build_extremal_dyck()


class TestConeSurfaceBasics:
    def test_triangle_inequality_rejected(self):
        with pytest.raises(SurfaceError):
            ConeSurface([(1.0, 1.0, 3.0)], [])

    def test_double_glued_slot_rejected(self):
        faces = [(1.0, 1.0, 1.0)] * 3
        with pytest.raises(SurfaceError):
            ConeSurface(faces, [(0, 0, 1, 0, False), (0, 0, 2, 0, False)])

    def test_length_mismatch_rejected(self):
        with pytest.raises(SurfaceError):
            ConeSurface([(1.0, 1.0, 1.0), (2.0, 2.0, 2.0)], [(0, 0, 1, 0, False)])

    def test_single_triangle(self):
        s = ConeSurface([(3.0, 4.0, 5.0)], [])
        assert s.euler_characteristic == 1
        assert s.n_vertices == 3
        assert abs(s.area - 6.0) < 1e-12
        assert abs(s.gauss_bonnet_residual()) < 1e-12
        assert len(s.boundary_slots) == 3

    def test_face_angles_sum(self):
        s = ConeSurface([(2.0, 3.0, 4.0)], [])
        assert abs(sum(s.face_angles(0)) - math.pi) < 1e-12

    def test_chart_lengths(self):
        s = ConeSurface([(2.0, 3.0, 4.0)], [])
        ch = s.chart(0)
        for e in range(3):
            d = np.linalg.norm(ch[(e + 1) % 3] - ch[e])
            assert abs(d - s.faces[0][e]) < 1e-12


class TestModelSurfaces:
    def test_flat_torus(self):
        t = sf.build_flat_torus()
        assert t.euler_characteristic == 0
        assert t.orientable
        assert t.is_closed
        assert t.n_vertices == 1
        assert abs(t.vertex_angles[0] - 2 * math.pi) < 1e-12

    def test_sheared_torus(self):
        t = sf.build_flat_torus(1.0, 1.0, shear=0.3)
        assert t.euler_characteristic == 0
        assert t.orientable
        assert abs(t.gauss_bonnet_residual()) < 1e-9

    def test_klein_bottle(self):
        k = sf.build_flat_klein_bottle()
        assert k.euler_characteristic == 0
        assert not k.orientable
        assert k.is_closed
        assert not k.cone_points()

    def test_klein_cover_is_torus(self):
        k = sf.build_flat_klein_bottle()
        t = sf.orientation_double_cover(k)
        assert t.orientable
        assert t.euler_characteristic == 0
        assert abs(t.area - 2.0) < 1e-12
        assert not t.cone_points()

    def test_cover_of_orientable_rejected(self):
        with pytest.raises(SurfaceError):
            sf.orientation_double_cover(sf.build_flat_torus())

    def test_cylinder(self):
        c = sf.build_cylinder(2.0, 0.5, columns=6)
        assert c.euler_characteristic == 0
        assert c.orientable
        assert abs(c.area - 1.0) < 1e-12
        comps = sf.boundary_components(c)
        assert len(comps) == 2
        for comp in comps:
            assert abs(sum(c.faces[f][e] for f, e in comp) - 2.0) < 1e-12

    def test_round_annulus(self):
        a = sf.build_round_annulus(1.0, 2.0, n_theta=64, n_r=8)
        assert a.euler_characteristic == 0
        assert a.orientable
        assert abs(a.area - 3 * math.pi) < 0.02
        assert len(sf.boundary_components(a)) == 2
        # inner vertices of a planar mesh are flat
        assert not a.cone_points(tol=1e-9)

    def test_golden_klein_bottle(self):
        k = sf.build_flat_klein_bottle()
        loaded = ConeSurface.load_json(GOLDEN / "klein_bottle.json")
        assert k.structurally_equal(loaded)


class TestTrapezoid:
    def test_shape(self):
        p = SurfaceParameters.paper()
        quad = sf.build_trapezoid(p)
        assert quad.shape == (4, 2)
        assert abs(np.linalg.norm(quad[1] - quad[0]) - p.short_side) < 1e-12
        assert abs(np.linalg.norm(quad[2] - quad[3]) - p.long_side) < 1e-12
        assert abs(np.linalg.norm(quad[3] - quad[0]) - p.leg) < 1e-12
        assert abs(quad[2][1] - p.h) < 1e-12

    def test_base_angle(self):
        p = SurfaceParameters.paper()
        quad = sf.build_trapezoid(p)
        v1 = quad[1] - quad[0]
        v2 = quad[3] - quad[0]
        ang = math.acos(v1 @ v2 / (np.linalg.norm(v1) * np.linalg.norm(v2)))
        # interior angle at the short side is pi - alpha
        assert abs(ang - (math.pi - p.alpha)) < 1e-9


class TestExtremalSurface:
    def test_euler_characteristic(self, dyck):
        assert dyck.euler_characteristic == -1

    def test_closed_nonorientable(self, dyck):
        assert dyck.is_closed
        assert not dyck.orientable

    def test_area(self, dyck):
        assert abs(dyck.area - EXTREMAL_AREA) < 1e-9

    def test_gauss_bonnet(self, dyck):
        assert abs(dyck.gauss_bonnet_residual()) < 1e-9

    def test_cone_angle_multiset(self, dyck):
        angles = sorted(dyck.cone_points().values())
        assert len(angles) == 8
        for a in angles[:2]:
            assert abs(a - ANGLE_6A) < 1e-9
        for a in angles[2:]:
            assert abs(a - ANGLE_CYL) < 1e-9

    def test_marked_points_flat(self, dyck):
        for corner in dyck.marks["weierstrass"]:
            v = dyck.vertex_of(tuple(corner))
            assert abs(dyck.vertex_angles[v] - 2 * math.pi) < 1e-9
        assert len({dyck.vertex_of(tuple(c)) for c in dyck.marks["weierstrass"]}) == 3

    def test_marked_cone_points(self, dyck):
        vp = dyck.vertex_of(tuple(dyck.marks["p"]))
        vq = dyck.vertex_of(tuple(dyck.marks["q"]))
        assert vp != vq
        for v in (vp, vq):
            assert abs(dyck.vertex_angles[v] - ANGLE_6A) < 1e-9

    def test_soul_length(self, dyck):
        soul = dyck.marks["soul"]
        assert abs(sum(dyck.faces[f][e] for f, e in soul) - 1.0) < 1e-12

    def test_vertex_links_close_up(self, dyck):
        for f in range(len(dyck.faces)):
            for c in range(3):
                link = dyck.vertex_link((f, c))
                tot = sum(dyck.face_angles(ff)[cc] for ff, cc, _, _ in link)
                v = dyck.vertex_of((f, c))
                assert abs(tot - dyck.vertex_angles[v]) < 1e-9

    def test_transitions(self, dyck):
        for f, e, f2, e2, flip in dyck.gluings:
            f2_, e2_, _, R, t = dyck.edge_transition(f, e)
            assert (f2_, e2_) == (f2, e2)
            assert abs(abs(np.linalg.det(R)) - 1) < 1e-12
            ch, ch2 = dyck.chart(f), dyck.chart(f2)
            pm = (ch[e] + ch[(e + 1) % 3]) / 2
            qm = (ch2[e2] + ch2[(e2 + 1) % 3]) / 2
            assert np.allclose(R @ qm + t, pm, atol=1e-9)

    def test_symmetry_order(self, dyck):
        assert sf.check_symmetry(dyck)["order"] == 12

    def test_double_cover_genus_two(self, dyck):
        c = sf.orientation_double_cover(dyck)
        assert c.orientable
        assert c.euler_characteristic == -2
        assert abs(c.area - 2 * EXTREMAL_AREA) < 1e-9

    def test_json_roundtrip(self, dyck, tmp_path):
        path = tmp_path / "dyck.json"
        dyck.save_json(path)
        s2 = ConeSurface.load_json(path)
        assert s2.structurally_equal(dyck)
        assert s2.marks["p"] == dyck.marks["p"]
        assert [tuple(c) for c in s2.marks["weierstrass"]] == dyck.marks["weierstrass"]
        # a second save is byte-identical
        path2 = tmp_path / "dyck2.json"
        s2.save_json(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_obj_export(self, dyck, tmp_path):
        path = tmp_path / "dyck.obj"
        dyck.save_obj(path)
        text = path.read_text()
        assert text.count("\nf ") == len(dyck.faces)


class TestCutAndCollar:
    def test_cut_reglue_roundtrip(self, dyck):
        g = sf.extremal_cut_graph(dyck)
        cut = sf.cut_along_graph(dyck, g)
        removed = [r for r in dyck.gluings if r not in cut.gluings]
        assert len(removed) == 6
        back = sf.reglue(cut, removed)
        assert back.structurally_equal(dyck)

    def test_cut_surface_shape(self, dyck):
        cut = sf.cut_along_graph(dyck, sf.extremal_cut_graph(dyck))
        assert cut.euler_characteristic == 0
        assert not cut.orientable
        assert len(sf.boundary_components(cut)) == 1
        bdry_len = sum(cut.faces[f][e] for f, e in cut.boundary_slots)
        # boundary doubles the three identified sides of total length 3*0.5598...
        assert abs(bdry_len - 12 * 0.2799082452921564) < 1e-9

    def test_cut_rejects_boundary_edge(self):
        c = sf.build_cylinder(2.0, 0.5)
        bad = c.boundary_slots[0]
        with pytest.raises(SurfaceError):
            sf.cut_along_graph(c, CutGraph([[bad]]))

    def test_collar_direct(self):
        c = sf.build_collar_flat()
        assert c.orientable
        assert c.euler_characteristic == 0
        assert abs(c.area - 2 * EXTREMAL_AREA) < 1e-9
        assert len(sf.boundary_components(c)) == 2
        soul_len = sum(c.faces[f][e] for f, e in c.marks["soul"])
        assert abs(soul_len - 2.0) < 1e-12

    def test_collar_pipelines_agree(self):
        direct = sf.build_collar_flat()
        via_cover = sf.build_collar_leq0_via_cover()
        assert sf.are_isometric(direct, via_cover)

    def test_collar_not_isometric_to_perturbed(self):
        direct = sf.build_collar_flat()
        other = sf.build_collar_flat(SurfaceParameters.from_h(0.23))
        assert not sf.are_isometric(direct, other)


class TestSubdivision:
    def test_invariants_preserved(self, dyck):
        s2 = sf.subdivide(dyck)
        assert len(s2.faces) == 4 * len(dyck.faces)
        assert s2.euler_characteristic == dyck.euler_characteristic
        assert s2.orientable == dyck.orientable
        assert abs(s2.area - dyck.area) < 1e-9
        assert abs(s2.gauss_bonnet_residual()) < 1e-9

    def test_cone_angles_preserved(self, dyck):
        s2 = sf.subdivide(dyck)
        assert sorted(np.round(list(s2.cone_points().values()), 9).tolist()) == sorted(
            np.round(list(dyck.cone_points().values()), 9).tolist()
        )

    def test_marks_follow(self, dyck):
        s2 = sf.subdivide(dyck)
        for corner in s2.marks["weierstrass"]:
            assert abs(s2.vertex_angles[s2.vertex_of(tuple(corner))] - 2 * math.pi) < 1e-9
        soul_len = sum(s2.faces[f][e] for f, e in s2.marks["soul"])
        assert abs(soul_len - 1.0) < 1e-12

    def test_boundary_labels_follow(self):
        c = sf.build_cylinder(2.0, 0.5)
        c2 = sf.subdivide(c)
        labels = c2.marks["boundary_labels"]
        assert len(labels) == 2 * len(c.marks["boundary_labels"])
        assert set(labels) == {str(s) for s in map(tuple, c2.boundary_slots)}

    def test_repeated_subdivision(self):
        k = sf.build_flat_klein_bottle()
        for _ in range(3):
            k = sf.subdivide(k)
        assert k.euler_characteristic == 0
        assert not k.orientable
        assert abs(k.area - 1.0) < 1e-12


class TestVertexFacesBuilder:
    def test_square(self):
        coords = [(0, 0), (1, 0), (1, 1), (0, 1)]
        s = sf.surface_from_vertex_faces(coords, [(0, 1, 2), (0, 2, 3)])
        assert s.euler_characteristic == 1
        assert abs(s.area - 1.0) < 1e-12
        assert len(s.gluings) == 1

    def test_overshared_edge_rejected(self):
        coords = [(0, 0), (1, 0), (0, 1), (0, -1), (-1, 0)]
        faces = [(0, 1, 2), (0, 3, 1), (0, 1, 4)]
        with pytest.raises(SurfaceError):
            sf.surface_from_vertex_faces(coords, faces)

    def test_random_fans_flat(self):
        # triangle fans around an interior hub: the hub angle is exactly 2*pi
        rng = random.Random(11)
        for _ in range(10):
            n = rng.randint(4, 9)
            weights = [rng.uniform(0.6, 1.4) for _ in range(n)]
            scale = 2 * math.pi / sum(weights)
            angles = [0.0]
            for w in weights[:-1]:
                angles.append(angles[-1] + w * scale)
            coords = [(0.0, 0.0)] + [(math.cos(a), math.sin(a)) for a in angles]
            faces = [(0, 1 + i, 1 + (i + 1) % n) for i in range(n)]
            s = sf.surface_from_vertex_faces(coords, faces)
            assert s.euler_characteristic == 1
            assert abs(s.vertex_angles[s.vertex_of((0, 0))] - 2 * math.pi) < 1e-9


class TestIsometries:
    def test_torus_rectangle_vs_square(self):
        assert not sf.are_isometric(sf.build_flat_torus(1, 1), sf.build_flat_torus(1, 2))

    def test_klein_automorphisms_nonempty(self):
        k = sf.build_flat_klein_bottle()
        assert sf.check_symmetry(k)["order"] >= 1

    def test_identity_always_found(self, dyck):
        maps = sf.isometries(dyck, dyck, limit=None)
        ident = {f: (f, (0, 1, 2)) for f in range(len(dyck.faces))}
        assert ident in maps
