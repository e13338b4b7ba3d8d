"""Piecewise-flat cone surfaces with explicit edge gluings.

A surface is a list of Euclidean triangles (three edge lengths each) plus a
list of gluing records ``(f, e, f2, e2, flip)`` pairing edge slot ``e`` of
face ``f`` with slot ``e2`` of ``f2``.  Slot ``e`` of a face runs from local
vertex ``e`` to vertex ``(e+1) % 3``.  With ``flip=False`` the identification
matches ``v_e <-> v_e2`` and ``v_{e+1} <-> v_{e2+1}``; with ``flip=True`` it
matches ``v_e <-> v_{e2+1}`` and ``v_{e+1} <-> v_e2``.  Unpaired slots are
boundary edges.  Vertices, cone angles, orientability and Euler
characteristic are all derived from the gluing combinatorics.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .constants import SurfaceParameters, relations_ok

GLUE_LENGTH_TOL = 1e-12
ANGLE_TOL = 1e-9

Corner = tuple[int, int]
Slot = tuple[int, int]


class SurfaceError(ValueError):
    pass


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int):
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.parent[max(rx, ry)] = min(rx, ry)


def glued_corners(g: tuple[int, int, int, int, bool]) -> list[tuple[Corner, Corner]]:
    """Corner identifications induced by one gluing record."""
    f, e, f2, e2, flip = g
    if flip:
        return [((f, e), (f2, (e2 + 1) % 3)), ((f, (e + 1) % 3), (f2, e2))]
    return [((f, e), (f2, e2)), ((f, (e + 1) % 3), (f2, (e2 + 1) % 3))]


class ConeSurface:
    """Immutable triangulated piecewise-flat surface, possibly with boundary."""

    def __init__(self, faces, gluings, name: str = "", marks: dict | None = None):
        self.faces = [tuple(float(l) for l in tri) for tri in faces]
        self.gluings = [
            (int(f), int(e), int(f2), int(e2), bool(flip))
            for (f, e, f2, e2, flip) in gluings
        ]
        self.name = name
        self.marks = marks or {}
        self._validate()

    # -- validation and derived combinatorics ---------------------------

    def _validate(self):
        for i, (a, b, c) in enumerate(self.faces):
            if not (a + b > c and b + c > a and c + a > b):
                raise SurfaceError(f"face {i} violates the triangle inequality")
        seen: set[Slot] = set()
        for f, e, f2, e2, flip in self.gluings:
            for s in ((f, e), (f2, e2)):
                if s in seen:
                    raise SurfaceError(f"slot {s} glued twice")
                seen.add(s)
                if not (0 <= s[0] < len(self.faces) and 0 <= s[1] < 3):
                    raise SurfaceError(f"slot {s} out of range")
            if abs(self.faces[f][e] - self.faces[f2][e2]) > GLUE_LENGTH_TOL:
                raise SurfaceError(
                    f"glued edges ({f},{e})~({f2},{e2}) have unequal lengths"
                )

    @cached_property
    def glue_map(self) -> dict[Slot, tuple[int, int, bool]]:
        m: dict[Slot, tuple[int, int, bool]] = {}
        for f, e, f2, e2, flip in self.gluings:
            m[(f, e)] = (f2, e2, flip)
            m[(f2, e2)] = (f, e, flip)
        return m

    @cached_property
    def boundary_slots(self) -> list[Slot]:
        return [
            (f, e)
            for f in range(len(self.faces))
            for e in range(3)
            if (f, e) not in self.glue_map
        ]

    @property
    def is_closed(self) -> bool:
        return not self.boundary_slots

    @cached_property
    def _corner_orbits(self) -> list[int]:
        uf = _UnionFind(3 * len(self.faces))
        for g in self.gluings:
            for (f, c), (f2, c2) in glued_corners(g):
                uf.union(3 * f + c, 3 * f2 + c2)
        roots = [uf.find(i) for i in range(3 * len(self.faces))]
        ids: dict[int, int] = {}
        out = []
        for r in roots:
            if r not in ids:
                ids[r] = len(ids)
            out.append(ids[r])
        return out

    def vertex_of(self, corner: Corner) -> int:
        return self._corner_orbits[3 * corner[0] + corner[1]]

    @property
    def n_vertices(self) -> int:
        return max(self._corner_orbits) + 1

    @property
    def n_edges(self) -> int:
        return len(self.gluings) + len(self.boundary_slots)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + len(self.faces)

    def face_angles(self, f: int) -> tuple[float, float, float]:
        l = self.faces[f]
        out = []
        for c in range(3):
            adj1, adj2, opp = l[c], l[(c + 2) % 3], l[(c + 1) % 3]
            cosv = (adj1 * adj1 + adj2 * adj2 - opp * opp) / (2 * adj1 * adj2)
            out.append(math.acos(min(1.0, max(-1.0, cosv))))
        return tuple(out)

    @cached_property
    def vertex_angles(self) -> list[float]:
        tot = [0.0] * self.n_vertices
        for f in range(len(self.faces)):
            ang = self.face_angles(f)
            for c in range(3):
                tot[self.vertex_of((f, c))] += ang[c]
        return tot

    @cached_property
    def boundary_vertices(self) -> set[int]:
        out = set()
        for f, e in self.boundary_slots:
            out.add(self.vertex_of((f, e)))
            out.add(self.vertex_of((f, (e + 1) % 3)))
        return out

    def cone_points(self, tol: float = 1e-9) -> dict[int, float]:
        """Interior vertices whose total angle differs from 2*pi."""
        return {
            v: a
            for v, a in enumerate(self.vertex_angles)
            if v not in self.boundary_vertices and abs(a - 2 * math.pi) > tol
        }

    def gauss_bonnet_residual(self) -> float:
        total = 0.0
        for v, a in enumerate(self.vertex_angles):
            if v in self.boundary_vertices:
                total += math.pi - a
            else:
                total += 2 * math.pi - a
        return total - 2 * math.pi * self.euler_characteristic

    @cached_property
    def orientable(self) -> bool:
        sign = [0] * len(self.faces)
        for f0 in range(len(self.faces)):
            if sign[f0]:
                continue
            sign[f0] = 1
            stack = [f0]
            while stack:
                f = stack.pop()
                for e in range(3):
                    g = self.glue_map.get((f, e))
                    if g is None:
                        continue
                    f2, _, flip = g
                    want = sign[f] if flip else -sign[f]
                    if sign[f2] == 0:
                        sign[f2] = want
                        stack.append(f2)
                    elif sign[f2] != want:
                        return False
        return True

    def face_area(self, f: int) -> float:
        a, b, c = self.faces[f]
        s = (a + b + c) / 2
        return math.sqrt(max(0.0, s * (s - a) * (s - b) * (s - c)))

    @cached_property
    def area(self) -> float:
        return sum(self.face_area(f) for f in range(len(self.faces)))

    # -- planar charts and transitions ----------------------------------

    def chart(self, f: int) -> np.ndarray:
        """Planar coordinates of face f: v0 at origin, v1 on the +x axis."""
        l0, l1, l2 = self.faces[f]
        a0 = self.face_angles(f)[0]
        return np.array(
            [[0.0, 0.0], [l0, 0.0], [l2 * math.cos(a0), l2 * math.sin(a0)]]
        )

    def edge_transition(self, f: int, e: int):
        """Isometry mapping chart(f2) into chart(f) across the gluing at (f, e).

        Returns (f2, e2, flip, R, t) with x |-> R @ x + t; R may be a
        reflection when the gluing reverses orientation.
        """
        g = self.glue_map.get((f, e))
        if g is None:
            raise SurfaceError(f"slot ({f},{e}) is a boundary edge")
        f2, e2, flip = g
        ch, ch2 = self.chart(f), self.chart(f2)
        p0, p1 = ch[e], ch[(e + 1) % 3]
        if flip:
            q0, q1 = ch2[(e2 + 1) % 3], ch2[e2]
        else:
            q0, q1 = ch2[e2], ch2[(e2 + 1) % 3]
        # two isometries map segment q0q1 onto p0p1: a rotation and a glide
        # reflection; the glued face must land on the far side of the edge
        u = p1 - p0
        v = q1 - q0
        nrm = float(v @ v)
        c, s = float(u @ v) / nrm, float(u[1] * v[0] - u[0] * v[1]) / nrm
        R_rot = np.array([[c, -s], [s, c]])
        n = np.array([-v[1], v[0]]) / math.sqrt(nrm)
        R_ref = R_rot @ (np.eye(2) - 2.0 * np.outer(n, n))
        opp = ch2[(e2 + 2) % 3]
        side_in = _side(p0, p1, ch[(e + 2) % 3])
        for R in (R_rot, R_ref):
            t = p0 - R @ q0
            assert np.allclose(R @ q1 + t, p1, atol=1e-9)
            if _side(p0, p1, R @ opp + t) == -side_in:
                return f2, e2, flip, R, t
        raise SurfaceError(f"no valid transition across ({f},{e})")

    # -- vertex links ----------------------------------------------------

    def _corner_slots(self, c: int) -> tuple[int, int]:
        """The two edge slots incident to local corner c (next, prev)."""
        return c, (c + 2) % 3

    def _step_link(self, f: int, c: int, exit_slot: int):
        """Cross `exit_slot` at corner (f, c); return (f2, c2, entry_slot)."""
        g = self.glue_map.get((f, exit_slot))
        if g is None:
            return None
        f2, e2, flip = g
        starts = c == exit_slot  # vertex is the start of the exit edge
        if starts:
            c2 = (e2 + 1) % 3 if flip else e2
        else:
            c2 = e2 if flip else (e2 + 1) % 3
        return f2, c2, e2

    def vertex_link(self, corner: Corner) -> list[tuple[int, int, int, float]]:
        """Corners around the vertex of `corner`, in cyclic (or chain) order.

        Each item is (face, corner, slot entered through, angular offset); the
        offset of an item is the total corner angle accumulated before it.
        For a boundary vertex the walk starts at one boundary slot and ends
        at the other.
        """
        v = self.vertex_of(corner)
        f, c = corner
        # rewind to a boundary slot if there is one
        entry = self._corner_slots(c)[1]
        start = (f, c, entry)
        seen = {(f, c)}
        while True:
            step = self._step_link(start[0], start[1], start[2])
            if step is None:
                break
            f2, c2, e2 = step
            if (f2, c2) in seen:
                break  # interior vertex: full cycle
            seen.add((f2, c2))
            other = [s for s in self._corner_slots(c2) if s != e2][0]
            start = (f2, c2, other)
        # walk forward accumulating offsets
        out = []
        offset = 0.0
        f, c, entry = start
        # entry slot for the forward walk is the *other* slot at start corner
        entry = [s for s in self._corner_slots(c) if s != start[2]][0]
        visited = set()
        while True:
            if (f, c) in visited:
                break
            visited.add((f, c))
            out.append((f, c, entry, offset))
            offset += self.face_angles(f)[c]
            exit_slot = [s for s in self._corner_slots(c) if s != entry][0]
            step = self._step_link(f, c, exit_slot)
            if step is None:
                break
            f, c, entry = step
        assert all(self.vertex_of((ff, cc)) == v for ff, cc, _, _ in out)
        return out

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "faces": [list(tri) for tri in self.faces],
            "gluings": [[f, e, f2, e2, int(flip)] for f, e, f2, e2, flip in self.gluings],
            "marks": {
                "weierstrass": self.marks.get("weierstrass", []),
                "p": self.marks.get("p"),
                "q": self.marks.get("q"),
                "soul": self.marks.get("soul", []),
                **{
                    k: v
                    for k, v in sorted(self.marks.items())
                    if k not in ("weierstrass", "p", "q", "soul")
                },
            },
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, d: dict) -> "ConeSurface":
        marks = {}
        for k, v in d.get("marks", {}).items():
            if v is None or v == []:
                continue
            if k in ("weierstrass", "soul"):
                v = [tuple(x) for x in v]
            elif k in ("p", "q"):
                v = tuple(v)
            marks[k] = v
        return cls(d["faces"], [tuple(g) for g in d["gluings"]], d.get("name", ""), marks)

    @classmethod
    def load_json(cls, path) -> "ConeSurface":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def save_obj(self, path):
        """Per-face planar unfolding, for viewers only (not a global embedding)."""
        lines = [f"# {self.name or 'cone surface'}: per-face planar unfolding"]
        offset = 0.0
        idx = 1
        faces_out = []
        for f in range(len(self.faces)):
            ch = self.chart(f)
            for x, y in ch:
                lines.append(f"v {x + offset:.12f} {y:.12f} 0.0")
            faces_out.append(f"f {idx} {idx + 1} {idx + 2}")
            idx += 3
            offset += max(self.faces[f]) + 0.1
        lines += faces_out
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def structurally_equal(self, other: "ConeSurface", tol: float = 1e-12) -> bool:
        if len(self.faces) != len(other.faces) or len(self.gluings) != len(other.gluings):
            return False
        if any(
            abs(a - b) > tol for t1, t2 in zip(self.faces, other.faces) for a, b in zip(t1, t2)
        ):
            return False
        return sorted(self.gluings) == sorted(other.gluings)


def _side(p0, p1, x) -> int:
    cr = (p1[0] - p0[0]) * (x[1] - p0[1]) - (p1[1] - p0[1]) * (x[0] - p0[0])
    return 1 if cr > 0 else (-1 if cr < 0 else 0)


# -- cut graphs --------------------------------------------------------


@dataclass
class CutGraph:
    """Edge paths on a surface, each path a list of interior edge slots."""

    paths: list[list[Slot]] = field(default_factory=list)

    def all_slots(self) -> list[Slot]:
        return [s for p in self.paths for s in p]


def cut_along_graph(s: ConeSurface, g: CutGraph) -> ConeSurface:
    """Cut the surface open along mesh-edge paths (removes their gluings)."""
    cut: set[Slot] = set()
    for slot in g.all_slots():
        slot = (int(slot[0]), int(slot[1]))
        rec = s.glue_map.get(slot)
        if rec is None:
            raise SurfaceError(f"cut edge {slot} is not an interior edge")
        twin = (rec[0], rec[1])
        if slot in cut or twin in cut:
            raise SurfaceError(f"cut edge {slot} repeated: graph not embedded")
        cut.add(slot)
        cut.add(twin)
    keep = [rec for rec in s.gluings if (rec[0], rec[1]) not in cut]
    marks = {k: v for k, v in s.marks.items() if k != "soul"}
    return ConeSurface(s.faces, keep, name=s.name + "|cut", marks=marks)


def reglue(s_cut: ConeSurface, removed: list[tuple]) -> ConeSurface:
    return ConeSurface(
        s_cut.faces,
        list(s_cut.gluings) + list(removed),
        name=s_cut.name.removesuffix("|cut"),
    )


# -- orientation double cover ------------------------------------------


def orientation_double_cover(s: ConeSurface) -> ConeSurface:
    """Orientable double cover: two copies of each face, sheets swapped
    across every orientation-reversing gluing."""
    if s.orientable:
        raise SurfaceError("surface is already orientable")
    F = len(s.faces)
    faces = list(s.faces) + list(s.faces)
    gluings = []
    for f, e, f2, e2, flip in s.gluings:
        other = 0 if flip else F  # flip=True preserves the face-orientation sign
        gluings.append((f, e, f2 + other, e2, flip))
        gluings.append((f + F, e, f2 + (F - other), e2, flip))
    marks = {}
    for k, v in s.marks.items():
        if k in ("weierstrass", "soul"):
            marks[k] = [tuple(x) for x in v] + [(x[0] + F, x[1]) for x in v]
        elif k in ("p", "q"):
            marks[k] = tuple(v)
        elif k in ("region", "cell"):
            marks[k] = list(v) + list(v)
        elif k == "boundary_labels":
            out = {}
            for key, lbl in v.items():
                f, e = ast.literal_eval(str(key))
                out[str((f, e))] = lbl
                out[str((f + F, e))] = lbl
            marks[k] = out
    return ConeSurface(faces, gluings, name=s.name + "|cover", marks=marks)


# -- uniform 4-to-1 subdivision ----------------------------------------


def _half_slot(f: int, e: int, k: int) -> Slot:
    """Child slot carrying half k (0 or 1) of parent edge (f, e)."""
    return (4 * f + (e + k) % 3, e)


def subdivide(s: ConeSurface) -> ConeSurface:
    faces = []
    gluings = []
    for f, (l0, l1, l2) in enumerate(s.faces):
        h0, h1, h2 = l0 / 2, l1 / 2, l2 / 2
        faces += [(h0, h1, h2), (h0, h1, h2), (h0, h1, h2), (h2, h0, h1)]
        d = 4 * f + 3
        gluings += [
            (4 * f, 1, d, 2, True),
            (4 * f + 1, 2, d, 0, True),
            (4 * f + 2, 0, d, 1, True),
        ]
    for f, e, f2, e2, flip in s.gluings:
        for k in range(2):
            k2 = 1 - k if flip else k
            a, b = _half_slot(f, e, k), _half_slot(f2, e2, k2)
            gluings.append((a[0], a[1], b[0], b[1], flip))
    marks = {}
    for k, v in s.marks.items():
        if k in ("weierstrass",):
            marks[k] = [_corner_child(c) for c in v]
        elif k in ("p", "q"):
            marks[k] = _corner_child(tuple(v))
        elif k == "soul":
            marks[k] = [h for (f, e) in v for h in (_half_slot(f, e, 0), _half_slot(f, e, 1))]
        elif k in ("region", "cell"):
            marks[k] = [lbl for lbl in v for _ in range(4)]
        elif k == "boundary_labels":
            marks[k] = {
                str(tuple(h)): lbl
                for slot_s, lbl in v.items()
                for h in _subdivided_boundary(slot_s)
            }
    return ConeSurface(faces, gluings, name=s.name + "|sub", marks=marks)


def _corner_child(corner) -> Corner:
    f, c = corner
    return (4 * f + c, c)


def _subdivided_boundary(slot_key) -> list[Slot]:
    f, e = slot_key if isinstance(slot_key, tuple) else ast.literal_eval(str(slot_key))
    return [_half_slot(f, e, 0), _half_slot(f, e, 1)]


# -- boundary components -----------------------------------------------


def boundary_components(s: ConeSurface) -> list[list[Slot]]:
    slots = s.boundary_slots
    uf = _UnionFind(len(slots))
    by_vertex: dict[int, list[int]] = {}
    for i, (f, e) in enumerate(slots):
        for c in (e, (e + 1) % 3):
            by_vertex.setdefault(s.vertex_of((f, c)), []).append(i)
    for group in by_vertex.values():
        for i in group[1:]:
            uf.union(group[0], i)
    comps: dict[int, list[Slot]] = {}
    for i, slot in enumerate(slots):
        comps.setdefault(uf.find(i), []).append(slot)
    return sorted(comps.values())


# -- builders -----------------------------------------------------------


def build_trapezoid(p: SurfaceParameters) -> np.ndarray:
    """Counterclockwise planar trapezoid: short side on the x axis, height h."""
    if not (0 < p.theta < math.pi / 2):
        raise SurfaceError("theta out of range")
    if abs(p.alpha - (math.pi - p.theta) / 2) > 1e-9:
        raise SurfaceError("alpha and theta violate the defining relations")
    w = p.h / math.tan(p.alpha)
    return np.array(
        [
            [0.0, 0.0],
            [p.short_side, 0.0],
            [p.short_side + w, p.h],
            [-w, p.h],
        ]
    )


def surface_from_vertex_faces(coords, faces, name: str = "", marks=None) -> ConeSurface:
    """Build a ConeSurface from a vertex-indexed triangulation.

    Only valid when no two faces share more than one edge; gluings and flips
    are recovered from shared (unordered) vertex-id pairs.
    """
    coords = np.asarray(coords, dtype=float)
    tris = [tuple(tri) for tri in faces]
    lengths = []
    for tri in tris:
        pts = coords[list(tri)]
        lengths.append(
            tuple(float(np.linalg.norm(pts[(i + 1) % 3] - pts[i])) for i in range(3))
        )
    edge_map: dict[tuple[int, int], list[Slot]] = {}
    for f, tri in enumerate(tris):
        for e in range(3):
            key = tuple(sorted((tri[e], tri[(e + 1) % 3])))
            edge_map.setdefault(key, []).append((f, e))
    gluings = []
    for key, occ in edge_map.items():
        if len(occ) > 2:
            raise SurfaceError(f"edge {key} shared by more than two faces")
        if len(occ) == 2:
            (f, e), (f2, e2) = occ
            # different start vertices: endpoints pair up crosswise
            flip = tris[f][e] != tris[f2][e2]
            gluings.append((f, e, f2, e2, bool(flip)))
    return ConeSurface(lengths, gluings, name=name, marks=marks)


def build_flat_torus(a: float = 1.0, b: float = 1.0, shear: float = 0.0) -> ConeSurface:
    """Flat torus from the lattice spanned by (a, 0) and (shear, b)."""
    u = np.array([a, 0.0])
    v = np.array([shear, b])
    l_u, l_v, l_d = np.linalg.norm(u), np.linalg.norm(v), np.linalg.norm(u + v)
    # faces (0, u, u+v) and (0, u+v, v)
    faces = [(l_u, l_v, l_d), (l_d, l_u, l_v)]
    gluings = [
        (0, 2, 1, 0, True),  # shared diagonal
        (0, 0, 1, 1, True),  # bottom ~ top
        (0, 1, 1, 2, True),  # right ~ left
    ]
    return ConeSurface(faces, gluings, name=f"torus({a},{b},{shear})")


def build_flat_klein_bottle(a: float = 1.0, b: float = 1.0) -> ConeSurface:
    """Flat Klein bottle: an a x b rectangle, top glued by translation and
    sides glued with a vertical flip."""
    l_d = math.hypot(a, b)
    # faces (0, ae1, ae1+be2) and (0, ae1+be2, be2)
    faces = [(a, b, l_d), (l_d, a, b)]
    gluings = [
        (0, 2, 1, 0, True),
        (0, 0, 1, 1, True),  # bottom ~ top, translation
        (0, 1, 1, 2, False),  # right ~ left, reversed
    ]
    return ConeSurface(faces, gluings, name=f"klein({a},{b})")


def build_cylinder(circumference: float, height: float, columns: int = 6) -> ConeSurface:
    """Flat right cylinder, both boundary circles free; `columns` >= 3.

    Column j is a w x height rectangle split along its rising diagonal:
    faces 2j = (b_j, b_j+1, u_j+1) and 2j+1 = (b_j, u_j+1, u_j).
    """
    if columns < 3:
        raise SurfaceError("need at least 3 columns")
    n = columns
    w = circumference / n
    diag = math.hypot(w, height)
    faces = []
    gluings = []
    labels = {}
    for j in range(n):
        faces.append((w, height, diag))
        faces.append((diag, w, height))
        gluings.append((2 * j, 2, 2 * j + 1, 0, True))  # diagonal
        gluings.append((2 * j, 1, 2 * ((j + 1) % n) + 1, 2, True))  # vertical seam
        labels[str((2 * j, 0))] = "bottom"
        labels[str((2 * j + 1, 1))] = "top"
    return ConeSurface(faces, gluings, name=f"cylinder({circumference},{height})",
                       marks={"boundary_labels": labels})


def build_round_annulus(r_in: float, r_out: float, n_theta: int = 48, n_r: int = 8) -> ConeSurface:
    """Planar round annulus triangulated on a polar grid."""
    coords = []
    for i in range(n_r + 1):
        r = r_in * (r_out / r_in) ** (i / n_r)
        for j in range(n_theta):
            t = 2 * math.pi * j / n_theta
            coords.append((r * math.cos(t), r * math.sin(t)))
    tris = []
    for i in range(n_r):
        for j in range(n_theta):
            j2 = (j + 1) % n_theta
            a, b = i * n_theta + j, i * n_theta + j2
            c, d = (i + 1) * n_theta + j, (i + 1) * n_theta + j2
            tris.append((a, b, d))
            tris.append((a, d, c))
    s = surface_from_vertex_faces(coords, tris, name="annulus")
    labels = {}
    for f, e in s.boundary_slots:
        inner = f < 2 * n_theta
        labels[str((f, e))] = "bottom" if inner else "top"
    return ConeSurface(s.faces, s.gluings, name=f"annulus({r_in},{r_out})",
                       marks={"boundary_labels": labels})


def _annulus_pieces(p: SurfaceParameters):
    """Faces and internal gluings of one hexagonal annulus + cylinder copy.

    Face layout (all indices mod 6 in j):
      trapezoid j:  A_j=3j   (I_j, I_j+1, M_j)
                    B_j=3j+1 (I_j+1, O_j+1, M_j)
                    C_j=3j+2 (I_j, M_j, O_j)
      cylinder col: P_j=18+4j (B_j, B_j+1, X_j)   Q_j=19+4j (B_j+1, U_j+1, X_j)
                    R_j=20+4j (U_j+1, U_j, X_j)   S_j=21+4j (U_j, B_j, X_j)
    The trapezoid outer half-sides (B_j slot 1, C_j slot 1) and the cylinder
    top edges (R_j slot 0) are left unglued here.
    """
    short = p.short_side
    leg = p.leg
    half_long = p.long_side / 2
    dmid = math.hypot(short / 2, p.h)  # I to outer midpoint M
    r = math.hypot(short / 2, p.delta / 2)  # rectangle corner to center X
    faces = []
    for j in range(6):
        faces.append((short, dmid, dmid))  # A_j
        faces.append((leg, half_long, dmid))  # B_j
        faces.append((dmid, half_long, leg))  # C_j
    for j in range(6):
        faces.append((short, r, r))  # P_j
        faces.append((p.delta, r, r))  # Q_j
        faces.append((short, r, r))  # R_j
        faces.append((p.delta, r, r))  # S_j
    A = lambda j: 3 * (j % 6)
    B = lambda j: 3 * (j % 6) + 1
    C = lambda j: 3 * (j % 6) + 2
    P = lambda j: 18 + 4 * (j % 6)
    Q = lambda j: 19 + 4 * (j % 6)
    R = lambda j: 20 + 4 * (j % 6)
    S = lambda j: 21 + 4 * (j % 6)
    gluings = []
    for j in range(6):
        gluings += [
            (A(j), 1, B(j), 2, True),
            (A(j), 2, C(j), 0, True),
            (B(j), 0, C(j + 1), 2, True),
            (P(j), 0, A(j), 0, False),
            (P(j), 1, Q(j), 2, True),
            (Q(j), 1, R(j), 2, True),
            (R(j), 1, S(j), 2, True),
            (S(j), 1, P(j), 2, True),
            (Q(j), 0, S(j + 1), 0, True),
        ]
    helpers = dict(A=A, B=B, C=C, P=P, Q=Q, R=R, S=S)
    return faces, gluings, helpers


def build_extremal_dyck(p: SurfaceParameters | None = None) -> ConeSurface:
    """The extremal nonpositively curved Dyck's surface as a flat cone mesh.

    Six trapezoids form the hexagonal annulus (outer half-sides identified in
    opposite pairs, creating the two 6-alpha cone points p, q and the three
    smooth Weierstrass midpoints); a cylinder of circumference 2 and height
    delta closes it into a Moebius band whose soul is the top circle.
    """
    p = p or SurfaceParameters.paper()
    if not relations_ok(p, 1e-9):
        raise SurfaceError("parameters violate the defining relations")
    faces, gluings, hp = _annulus_pieces(p)
    B, C, R = hp["B"], hp["C"], hp["R"]
    for j in range(3):
        # outer side of trapezoid j ~ outer side of trapezoid j+3, by the
        # central identification O_j <-> O_{j+4}, M_j <-> M_{j+3}
        gluings.append((B(j), 1, C(j + 3), 1, True))
        gluings.append((C(j), 1, B(j + 3), 1, True))
        gluings.append((R(j), 0, R(j + 3), 0, False))  # antipodal top
    marks = {
        "weierstrass": [(hp["A"](j), 2) for j in range(3)],
        "p": (C(0), 2),  # O_0
        "q": (B(0), 1),  # O_1
        "soul": [(R(j), 0) for j in range(3)],
        "region": ["hex"] * 18 + ["mobius"] * 24,
        "cell": [j % 3 for j in range(6) for _ in range(3)] + [-1] * 24,
    }
    return ConeSurface(faces, gluings, name="dyck_extremal", marks=marks)


def extremal_cut_graph(s: ConeSurface) -> CutGraph:
    """The symmetry graph: three p--q arcs through the Weierstrass points
    (the identified outer sides of the hexagonal annulus)."""
    paths = []
    for j in range(3):
        b = 3 * j + 1
        c = 3 * j + 2
        paths.append([(c, 1), (b, 1)])  # O_j -> M_j -> O_{j+1}
    return CutGraph(paths)


def build_collar_flat(p: SurfaceParameters | None = None) -> ConeSurface:
    """Direct assembly of the flat collar: two annulus+cylinder copies glued
    along the cylinder tops (the soul circle), outer half-sides free."""
    p = p or SurfaceParameters.paper()
    faces1, glue1, hp = _annulus_pieces(p)
    n = len(faces1)
    faces = faces1 + faces1
    gluings = list(glue1) + [(f + n, e, f2 + n, e2, flip) for f, e, f2, e2, flip in glue1]
    R = hp["R"]
    for j in range(6):
        gluings.append((R(j), 0, R(j + 3) + n, 0, False))
    labels = {}
    for j in range(6):
        for fe in ((hp["B"](j), 1), (hp["C"](j), 1)):
            labels[str(fe)] = "bottom"
            labels[str((fe[0] + n, fe[1]))] = "top"
    marks = {
        "soul": [(R(j), 0) for j in range(6)],
        "region": (["hex"] * 18 + ["mobius"] * 24) * 2,
        "boundary_labels": labels,
        "weierstrass": [(hp["A"](j), 2) for j in range(6)]
        + [(hp["A"](j) + n, 2) for j in range(6)],
    }
    return ConeSurface(faces, gluings, name="collar_flat", marks=marks)


def build_collar_leq0_via_cover(p: SurfaceParameters | None = None) -> ConeSurface:
    """Cross-check pipeline: cut the extremal surface along the symmetry graph
    and take the orientation double cover."""
    s = build_extremal_dyck(p)
    cut = cut_along_graph(s, extremal_cut_graph(s))
    return orientation_double_cover(cut)


def build_collar_hyperbolic_profile(dps: int = 30):
    """Fermi half-width profile of the extremal hyperbolic collar."""
    from .capacity import hyperbolic_collar_profile

    return hyperbolic_collar_profile(dps=dps)


# -- combinatorial isometries ------------------------------------------

_PERMS = [
    (0, 1, 2), (1, 2, 0), (2, 0, 1),  # rotations
    (0, 2, 1), (2, 1, 0), (1, 0, 2),  # reflections
]


def _perm_ok(s1: ConeSurface, f: int, s2: ConeSurface, g: int, perm, tol) -> bool:
    # corner perm maps corner c of f to corner perm[c] of g; edge (c, c+1)
    # must land on an edge of g with equal length
    for e in range(3):
        a, b = perm[e], perm[(e + 1) % 3]
        e2 = a if b == (a + 1) % 3 else b
        if abs(s1.faces[f][e] - s2.faces[g][e2]) > tol:
            return False
    return True


def _image_slot(perm, e: int) -> tuple[int, bool]:
    a, b = perm[e], perm[(e + 1) % 3]
    if b == (a + 1) % 3:
        return a, False  # direction preserved
    return b, True  # direction reversed


def _propagate(s1: ConeSurface, s2: ConeSurface, f0: int, g0: int, perm0, tol):
    """Grow a corner-preserving face map from a seed; None if inconsistent."""
    fmap: dict[int, tuple[int, tuple]] = {f0: (g0, perm0)}
    stack = [f0]
    used = {g0}
    while stack:
        f = stack.pop()
        g, perm = fmap[f]
        for e in range(3):
            rec = s1.glue_map.get((f, e))
            img_e, rev = _image_slot(perm, e)
            rec2 = s2.glue_map.get((g, img_e))
            if (rec is None) != (rec2 is None):
                return None
            if rec is None:
                continue
            f2, e2, flip = rec
            g2, e22, flip2 = rec2
            # corner correspondence across both gluings determines the
            # induced permutation on f2
            corr: dict[int, int] = {}
            src = _edge_corners(e, flip, e2)
            dst = _edge_corners(img_e, flip2, e22)
            # src maps corners of f-edge to corners of f2; dst likewise for g
            for cf, cf2 in src.items():
                cg = perm[cf]
                if cg not in dst:
                    return None
                corr[cf2] = dst[cg]
            perm2 = _complete_perm(corr)
            if perm2 is None or not _perm_ok(s1, f2, s2, g2, perm2, tol):
                return None
            if f2 in fmap:
                if fmap[f2] != (g2, perm2):
                    return None
            else:
                if g2 in used:
                    return None
                fmap[f2] = (g2, perm2)
                used.add(g2)
                stack.append(f2)
    if len(fmap) != len(s1.faces):
        return None  # disconnected surface: not handled
    return fmap


def _edge_corners(e: int, flip: bool, e2: int) -> dict[int, int]:
    if flip:
        return {e: (e2 + 1) % 3, (e + 1) % 3: e2}
    return {e: e2, (e + 1) % 3: (e2 + 1) % 3}


def _complete_perm(corr: dict[int, int]):
    missing = [c for c in range(3) if c not in corr]
    missing_img = [c for c in range(3) if c not in corr.values()]
    if len(missing) != 1:
        return None
    corr = dict(corr)
    corr[missing[0]] = missing_img[0]
    return (corr[0], corr[1], corr[2])


def isometries(s1: ConeSurface, s2: ConeSurface, tol: float = 1e-9, limit: int | None = None):
    """All corner-preserving isometries s1 -> s2 (combinatorial, with matching
    edge lengths).  Each is a dict face -> (image face, corner permutation)."""
    out = []
    if len(s1.faces) != len(s2.faces):
        return out
    for g0 in range(len(s2.faces)):
        for perm in _PERMS:
            if not _perm_ok(s1, 0, s2, g0, perm, tol):
                continue
            fmap = _propagate(s1, s2, 0, g0, perm, tol)
            if fmap is not None:
                out.append(fmap)
                if limit and len(out) >= limit:
                    return out
    return out


def are_isometric(s1: ConeSurface, s2: ConeSurface, tol: float = 1e-9) -> bool:
    return bool(isometries(s1, s2, tol=tol, limit=1))


def check_symmetry(s: ConeSurface, tol: float = 1e-9) -> dict:
    """Count combinatorial self-isometries and report the group order."""
    autos = isometries(s, s, tol=tol)
    return {
        "order": len(autos),
        "orientation_preserving": None if not autos else sum(
            1 for a in autos if _map_preserves_orientation(s, a)
        ),
    }


def _map_preserves_orientation(s: ConeSurface, fmap) -> bool | None:
    if not s.orientable:
        return None
    g0, perm = fmap[0]
    return perm in _PERMS[:3]
