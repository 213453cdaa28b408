"""Triangular meshes of polygonal domains with tagged boundary segments.

Built-in generators are block-structured: the domain is a union of
axis-aligned rectangles on a shared tensor grid, and every grid cell is split
into two triangles.  External meshes enter through the gmsh MSH 2.2 reader.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "BC_KINDS",
    "BoundarySpec",
    "Mesh",
    "MeshError",
    "MeshParseError",
    "UnsupportedElementError",
    "MeshIntegrityError",
    "ValidationReport",
    "generate_rectangle",
    "generate_step_domain",
    "generate_obstacle_channel",
    "validate",
    "import_msh",
    "export_msh",
    "dump_polymesh",
    "load_polymesh",
    "STEP_POLYGON",
]

BC_KINDS = ("dirichlet", "neumann", "slip")

STEP_POLYGON = ((0.0, 2.0), (4.0, 2.0), (4.0, 0.0), (22.0, 0.0), (22.0, 5.0), (0.0, 5.0))

OBSTACLE_CENTER = (0.2, 0.2)
OBSTACLE_SIDE = 0.05
CHANNEL_SIZE = (2.2, 0.4)


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class UnsupportedElementError(MeshError):
    pass


class MeshIntegrityError(MeshError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    Triangles are counterclockwise.  ``boundary_edges[k]`` is oriented with
    the domain on its left and carries the tag ``boundary_tags[k]``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        b = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        for arr in (v, t, b):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_edges", b)
        object.__setattr__(self, "boundary_tags", tuple(str(s) for s in self.boundary_tags))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def segment_tags(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.boundary_tags)))

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self) -> float:
        return float(math.fsum(self.signed_areas()))

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)

    @property
    def corners(self) -> np.ndarray:
        """Boundary vertices where two non-collinear boundary edges meet."""
        nxt = {}
        for (i, j) in self.boundary_edges:
            nxt[int(i)] = int(j)
        prv = {j: i for i, j in nxt.items()}
        out = []
        for v, w in nxt.items():
            u = prv.get(v)
            if u is None:
                continue
            d_in = self.vertices[v] - self.vertices[u]
            d_out = self.vertices[w] - self.vertices[v]
            ang = math.atan2(d_in[0] * d_out[1] - d_in[1] * d_out[0], float(d_in @ d_out))
            if abs(ang) > 1e-9:
                out.append(v)
        return np.array(sorted(out), dtype=np.int64)


@dataclass(frozen=True)
class BoundarySpec:
    """Map from boundary segment tag to boundary-condition kind."""

    kinds: dict

    def __post_init__(self):
        kinds = {str(k): str(v).lower() for k, v in dict(self.kinds).items()}
        for tag, kind in kinds.items():
            if kind not in BC_KINDS:
                raise ValueError(f"unknown boundary condition kind {kind!r} for tag {tag!r}")
        if "dirichlet" not in kinds.values():
            raise ValueError("at least one boundary segment must be Dirichlet")
        object.__setattr__(self, "kinds", kinds)

    def __getitem__(self, tag: str) -> str:
        return self.kinds[tag]

    def tags_of(self, kind: str) -> list[str]:
        return sorted(t for t, k in self.kinds.items() if k == kind)

    @classmethod
    def all_dirichlet(cls, mesh: Mesh) -> "BoundarySpec":
        return cls({t: "dirichlet" for t in mesh.segment_tags})


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __len__(self) -> int:
        return len(self.violations)

    def __str__(self) -> str:
        if self.ok:
            return "mesh is valid"
        return "\n".join(self.violations)


# ---------------------------------------------------------------------------
# block-structured generation


def _axis_nodes(breaks: Iterable[float], h: float) -> np.ndarray:
    breaks = list(breaks)
    pts = [float(breaks[0])]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        pts.extend(a + (b - a) * k / n for k in range(1, n))
        pts.append(float(b))
    return np.array(pts)


def _block_mesh(
    xs: np.ndarray,
    ys: np.ndarray,
    inside: Callable[[float, float], bool],
    tagger: Callable[[float, float, bool], str],
    metadata: dict | None = None,
) -> Mesh:
    nx, ny = len(xs) - 1, len(ys) - 1
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    cell = np.array([[inside(cx[i], cy[j]) for j in range(ny)] for i in range(nx)], dtype=bool)

    # vertex (i, j) is used if any adjacent cell is present; interior if all four are
    pad = np.zeros((nx + 2, ny + 2), dtype=bool)
    pad[1:-1, 1:-1] = cell
    adj = np.stack([pad[:-1, :-1], pad[1:, :-1], pad[:-1, 1:], pad[1:, 1:]])
    used = adj.any(axis=0)
    interior = adj.all(axis=0)
    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    ii, jj = np.nonzero(used.T)  # row-major in y so numbering runs along x first
    ii, jj = jj, ii
    vid[ii, jj] = np.arange(len(ii))
    vertices = np.column_stack([xs[ii], ys[jj]])
    on_bnd = ~interior

    tris = []
    bedges = []
    btags = []
    for j in range(ny):
        for i in range(nx):
            if not cell[i, j]:
                continue
            a, b, c, d = (i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)
            all_bnd_ac = (on_bnd[a] and on_bnd[b] and on_bnd[c]) or (on_bnd[a] and on_bnd[c] and on_bnd[d])
            all_bnd_bd = (on_bnd[a] and on_bnd[b] and on_bnd[d]) or (on_bnd[b] and on_bnd[c] and on_bnd[d])
            if all_bnd_ac and not all_bnd_bd:
                tris.append((vid[a], vid[b], vid[d]))
                tris.append((vid[b], vid[c], vid[d]))
            else:
                tris.append((vid[a], vid[b], vid[c]))
                tris.append((vid[a], vid[c], vid[d]))
            if j == 0 or not cell[i, j - 1]:
                bedges.append((vid[a], vid[b]))
                btags.append(tagger(cx[i], ys[j], True))
            if i == nx - 1 or not cell[i + 1, j]:
                bedges.append((vid[b], vid[c]))
                btags.append(tagger(xs[i + 1], cy[j], False))
            if j == ny - 1 or not cell[i, j + 1]:
                bedges.append((vid[c], vid[d]))
                btags.append(tagger(cx[i], ys[j + 1], True))
            if i == 0 or not cell[i - 1, j]:
                bedges.append((vid[d], vid[a]))
                btags.append(tagger(xs[i], cy[j], False))
    return Mesh(vertices, np.array(tris), np.array(bedges), tuple(btags), dict(metadata or {}))


def generate_rectangle(
    width: float = 1.0,
    height: float = 1.0,
    nx: int = 1,
    ny: int | None = None,
    tags: dict | None = None,
) -> Mesh:
    """Uniform ``nx`` x ``ny`` grid of ``[0, width] x [0, height]``.

    Sides are tagged ``left``, ``right``, ``bottom``, ``top`` unless ``tags``
    renames them.
    """
    ny = nx if ny is None else ny
    names = {"left": "left", "right": "right", "bottom": "bottom", "top": "top"}
    names.update(tags or {})
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)

    def tagger(x, y, horizontal):
        if horizontal:
            return names["bottom"] if y < 0.5 * height else names["top"]
        return names["left"] if x < 0.5 * width else names["right"]

    return _block_mesh(xs, ys, lambda x, y: True, tagger,
                       {"geometry": "rectangle", "width": width, "height": height})


def generate_step_domain(h_target: float) -> Mesh:
    """Backward-facing step: inlet channel [0,4]x[2,5] opening into [4,22]x[0,5]."""
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    xs = _axis_nodes([0.0, 4.0, 22.0], h_target)
    ys = _axis_nodes([0.0, 2.0, 5.0], h_target)

    def inside(x, y):
        return x > 4.0 or y > 2.0

    def tagger(x, y, horizontal):
        if horizontal:
            if y == 2.0:
                return "step_horizontal"
            return "wall"
        if x == 0.0:
            return "inlet"
        if x == 22.0:
            return "outlet"
        return "step_vertical"

    return _block_mesh(xs, ys, inside, tagger,
                       {"geometry": "step", "h_target": h_target, "polygon": STEP_POLYGON})


def generate_obstacle_channel(h_target: float) -> Mesh:
    """Channel [0,2.2]x[0,0.4] minus a square obstacle of side 0.05 at (0.2,0.2).

    The grid has lines on the obstacle sides, so the realized obstacle is
    exact; its bounds are recorded in ``metadata["obstacle"]``.
    """
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    if h_target >= OBSTACLE_SIDE:
        raise ValueError(f"h_target={h_target} cannot resolve the obstacle of side {OBSTACLE_SIDE}")
    length, height = CHANNEL_SIZE
    x0 = OBSTACLE_CENTER[0] - OBSTACLE_SIDE / 2
    x1 = OBSTACLE_CENTER[0] + OBSTACLE_SIDE / 2
    y0 = OBSTACLE_CENTER[1] - OBSTACLE_SIDE / 2
    y1 = OBSTACLE_CENTER[1] + OBSTACLE_SIDE / 2
    xs = _axis_nodes([0.0, x0, x1, length], h_target)
    ys = _axis_nodes([0.0, y0, y1, height], h_target)

    def inside(x, y):
        return not (x0 < x < x1 and y0 < y < y1)

    def tagger(x, y, horizontal):
        if horizontal:
            return "wall" if y in (0.0, height) else "obstacle"
        if x == 0.0:
            return "inlet"
        if x == length:
            return "outlet"
        return "obstacle"

    meta = {
        "geometry": "obstacle_channel",
        "h_target": h_target,
        "obstacle": (x0, x1, y0, y1),
        "exact_area": length * height - (x1 - x0) * (y1 - y0),
    }
    return _block_mesh(xs, ys, inside, tagger, meta)


# ---------------------------------------------------------------------------
# validation


def _edge_counts(triangles: np.ndarray):
    e = np.sort(triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq, counts


def validate(mesh: Mesh) -> ValidationReport:
    """Audit the mesh invariants; an empty report means the mesh is valid."""
    rep = ValidationReport()
    nv = mesh.n_vertices
    tris = mesh.triangles
    if tris.size and (tris.min() < 0 or tris.max() >= nv):
        rep.violations.append("triangle references a nonexistent vertex")
        return rep
    if mesh.boundary_edges.size and (mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= nv):
        rep.violations.append("boundary edge references a nonexistent vertex")
        return rep
    if len(mesh.boundary_tags) != len(mesh.boundary_edges):
        rep.violations.append(
            f"{len(mesh.boundary_edges)} boundary edges but {len(mesh.boundary_tags)} tags")

    areas = mesh.signed_areas()
    for k in np.nonzero(areas < 0)[0]:
        rep.violations.append(f"negative area at triangle {k}")
    for k in np.nonzero(areas == 0)[0]:
        rep.violations.append(f"degenerate triangle {k}")

    srt = np.sort(tris, axis=1)
    _, first, inv = np.unique(srt, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    for k in np.nonzero(first[inv] != np.arange(len(tris)))[0]:
        rep.violations.append(f"nonconforming: triangle {k} duplicates triangle {first[inv[k]]}")

    edges, counts = _edge_counts(tris)
    for (i, j), c in zip(edges[counts > 2], counts[counts > 2]):
        rep.violations.append(f"nonconforming edge ({i}, {j}) shared by {c} triangles")

    topo = {tuple(e) for e in edges[counts == 1].tolist()}
    tagged = {}
    for (i, j), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        key = (min(i, j), max(i, j))
        if key in tagged:
            rep.violations.append(f"boundary edge ({i}, {j}) listed twice")
        tagged[key] = tag
        if not tag:
            rep.violations.append(f"boundary edge ({i}, {j}) has no segment tag")
    for key in sorted(topo - tagged.keys()):
        rep.violations.append(f"edge {key} lies on the topological boundary but is not tagged")
    for key in sorted(tagged.keys() - topo):
        rep.violations.append(f"tagged boundary edge {key} is not on the topological boundary")

    deg = np.bincount(mesh.boundary_edges.ravel(), minlength=nv)
    for v in np.nonzero((deg != 0) & (deg != 2))[0]:
        rep.violations.append(f"boundary loop is not closed at vertex {v} (degree {deg[v]})")

    used = np.zeros(nv, dtype=bool)
    used[tris.ravel()] = True
    for v in np.nonzero(~used)[0]:
        rep.violations.append(f"vertex {v} is not used by any triangle")

    # hanging vertices sit strictly inside an edge that only one triangle sees
    if topo:
        be = np.array(sorted(topo))
        p0 = mesh.vertices[be[:, 0]]
        d = mesh.vertices[be[:, 1]] - p0
        L2 = np.einsum("ij,ij->i", d, d)
        tol = 1e-12 * np.sqrt(L2)
        for start in range(0, nv, 2048):
            q = mesh.vertices[start:start + 2048]
            rel = q[:, None, :] - p0[None, :, :]
            s = np.einsum("vei,ei->ve", rel, d) / L2
            cross = rel[..., 0] * d[None, :, 1] - rel[..., 1] * d[None, :, 0]
            hit = (np.abs(cross) <= tol * np.sqrt(L2)) & (s > 1e-12) & (s < 1 - 1e-12)
            for vv, ee in zip(*np.nonzero(hit)):
                rep.violations.append(
                    f"hanging vertex {start + vv} on edge ({be[ee, 0]}, {be[ee, 1]})")
    return rep


# ---------------------------------------------------------------------------
# MSH 2.2 ASCII


def import_msh(text: str) -> Mesh:
    """Read a gmsh MSH 2.2 ASCII mesh holding 2-node lines and 3-node triangles.

    Lines must carry a physical tag; the tag name comes from ``$PhysicalNames``
    when present, otherwise the tag number is used.  Triangles are reoriented
    counterclockwise, unreferenced nodes (e.g. gmsh point entities) dropped.
    """
    lines = text.splitlines()
    sections: dict[str, tuple[int, int]] = {}
    k = 0
    while k < len(lines):
        s = lines[k].strip()
        if s.startswith("$") and not s.startswith("$End"):
            name = s[1:]
            end = f"$End{name}"
            for m in range(k + 1, len(lines)):
                if lines[m].strip() == end:
                    sections[name] = (k + 1, m)
                    k = m
                    break
            else:
                raise MeshParseError(f"section ${name} is not terminated by {end}", k + 1)
        k += 1
    for required in ("Nodes", "Elements"):
        if required not in sections:
            raise MeshParseError(f"missing section ${required}")

    if "MeshFormat" in sections:
        a, _ = sections["MeshFormat"]
        parts = lines[a].split()
        if not parts or not parts[0].startswith("2"):
            raise MeshParseError(f"unsupported MSH version {parts[0] if parts else '?'}", a + 1)

    names: dict[int, str] = {}
    if "PhysicalNames" in sections:
        a, b = sections["PhysicalNames"]
        for ln in range(a + 1, b):
            parts = lines[ln].split(maxsplit=2)
            try:
                names[int(parts[1])] = parts[2].strip().strip('"')
            except (IndexError, ValueError):
                raise MeshParseError("malformed physical name", ln + 1) from None

    def _count(a, b, what):
        try:
            n = int(lines[a].split()[0])
        except (IndexError, ValueError):
            raise MeshParseError(f"malformed {what} count", a + 1) from None
        if b - a - 1 != n:
            raise MeshParseError(f"expected {n} {what} lines, found {b - a - 1}", a + 1)
        return n

    a, b = sections["Nodes"]
    _count(a, b, "node")
    node_ids, coords = [], []
    for ln in range(a + 1, b):
        parts = lines[ln].split()
        try:
            node_ids.append(int(parts[0]))
            coords.append((float(parts[1]), float(parts[2])))
        except (IndexError, ValueError):
            raise MeshParseError("malformed node line", ln + 1) from None
    index = {nid: i for i, nid in enumerate(node_ids)}

    a, b = sections["Elements"]
    _count(a, b, "element")
    tris, bedges, btags = [], [], []
    for ln in range(a + 1, b):
        parts = lines[ln].split()
        try:
            etype, ntags = int(parts[1]), int(parts[2])
            tags = [int(x) for x in parts[3:3 + ntags]]
            nodes = [int(x) for x in parts[3 + ntags:]]
        except (IndexError, ValueError):
            raise MeshParseError("malformed element line", ln + 1) from None
        if etype not in (1, 2):
            raise UnsupportedElementError(f"line {ln + 1}: unsupported element type {etype}")
        want = 2 if etype == 1 else 3
        if len(nodes) != want:
            raise MeshParseError(f"element type {etype} needs {want} nodes", ln + 1)
        try:
            idx = [index[n] for n in nodes]
        except KeyError as exc:
            raise MeshIntegrityError(f"line {ln + 1}: element references unknown node {exc.args[0]}") from None
        if etype == 2:
            tris.append(idx)
        else:
            if not tags:
                raise MeshParseError("boundary line without physical tag", ln + 1)
            bedges.append(idx)
            btags.append(names.get(tags[0], str(tags[0])))

    if not tris:
        raise MeshIntegrityError("mesh contains no triangles")
    vertices = np.array(coords)
    tris = np.array(tris, dtype=np.int64)
    p = vertices[tris]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tris[area < 0] = tris[area < 0][:, [0, 2, 1]]

    used = np.zeros(len(vertices), dtype=bool)
    used[tris.ravel()] = True
    bedges = np.array(bedges, dtype=np.int64).reshape(-1, 2)
    if bedges.size and not used[bedges.ravel()].all():
        raise MeshIntegrityError("boundary line references a node not used by any triangle")
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    vertices = vertices[used]
    tris = remap[tris]
    bedges = remap[bedges]

    # orient boundary edges with the domain on the left
    owner = {}
    for t in tris:
        for i, j in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            owner[(int(i), int(j))] = True
    for k, (i, j) in enumerate(bedges):
        if (int(i), int(j)) not in owner and (int(j), int(i)) in owner:
            bedges[k] = (j, i)
    return Mesh(vertices, tris, bedges, tuple(btags), {"geometry": "imported"})


def export_msh(mesh: Mesh) -> str:
    """Write the mesh as MSH 2.2 ASCII with one physical group per tag."""
    tag_ids = {t: k + 1 for k, t in enumerate(mesh.segment_tags)}
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(tag_ids))]
    out += [f'1 {i} "{t}"' for t, i in tag_ids.items()]
    out += ["$EndPhysicalNames", "$Nodes", str(mesh.n_vertices)]
    out += [f"{k + 1} {x!r} {y!r} 0" for k, (x, y) in enumerate(mesh.vertices.tolist())]
    out += ["$EndNodes", "$Elements", str(len(mesh.boundary_edges) + mesh.n_triangles)]
    eid = 1
    for (i, j), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        pid = tag_ids[tag]
        out.append(f"{eid} 1 2 {pid} {pid} {i + 1} {j + 1}")
        eid += 1
    for (i, j, k) in mesh.triangles.tolist():
        out.append(f"{eid} 2 2 0 1 {i + 1} {j + 1} {k + 1}")
        eid += 1
    out += ["$EndElements", ""]
    return "\n".join(out)


# ---------------------------------------------------------------------------
# native POLYMESH v1 dump

_POLY_HEADER = "POLYMESH v1"


def dump_polymesh(mesh: Mesh) -> str:
    out = [_POLY_HEADER, str(mesh.n_vertices)]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices.tolist()]
    out.append(str(mesh.n_triangles))
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    out.append(str(len(mesh.boundary_edges)))
    out += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)]
    return "\n".join(out) + "\n"


def load_polymesh(text: str) -> Mesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _POLY_HEADER:
        raise MeshParseError(f"expected header {_POLY_HEADER!r}", 1)
    pos = 1

    def block(parse):
        nonlocal pos
        try:
            n = int(lines[pos])
        except (IndexError, ValueError):
            raise MeshParseError("malformed count", pos + 1) from None
        rows = []
        for ln in range(pos + 1, pos + 1 + n):
            try:
                rows.append(parse(lines[ln].split()))
            except (IndexError, ValueError):
                raise MeshParseError("malformed record", ln + 1) from None
        pos += n + 1
        return rows

    verts = block(lambda p: (float(p[0]), float(p[1])))
    tris = block(lambda p: (int(p[0]), int(p[1]), int(p[2])))
    bnd = block(lambda p: (int(p[0]), int(p[1]), p[2]))
    return Mesh(
        np.array(verts).reshape(-1, 2),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array([b[:2] for b in bnd], dtype=np.int64).reshape(-1, 2),
        tuple(b[2] for b in bnd),
    )
