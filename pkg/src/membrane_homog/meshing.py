"""Conforming membrane meshes: reference cell, tiled domain, truncated cube.

The reference cell is meshed once with the circular interface resolved as a
polyline of mesh edges and with interface nodes duplicated (independent PLUS
and MINUS copies).  Tiling deforms the cell template vertex-wise and stitches
shared boundary nodes, which works because every deformation map fixes cell
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshQualityFailure, StitchFailure
from .geometry import DeformationMap, IdentityMap, InterfaceSpec

PLUS = 1
MINUS = -1

MIN_ANGLE_DEG = 20.0
RING_GRADING = 1.0  # radial step multiplier for the outer blended rings
PAIRING_TOL = 1e-12
STITCH_TOL = 1e-12


@dataclass
class MembraneMesh:
    """Triangulation with region tags and duplicated interface nodes.

    ``vertices`` are physical coordinates; ``ref_vertices`` are the matching
    reference-lattice coordinates (equal to ``vertices`` for identity maps and
    unscaled meshes).  ``interface_pairs`` rows are (plus node, minus node)
    with coincident coordinates.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_region: np.ndarray
    tri_cell: np.ndarray
    interface_pairs: np.ndarray
    boundary_nodes: np.ndarray
    h: float
    ref_vertices: np.ndarray = None

    def __post_init__(self):
        if self.ref_vertices is None:
            self.ref_vertices = self.vertices

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def interface_edges(self) -> np.ndarray:
        """Interface edges as rows (plus_a, plus_b, minus_a, minus_b).

        Edges are recovered as boundary edges of the MINUS region, oriented as
        traversed by their MINUS triangle (counterclockwise around each
        membrane, so the MINUS outward normal is the tangent rotated by -90).
        """
        return self.interface_edges_with_cells()[0]

    def interface_edges_with_cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Interface edges plus the lattice cell each edge belongs to."""
        if len(self.interface_pairs) == 0:
            return np.zeros((0, 4), dtype=np.int64), np.zeros((0, 2), dtype=np.int64)
        minus_iface = set(self.interface_pairs[:, 1].tolist())
        m2p = {int(m): int(p) for p, m in self.interface_pairs}
        edge_count: dict[tuple[int, int], int] = {}
        oriented: dict[tuple[int, int], tuple[int, int, int, int]] = {}
        for t, (tri, reg) in enumerate(zip(self.triangles, self.tri_region)):
            if reg != MINUS:
                continue
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                a, b = int(a), int(b)
                key = (min(a, b), max(a, b))
                edge_count[key] = edge_count.get(key, 0) + 1
                oriented[key] = (a, b, int(self.tri_cell[t, 0]), int(self.tri_cell[t, 1]))
        rows = []
        for key, cnt in edge_count.items():
            if cnt != 1:
                continue
            ma, mb, ckx, cky = oriented[key]
            if ma in minus_iface and mb in minus_iface:
                rows.append((m2p[ma], m2p[mb], ma, mb, ckx, cky))
        rows.sort()
        arr = np.array(rows, dtype=np.int64).reshape(len(rows), 6)
        return arr[:, :4], arr[:, 4:6]

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        d1 = v[t[:, 1]] - v[t[:, 0]]
        d2 = v[t[:, 2]] - v[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle_deg(self) -> float:
        v = self.vertices
        t = self.triangles
        angles = []
        for i in range(3):
            a = v[t[:, i]]
            b = v[t[:, (i + 1) % 3]]
            c = v[t[:, (i + 2) % 3]]
            u1 = b - a
            u2 = c - a
            cosang = np.einsum("ij,ij->i", u1, u2) / (
                np.linalg.norm(u1, axis=1) * np.linalg.norm(u2, axis=1)
            )
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        return float(np.min(angles))


def _reflect_quadrants(first: np.ndarray, n: int) -> np.ndarray:
    """Extend quadrant-I ring points (indices 0..n/4 inclusive) to the full
    ring by exact sign flips, so opposite points mirror bitwise."""
    q = n // 4
    out = np.zeros((n, 2))
    out[: q + 1] = first
    for i in range(1, q):
        out[2 * q - i] = (-first[i, 0], first[i, 1])
    out[2 * q] = (-first[0, 0], first[0, 1])
    for i in range(1, q):
        out[2 * q + i] = (-first[i, 0], -first[i, 1])
    out[3 * q] = (first[0, 1], -first[0, 0])
    for i in range(1, q):
        out[4 * q - i] = (first[i, 0], -first[i, 1])
    return out


def _symmetric_directions(n: int) -> np.ndarray:
    """Unit directions at angles 2*pi*i/n with exact 4-fold mirror symmetry."""
    assert n % 4 == 0
    q = n // 4
    base = np.arange(q + 1) * (2.0 * np.pi / n)
    first = np.column_stack([np.cos(base), np.sin(base)])
    first[0] = (1.0, 0.0)
    first[q] = (0.0, 1.0)
    return _reflect_quadrants(first, n)


def _symmetric_square_offsets(n: int) -> np.ndarray:
    """Offsets from the cell center to n points equally spaced by arclength
    on the square of half-width 1/2, node 0 at mid-edge, exact symmetry."""
    assert n % 8 == 0
    o = n // 8
    e = np.arange(o + 1) * (4.0 / n)
    e[o] = 0.5
    first = np.zeros((n // 4 + 1, 2))
    first[: o + 1, 0] = 0.5
    first[: o + 1, 1] = e
    # mirror the octant across the diagonal into the rest of quadrant I
    first[o : 2 * o + 1, 0] = e[::-1]
    first[o : 2 * o + 1, 1] = 0.5
    return _reflect_quadrants(first, n)


def interface_node_count(radius: float, h: float) -> int:
    """ceil(2*pi*r/h) rounded up to a multiple of 4 (bumped to a multiple of 8
    so the cell-corner directions carry mesh nodes)."""
    n = int(np.ceil(2.0 * np.pi * radius / h))
    n = 4 * ((n + 3) // 4)
    if n % 8 != 0:
        n += 4
    return max(8, n)


def _annulus_triangles(
    outer: np.ndarray, inner: np.ndarray, pos: np.ndarray = None
) -> list[tuple[int, int, int]]:
    """Triangles between two closed rings of node ids (equal counts, or a 2:1
    transition when the inner ring has half as many nodes).  With ``pos``
    given, equal-count quads are split along their shorter diagonal."""
    no, ni = len(outer), len(inner)
    tris = []
    if no == ni:
        for i in range(no):
            j = (i + 1) % no
            if pos is not None:
                d_oi = np.sum((pos[outer[j]] - pos[inner[i]]) ** 2)
                d_io = np.sum((pos[outer[i]] - pos[inner[j]]) ** 2)
            else:
                d_oi, d_io = 0.0, 1.0
            if d_oi <= d_io:
                tris.append((outer[i], outer[j], inner[i]))
                tris.append((outer[j], inner[j], inner[i]))
            else:
                tris.append((outer[i], outer[j], inner[j]))
                tris.append((outer[i], inner[j], inner[i]))
    elif no == 2 * ni:
        for j in range(ni):
            o0, o1, o2 = outer[2 * j], outer[(2 * j + 1) % no], outer[(2 * j + 2) % no]
            i0, i1 = inner[j], inner[(j + 1) % ni]
            tris.append((o0, o1, i0))
            tris.append((o1, i1, i0))
            tris.append((o1, o2, i1))
    else:
        raise ValueError(f"ring counts {no}->{ni} not supported")
    return tris


def build_cell_mesh(spec: InterfaceSpec, h: float) -> MembraneMesh:
    """Unit-cell membrane mesh with the interface as duplicated-node polyline.

    Requests with h > 0.25 are clamped to 0.25 (the coarsest valid size).
    Raises MeshQualityFailure if the generated mesh has a minimum angle
    below 20 degrees.
    """
    h = min(float(h), 0.25)
    if h <= 0.0:
        raise ValueError("h must be positive")
    r = spec.radius
    c = np.asarray(spec.center)
    n_if = interface_node_count(r, h)
    h_t = 2.0 * np.pi * r / n_if

    verts: list[np.ndarray] = []
    tris: list[tuple[int, int, int]] = []
    regions: list[int] = []

    def add_ring(radii, count):
        dirs = _symmetric_directions(count)
        start = len(verts)
        pts = c + np.asarray(radii)[:, None] * dirs
        verts.extend(pts)
        return np.arange(start, start + count)

    # --- MINUS (disk): rings shrinking inward, counts halving, center fan ---
    minus_rings = [(r, n_if)]
    rho, cnt = r, n_if
    while rho - h_t > 0.8 * h_t:
        rho = rho - h_t
        if cnt >= 16 and 2.0 * np.pi * rho / cnt < 0.75 * h_t:
            cnt //= 2
        minus_rings.append((rho, cnt))

    minus_ids = []
    for rad, count in minus_rings:
        minus_ids.append(add_ring(np.full(count, rad), count))
    for outer, inner in zip(minus_ids, minus_ids[1:]):
        for tri in _annulus_triangles(outer, inner):
            tris.append(tri)
            regions.append(MINUS)
    center_id = len(verts)
    verts.append(c.copy())
    last = minus_ids[-1]
    for i in range(len(last)):
        tris.append((last[i], last[(i + 1) % len(last)], center_id))
        regions.append(MINUS)
    minus_interface = minus_ids[0]

    # --- PLUS (cell minus disk): rings blending the circle into the square ---
    dirs = _symmetric_directions(n_if)
    square = _symmetric_square_offsets(n_if)
    # grade ring spacing from h_t at the circle to the square's 4/N spacing
    q = 2.0 / (np.pi * r)
    # geometric ring spacing: local size grows from h_t at the circle to the
    # square's arclength spacing q*h_t at the boundary
    m_rings = max(
        2,
        round(RING_GRADING * (0.5 - r) * np.log(q) / ((q - 1.0) * h_t)),
        int(np.ceil(np.log(q) / np.log(2.0))),  # cap ring-to-ring growth
    )
    lams = (q ** (np.arange(m_rings + 1) / m_rings) - 1.0) / (q - 1.0)

    plus_ids = []
    for j, lam in enumerate(lams):
        ids = np.arange(len(verts), len(verts) + n_if)
        if j == len(lams) - 1:
            pts = c + square  # exactly on the cell boundary
        else:
            pts = c + (1.0 - lam) * (r * dirs) + lam * square
        verts.extend(pts)
        plus_ids.append(ids)
    allpos = np.array(verts)
    for inner, outer in zip(plus_ids, plus_ids[1:]):
        for a, b, cc in _annulus_triangles(outer, inner, allpos):
            tris.append((a, b, cc))
            regions.append(PLUS)

    vertices = np.array(verts)
    triangles = np.array(tris, dtype=np.int64)
    tri_region = np.array(regions, dtype=np.int8)
    # orient every triangle counterclockwise
    d1 = vertices[triangles[:, 1]] - vertices[triangles[:, 0]]
    d2 = vertices[triangles[:, 2]] - vertices[triangles[:, 0]]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    mesh = MembraneMesh(
        vertices=vertices,
        triangles=triangles,
        tri_region=tri_region,
        tri_cell=np.zeros((len(triangles), 2), dtype=np.int64),
        interface_pairs=np.column_stack([plus_ids[0], minus_interface]),
        boundary_nodes=plus_ids[-1].astype(np.int64),
        h=h,
    )
    angle = mesh.min_angle_deg()
    if angle < MIN_ANGLE_DEG:
        raise MeshQualityFailure(f"min angle {angle:.2f} deg < {MIN_ANGLE_DEG}")
    return mesh


def _assemble_tiles(
    cell: MembraneMesh,
    dmap: DeformationMap,
    cells: list[tuple[int, int]],
    membrane: dict[tuple[int, int], bool],
    scale: float,
) -> MembraneMesh:
    """Deform the cell template into each lattice cell and stitch shared
    boundary nodes (bitwise-coincident because maps fix cell boundaries)."""
    nv = cell.num_vertices
    is_boundary = np.zeros(nv, dtype=bool)
    is_boundary[cell.boundary_nodes] = True
    minus_nodes = np.zeros(nv, dtype=bool)
    minus_nodes[cell.interface_pairs[:, 1]] = True
    m2p_local = {int(m): int(p) for p, m in cell.interface_pairs}

    verts: list[np.ndarray] = []
    ref_verts: list[np.ndarray] = []
    shared: dict[tuple[int, int], int] = {}
    tris = []
    regions = []
    tri_cells = []
    pairs = []

    for k in cells:
        ref = cell.vertices + np.array(k, dtype=float)
        phys = scale * dmap.apply(ref)
        has_membrane = membrane[k]
        gid = np.full(nv, -1, dtype=np.int64)
        for v in range(nv):
            if not has_membrane and minus_nodes[v]:
                continue  # merged into the plus copy below
            if is_boundary[v]:
                key = (int(round(phys[v, 0] * 1e10)), int(round(phys[v, 1] * 1e10)))
                idx = shared.get(key)
                if idx is not None:
                    if np.abs(verts[idx] - phys[v]).max() > STITCH_TOL:
                        raise StitchFailure(
                            f"boundary node mismatch at cell {k}: "
                            f"{verts[idx]} vs {phys[v]}"
                        )
                    gid[v] = idx
                    continue
                shared[key] = len(verts)
            gid[v] = len(verts)
            verts.append(phys[v])
            ref_verts.append(ref[v])
        if not has_membrane:
            for m, p in m2p_local.items():
                gid[m] = gid[p]
        for tri, reg in zip(cell.triangles, cell.tri_region):
            tris.append((gid[tri[0]], gid[tri[1]], gid[tri[2]]))
            regions.append(reg if has_membrane else PLUS)
            tri_cells.append(k)
        if has_membrane:
            for p, m in cell.interface_pairs:
                pairs.append((gid[p], gid[m]))

    return MembraneMesh(
        vertices=np.array(verts),
        triangles=np.array(tris, dtype=np.int64),
        tri_region=np.array(regions, dtype=np.int8),
        tri_cell=np.array(tri_cells, dtype=np.int64),
        interface_pairs=(
            np.array(pairs, dtype=np.int64) if pairs else np.zeros((0, 2), dtype=np.int64)
        ),
        boundary_nodes=np.zeros(0, dtype=np.int64),  # set by the caller
        h=cell.h * scale,
        ref_vertices=np.array(ref_verts),
    )


def membrane_cells(n: int, beta: float) -> list[tuple[int, int]]:
    """Lattice cells of the n x n grid at reference distance >= beta from the
    boundary of [0,n]^2; these carry membranes."""
    kept = []
    for kx in range(n):
        for ky in range(n):
            dist = min(kx, ky, n - 1 - kx, n - 1 - ky)
            if dist >= beta:
                kept.append((kx, ky))
    return kept


def tile_domain_mesh(
    cell: MembraneMesh,
    dmap: DeformationMap,
    eps: float,
    spec: InterfaceSpec,
    membranes_rule: str = "on",
) -> MembraneMesh:
    """Mesh of D = (0,1)^2 tiled from n = 1/eps deformed, rescaled cells.

    Cells closer than beta to the reference boundary lose their membranes
    (MINUS retagged PLUS, interface pairs merged): the cushion layer.
    """
    n = round(1.0 / eps)
    if abs(n * eps - 1.0) > 1e-12:
        raise ValueError(f"1/eps must be an integer, got eps={eps}")
    cells = [(kx, ky) for kx in range(n) for ky in range(n)]
    if membranes_rule == "off":
        carriers: set[tuple[int, int]] = set()
    elif membranes_rule == "on":
        carriers = set(membrane_cells(n, spec.beta))
    else:
        raise ValueError(f"unknown membranes_rule {membranes_rule!r}")
    membrane = {k: (k in carriers) for k in cells}
    mesh = _assemble_tiles(cell, dmap, cells, membrane, scale=eps)
    v = mesh.vertices
    on_bd = (
        (np.abs(v[:, 0]) < 1e-12)
        | (np.abs(v[:, 0] - 1.0) < 1e-12)
        | (np.abs(v[:, 1]) < 1e-12)
        | (np.abs(v[:, 1] - 1.0) < 1e-12)
    )
    mesh.boundary_nodes = np.flatnonzero(on_bd).astype(np.int64)
    return mesh


def build_truncated_mesh(
    cell: MembraneMesh,
    dmap: DeformationMap,
    n: int,
    center: tuple[int, int] = (0, 0),
    membranes: bool = True,
) -> MembraneMesh:
    """Mesh of the deformed truncated cube Phi(center + (-n,n)^2): (2n)^2
    cells, all carrying membranes unless disabled, outer boundary tagged
    Dirichlet."""
    if n < 1:
        raise ValueError("half-width n must be >= 1")
    cx, cy = center
    cells = [(kx, ky) for kx in range(cx - n, cx + n) for ky in range(cy - n, cy + n)]
    membrane = {k: membranes for k in cells}
    mesh = _assemble_tiles(cell, dmap, cells, membrane, scale=1.0)
    v = mesh.ref_vertices
    on_bd = (
        (np.abs(v[:, 0] - (cx - n)) < 1e-12)
        | (np.abs(v[:, 0] - (cx + n)) < 1e-12)
        | (np.abs(v[:, 1] - (cy - n)) < 1e-12)
        | (np.abs(v[:, 1] - (cy + n)) < 1e-12)
    )
    mesh.boundary_nodes = np.flatnonzero(on_bd).astype(np.int64)
    return mesh


def build_square_mesh(m: int) -> MembraneMesh:
    """Uniform right-triangle mesh of (0,1)^2 with m x m cells, no membranes."""
    t = np.linspace(0.0, 1.0, m + 1)
    gx, gy = np.meshgrid(t, t, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i, j):
        return i * (m + 1) + j

    tris = []
    for i in range(m):
        for j in range(m):
            a, b = vid(i, j), vid(i + 1, j)
            c_, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c_))
            tris.append((a, c_, d))
    triangles = np.array(tris, dtype=np.int64)
    on_bd = (
        (verts[:, 0] == 0.0) | (verts[:, 0] == 1.0) | (verts[:, 1] == 0.0) | (verts[:, 1] == 1.0)
    )
    return MembraneMesh(
        vertices=verts,
        triangles=triangles,
        tri_region=np.full(len(triangles), PLUS, dtype=np.int8),
        tri_cell=np.zeros((len(triangles), 2), dtype=np.int64),
        interface_pairs=np.zeros((0, 2), dtype=np.int64),
        boundary_nodes=np.flatnonzero(on_bd).astype(np.int64),
        h=1.0 / m,
    )


@dataclass
class MeshReport:
    min_angle_deg: float
    max_aspect: float
    conforming: bool
    pairing_residual: float
    positive_areas: bool
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.conforming
            and self.positive_areas
            and self.min_angle_deg >= MIN_ANGLE_DEG
            and self.pairing_residual <= PAIRING_TOL
        )


def mesh_report(mesh: MembraneMesh) -> MeshReport:
    """Quality and conformity diagnostics; pure function of the mesh."""
    if mesh.num_triangles == 0 or mesh.num_vertices == 0:
        raise ValueError("empty mesh")
    issues: list[str] = []

    areas = mesh.triangle_areas()
    positive = bool(areas.min() > 0.0)
    if not positive:
        issues.append(f"nonpositive triangle area {areas.min():.3e}")

    # aspect ratio: longest edge / (2 * inradius)
    v = mesh.vertices
    t = mesh.triangles
    e = np.stack(
        [
            np.linalg.norm(v[t[:, 1]] - v[t[:, 0]], axis=1),
            np.linalg.norm(v[t[:, 2]] - v[t[:, 1]], axis=1),
            np.linalg.norm(v[t[:, 0]] - v[t[:, 2]], axis=1),
        ]
    )
    s = e.sum(axis=0) / 2.0
    inradius = np.abs(areas) / s
    max_aspect = float((e.max(axis=0) / (2.0 * inradius)).max())

    if len(mesh.interface_pairs):
        p = mesh.interface_pairs
        pairing = float(np.abs(v[p[:, 0]] - v[p[:, 1]]).max())
    else:
        pairing = 0.0
    if pairing > PAIRING_TOL:
        issues.append(f"interface pairing residual {pairing:.3e}")

    # conformity: every edge is shared by exactly 2 triangles of one region,
    # or is an interface / outer-boundary edge with exactly 1 triangle
    minus_iface = set(mesh.interface_pairs[:, 1].tolist())
    plus_iface = set(mesh.interface_pairs[:, 0].tolist())
    boundary = set(mesh.boundary_nodes.tolist())
    edges: dict[tuple[int, int], list[int]] = {}
    for tri, reg in zip(mesh.triangles, mesh.tri_region):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(int(a), int(b)), max(int(a), int(b)))
            edges.setdefault(key, []).append(int(reg))
    conforming = True
    for (a, b), regs in edges.items():
        if len(regs) == 2:
            if regs[0] != regs[1]:
                conforming = False
                issues.append(f"edge ({a},{b}) shared across regions")
        elif len(regs) == 1:
            iface = (a in minus_iface and b in minus_iface) or (
                a in plus_iface and b in plus_iface
            )
            outer = a in boundary and b in boundary
            if not (iface or outer):
                conforming = False
                issues.append(f"dangling edge ({a},{b})")
        else:
            conforming = False
            issues.append(f"edge ({a},{b}) in {len(regs)} triangles")

    return MeshReport(
        min_angle_deg=mesh.min_angle_deg(),
        max_aspect=max_aspect,
        conforming=conforming,
        pairing_residual=pairing,
        positive_areas=positive,
        issues=issues,
    )


def export_mesh(mesh: MembraneMesh, path) -> None:
    """Write the plain-text `membrane-mesh v1` format (bit-exact round-trip)."""
    lines = ["membrane-mesh v1"]
    lines.append(f"V {mesh.num_vertices}")
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    lines.append(f"T {mesh.num_triangles}")
    for tri, reg, k in zip(mesh.triangles, mesh.tri_region, mesh.tri_cell):
        lines.append(f"{tri[0]} {tri[1]} {tri[2]} {reg} {k[0]} {k[1]}")
    lines.append(f"IE {len(mesh.interface_pairs)}")
    for p, m in mesh.interface_pairs:
        lines.append(f"{p} {m}")
    lines.append(f"B {len(mesh.boundary_nodes)}")
    for b in mesh.boundary_nodes:
        lines.append(f"{b}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def import_mesh(path) -> MembraneMesh:
    with open(path) as f:
        tokens = f.read().split("\n")
    if tokens[0] != "membrane-mesh v1":
        raise ValueError(f"unrecognized mesh header {tokens[0]!r}")
    pos = 1

    def expect(tag):
        nonlocal pos
        head = tokens[pos].split()
        if head[0] != tag:
            raise ValueError(f"expected section {tag}, got {tokens[pos]!r}")
        pos += 1
        return int(head[1])

    nv = expect("V")
    verts = np.array(
        [[float(w) for w in tokens[pos + i].split()] for i in range(nv)]
    ).reshape(nv, 2)
    pos += nv
    nt = expect("T")
    trows = np.array(
        [[int(w) for w in tokens[pos + i].split()] for i in range(nt)], dtype=np.int64
    ).reshape(nt, 6)
    pos += nt
    ne = expect("IE")
    pairs = np.array(
        [[int(w) for w in tokens[pos + i].split()] for i in range(ne)], dtype=np.int64
    ).reshape(ne, 2)
    pos += ne
    nb = expect("B")
    bnodes = np.array([int(tokens[pos + i]) for i in range(nb)], dtype=np.int64)

    tris = trows[:, :3]
    lengths = np.linalg.norm(verts[tris[:, 1]] - verts[tris[:, 0]], axis=1)
    return MembraneMesh(
        vertices=verts,
        triangles=tris,
        tri_region=trows[:, 3].astype(np.int8),
        tri_cell=trows[:, 4:6],
        interface_pairs=pairs,
        boundary_nodes=bnodes,
        h=float(np.median(lengths)),
    )
