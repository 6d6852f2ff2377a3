"""Triangular meshes of a concrete cross-section with an embedded rebar.

The block-structured generator wraps four transfinite quadrilateral blocks
around a graded annular boundary layer on the rebar circle, which keeps the
connectivity fully deterministic and lets convergence studies re-run on
byte-identical meshes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

CONCRETE = 0
STEEL = 1

SIDES = ("TOP", "BOTTOM", "LEFT", "RIGHT")

COINCIDENCE_TOL = 1e-9  # m, node coincidence tolerance


class GeometryError(ValueError):
    """Raised for geometrically infeasible mesh specifications."""


class MeshValidationError(ValueError):
    """Raised when a mesh violates a structural invariant."""


@dataclass(frozen=True)
class OGridSpec:
    """Geometry and grading of the generated rebar cross-section mesh.

    ``circ_contrast`` > 1 concentrates circumferential stations near the top
    of the rebar (ratio of coarsest to finest spacing); ``surface_h`` grades
    the outer zone back down to thin layers at the rectangle boundary, which
    keeps sharp exposure fronts resolved at the exposed surface.
    """

    width: float  # m
    height: float  # m
    center: tuple[float, float]  # m, rebar center
    radius: float  # m, rebar radius
    n_circ: int  # circumferential divisions on the rebar circle
    n_rad: int  # graded boundary-layer rings on the rebar
    grading: float = 1.25  # consecutive ring thickness ratio (>= 1)
    target_h: float = 4e-3  # m, far-field element size
    surface_h: float | None = None  # m, layer size at the outer boundary
    circ_contrast: float = 1.0  # coarsest/finest station spacing ratio

    def __post_init__(self):
        if min(self.width, self.height, self.radius, self.target_h) <= 0.0:
            raise GeometryError("all lengths must be positive")
        if self.surface_h is not None and self.surface_h <= 0.0:
            raise GeometryError("surface_h must be positive")
        cx, cy = self.center
        if not (self.radius < cx < self.width - self.radius
                and self.radius < cy < self.height - self.radius):
            raise GeometryError("rebar circle must lie strictly inside the rectangle")
        if self.n_circ < 8 or self.n_rad < 8:
            raise GeometryError("division counts must be at least 8")
        if self.grading < 1.0:
            raise GeometryError("grading ratio must be >= 1")
        if self.circ_contrast < 1.0:
            raise GeometryError("circumferential contrast must be >= 1")


@dataclass(frozen=True)
class Mesh:
    """Immutable linear-triangle mesh with tagged boundary edge sets.

    Boundary sets are (n, 2) arrays of node-id pairs: ``gamma_cc`` is the
    chloride-exposed outer boundary, ``gamma_cf`` the sealed outer boundary,
    ``gamma_s`` the steel/concrete interface and ``gamma_us`` the upper
    surface used for the crack-width integral.  ``outer_sides`` keeps the
    generator's TOP/BOTTOM/LEFT/RIGHT tagging so a scenario can re-map the
    exposed sides.
    """

    nodes: np.ndarray  # (n, 2) float
    tris: np.ndarray  # (m, 3) int
    subdomain: np.ndarray  # (m,) int, CONCRETE or STEEL
    gamma_cc: np.ndarray
    gamma_cf: np.ndarray
    gamma_s: np.ndarray
    gamma_us: np.ndarray
    outer_sides: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.nodes, self.tris, self.subdomain, self.gamma_cc,
                    self.gamma_cf, self.gamma_s, self.gamma_us):
            arr.setflags(write=False)
        for arr in self.outer_sides.values():
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tris(self) -> int:
        return self.tris.shape[0]

    def areas(self) -> np.ndarray:
        """Signed triangle areas."""
        p = self.nodes[self.tris]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def with_exposure(self, sides: set[str] | tuple[str, ...]) -> "Mesh":
        """Re-tag outer boundary: listed sides exposed, remainder sealed."""
        if not self.outer_sides:
            raise MeshValidationError("mesh carries no side tagging to re-map")
        sides = {s.upper() for s in sides}
        unknown = sides - set(SIDES)
        if unknown:
            raise MeshValidationError(f"unknown sides {sorted(unknown)}")
        cc, cf = [], []
        for name in SIDES:
            edges = self.outer_sides.get(name)
            if edges is None or len(edges) == 0:
                continue
            (cc if name in sides else cf).append(edges)
        empty = np.zeros((0, 2), dtype=np.int64)
        mesh = replace(
            self,
            gamma_cc=np.vstack(cc) if cc else empty,
            gamma_cf=np.vstack(cf) if cf else empty,
        )
        validate_mesh(mesh)
        return mesh


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def validate_mesh(mesh: Mesh) -> None:
    """Check the structural invariants; raise MeshValidationError otherwise."""
    n = mesh.n_nodes
    for name, arr in (("tris", mesh.tris), ("gamma_cc", mesh.gamma_cc),
                      ("gamma_cf", mesh.gamma_cf), ("gamma_s", mesh.gamma_s),
                      ("gamma_us", mesh.gamma_us)):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise MeshValidationError(f"{name} references a nonexistent node id")

    areas = mesh.areas()
    if areas.size and areas.min() <= 0.0:
        bad = int(np.argmin(areas))
        raise MeshValidationError(
            f"triangle {bad} has non-positive area {areas[bad]:.3e}")

    # Edge-to-triangle incidence.
    incidence: dict[tuple[int, int], list[int]] = {}
    for t, tri in enumerate(mesh.tris):
        for k in range(3):
            key = _edge_key(int(tri[k]), int(tri[(k + 1) % 3]))
            incidence.setdefault(key, []).append(t)

    boundary = {key for key, tl in incidence.items() if len(tl) == 1}
    gamma_s_keys = {_edge_key(int(a), int(b)) for a, b in mesh.gamma_s}
    cc_keys = {_edge_key(int(a), int(b)) for a, b in mesh.gamma_cc}
    cf_keys = {_edge_key(int(a), int(b)) for a, b in mesh.gamma_cf}
    us_keys = {_edge_key(int(a), int(b)) for a, b in mesh.gamma_us}

    if cc_keys & cf_keys:
        raise MeshValidationError("gamma_cc and gamma_cf overlap")
    outer = boundary - gamma_s_keys
    if (cc_keys | cf_keys) != outer:
        raise MeshValidationError(
            "gamma_cc union gamma_cf must cover exactly the outer boundary")
    if not us_keys <= (cc_keys | cf_keys):
        raise MeshValidationError("gamma_us must lie on the outer boundary")

    for key in gamma_s_keys:
        tl = incidence.get(key)
        if tl is None:
            raise MeshValidationError("gamma_s edge is not a mesh edge")
        if len(tl) == 2:
            subs = {int(mesh.subdomain[tl[0]]), int(mesh.subdomain[tl[1]])}
            if subs != {CONCRETE, STEEL}:
                raise MeshValidationError(
                    "interior gamma_s edge must separate concrete from steel")
        else:  # boundary of a hole; the single neighbour must be concrete
            if int(mesh.subdomain[tl[0]]) != CONCRETE:
                raise MeshValidationError("gamma_s hole edge must bound concrete")


def boundary_normals(mesh: Mesh) -> dict[tuple[int, int], np.ndarray]:
    """Outward unit normals of the concrete domain, keyed by sorted edge pair.

    On the steel interface the normal points out of the concrete, i.e. into
    the rebar; species influx applied there is therefore positive into the
    concrete.
    """
    incidence: dict[tuple[int, int], list[int]] = {}
    for t, tri in enumerate(mesh.tris):
        if mesh.subdomain[t] != CONCRETE:
            continue
        for k in range(3):
            key = _edge_key(int(tri[k]), int(tri[(k + 1) % 3]))
            incidence.setdefault(key, []).append(t)

    wanted = [tuple(e) for e in np.vstack([
        mesh.gamma_cc.reshape(-1, 2), mesh.gamma_cf.reshape(-1, 2),
        mesh.gamma_s.reshape(-1, 2)])] if (
            len(mesh.gamma_cc) + len(mesh.gamma_cf) + len(mesh.gamma_s)) else []

    normals: dict[tuple[int, int], np.ndarray] = {}
    for a, b in wanted:
        key = _edge_key(int(a), int(b))
        tl = [t for t in incidence.get(key, []) ]
        if not tl:
            raise MeshValidationError(f"edge {key} has no adjacent concrete triangle")
        tri = mesh.tris[tl[0]]
        opposite = [v for v in tri if v not in key][0]
        pa, pb = mesh.nodes[key[0]], mesh.nodes[key[1]]
        tangent = pb - pa
        length = float(np.hypot(*tangent))
        if length <= COINCIDENCE_TOL:
            raise GeometryError(f"degenerate zero-length edge {key}")
        nvec = np.array([tangent[1], -tangent[0]]) / length
        mid = 0.5 * (pa + pb)
        if float(np.dot(nvec, mesh.nodes[opposite] - mid)) > 0.0:
            nvec = -nvec
        normals[key] = nvec
    return normals


def _allocate_stations(n_circ: int, measures: list[float]) -> list[int]:
    """Split n_circ circumferential divisions over the four corner-to-corner
    arcs proportionally to their station measure, keeping the left/right
    pair equal so mirror-symmetric geometries yield mirror-symmetric
    meshes."""
    right, top, left, bottom = measures
    total = right + top + left + bottom
    if abs(right - left) <= 1e-9 * total:
        m_side = max(1, round(n_circ * right / total))
        rem = n_circ - 2 * m_side
        if rem < 2:
            raise GeometryError("circumferential count too small for block layout")
        m_top = max(1, round(rem * top / (top + bottom)))
        m_bottom = rem - m_top
        if m_bottom < 1:
            m_top, m_bottom = rem - 1, 1
        return [m_side, m_top, m_side, m_bottom]
    counts = [max(1, round(n_circ * m / total)) for m in (right, top, left)]
    m_bottom = n_circ - sum(counts)
    if m_bottom < 1:
        raise GeometryError("circumferential count too small for block layout")
    return counts + [m_bottom]


def _station_layout(spec: OGridSpec, ang: dict[str, float],
                    block_order: list[tuple[str, str, str]],
                    spans: list[float]):
    """Station angles and per-station boundary fractions for all blocks.

    Stations are placed at equal increments of a spacing measure that (for
    circ_contrast > 1) is finest at the top of the rebar and coarsest at the
    bottom; boundary points follow the angular fraction so rays stay nearly
    radial.
    """
    k = spec.circ_contrast

    def density(theta):
        # Reciprocal of relative spacing; spacing is 1 at the top point
        # (theta = pi/2) and k at the bottom.
        return 1.0 / (1.0 + (k - 1.0) * (1.0 - np.sin(theta)) / 2.0)

    grids = []
    measures = []
    a0 = ang[block_order[0][1]]  # continuous angle across blocks
    for (name, a, b), sp in zip(block_order, spans):
        tt = a0 + sp * np.linspace(0.0, 1.0, 4097)
        dens = density(tt)
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (dens[1:] + dens[:-1]) * np.diff(tt))])
        grids.append((a0, sp, tt, cum))
        measures.append(float(cum[-1]))
        a0 += sp

    counts = _allocate_stations(spec.n_circ, measures)
    angles: list[float] = []
    side_frac: list[float] = []
    side_of_edge: list[str] = []
    for (name, a, b), m, (a0, sp, tt, cum) in zip(block_order, counts, grids):
        targets = cum[-1] * np.arange(m) / m
        th = np.interp(targets, cum, tt)
        th[0] = a0  # corner stations are exact
        angles.extend(th.tolist())
        side_frac.extend(((th - a0) / sp).tolist())
        side_of_edge.extend([name] * m)
    return np.asarray(angles), np.asarray(side_frac), side_of_edge, counts


def _geometric_steps(first: float, limit: float, ratio: float,
                     cap: float) -> list[float]:
    """Geometric step sizes from ``first`` by ``ratio`` capped at ``cap``
    while their sum stays below ``limit``."""
    steps: list[float] = []
    h = first
    while sum(steps) + h < limit - 1e-12 and h < cap - 1e-15:
        steps.append(h)
        h = min(h * ratio, cap)
        if len(steps) > 10000:
            raise GeometryError("layer grading failed to span the block")
    return steps


def _layer_fractions(h_in: float, h_out: float, total: float, ratio: float,
                     cap: float) -> np.ndarray:
    """Cumulative layer fractions graded from ``h_in`` at the start and back
    down to ``h_out`` at the end, capped at ``cap`` in between."""
    up = _geometric_steps(h_in, total, ratio, cap)
    down = _geometric_steps(h_out, max(total - sum(up), 0.0), ratio, cap)
    mid = total - sum(up) - sum(down)
    steps = list(up)
    if mid > 0.0:
        n_mid = max(1, int(math.ceil(mid / cap)))
        if n_mid == 1 and steps and mid < 0.5 * cap:
            steps[-1] += mid  # avoid a sliver middle layer
        else:
            steps.extend([mid / n_mid] * n_mid)
    steps.extend(reversed(down))
    if not steps:
        steps = [total]
    cum = np.cumsum(np.asarray(steps)) / total
    cum[-1] = 1.0
    return cum


def _split_quad(quads: list[tuple[int, int, int, int]], nodes: list,
                tris: list, subs: list, tag: int) -> None:
    """Split quads along the shorter diagonal; enforce CCW orientation."""
    pts = np.asarray(nodes)
    for (i0, i1, i2, i3) in quads:
        d02 = np.sum((pts[i0] - pts[i2]) ** 2)
        d13 = np.sum((pts[i1] - pts[i3]) ** 2)
        if d02 <= d13:
            cand = [(i0, i1, i2), (i0, i2, i3)]
        else:
            cand = [(i0, i1, i3), (i1, i2, i3)]
        for tri in cand:
            p = pts[list(tri)]
            area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                          - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
            tris.append(tri if area > 0 else (tri[0], tri[2], tri[1]))
            subs.append(tag)


def generate_ogrid(spec: OGridSpec, ell: float | None = None) -> Mesh:
    """Generate the block-structured rebar cross-section mesh.

    Four transfinite quadrilateral regions (one per rectangle side) wrap a
    graded annular boundary layer on the rebar circle; they share one radial
    subdivision so the grid is conforming by construction.  When the
    phase-field length ``ell`` is supplied, the generator checks that the
    smallest interface edge respects the process-zone resolution rule (at
    most ell/5) and raises GeometryError otherwise.
    """
    w, h = spec.width, spec.height
    cx, cy = spec.center
    r = spec.radius
    corners = {
        "BR": np.array([w, 0.0]), "TR": np.array([w, h]),
        "TL": np.array([0.0, h]), "BL": np.array([0.0, 0.0]),
    }
    ang = {k: math.atan2(v[1] - cy, v[0] - cx) for k, v in corners.items()}

    def span(a0, a1):
        d = a1 - a0
        while d <= 0:
            d += 2.0 * math.pi
        return d

    # Blocks in CCW order starting from the bottom-right corner ray.
    block_order = [("RIGHT", "BR", "TR"), ("TOP", "TR", "TL"),
                   ("LEFT", "TL", "BL"), ("BOTTOM", "BL", "BR")]
    spans = [span(ang[a], ang[b]) for _, a, b in block_order]
    angles, side_frac, side_of_edge, counts = _station_layout(
        spec, ang, block_order, spans)
    n_c = len(angles)
    assert n_c == spec.n_circ
    side_pts = []
    j = 0
    for (name, a, b), m in zip(block_order, counts):
        for jj in range(m):
            side_pts.append(corners[a]
                            + side_frac[j] * (corners[b] - corners[a]))
            j += 1

    # Boundary-layer ring radii: first ring matches the finest chord, then
    # geometric grading away from the rebar.
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2.0 * math.pi]]))
    min_chord = float(2.0 * r * np.sin(gaps.min() / 2.0))
    h1 = min_chord
    q = spec.grading
    thick = h1 * (q ** np.arange(spec.n_rad))
    radii = r + np.concatenate([[0.0], np.cumsum(thick)])
    r_bl = float(radii[-1])
    clearance = min(cx, w - cx, cy, h - cy)
    if r_bl >= clearance - max(spec.target_h, h1):
        raise GeometryError(
            f"boundary layer of thickness {r_bl - r:.3e} m leaves no room "
            f"between rebar and rectangle (clearance {clearance - r:.3e} m)")
    if ell is not None and min_chord > ell / 5.0 + 1e-15:
        raise GeometryError(
            f"smallest interface edge {min_chord:.3e} m exceeds "
            f"ell/5 = {ell / 5.0:.3e} m")

    nodes: list[np.ndarray] = []

    def add_node(p) -> int:
        nodes.append(np.asarray(p, dtype=float))
        return len(nodes) - 1

    # Rings of the boundary layer (including the rebar circle, ring 0).
    ring_ids = np.empty((spec.n_rad + 1, n_c), dtype=np.int64)
    for i, rad in enumerate(radii):
        for j, th in enumerate(angles):
            ring_ids[i, j] = add_node([cx + rad * math.cos(th),
                                       cy + rad * math.sin(th)])

    # Ruled zone from the outer boundary-layer ring to the rectangle
    # boundary: one shared set of radial fractions, graded continuously from
    # the boundary layer and capped at the far-field target size on the
    # longest ray.
    arc_pts = np.asarray([nodes[ring_ids[-1, jj]] for jj in range(n_c)])
    rays = np.asarray(side_pts) - arc_pts
    ray_len = np.hypot(rays[:, 0], rays[:, 1])
    h_in = float(thick[-1]) * q
    h_out = spec.target_h if spec.surface_h is None else spec.surface_h
    fr = _layer_fractions(h_in, h_out, float(ray_len.max()), q, spec.target_h)
    n_lay = len(fr)

    zone_ids = np.empty((n_lay + 1, n_c), dtype=np.int64)
    zone_ids[0, :] = ring_ids[-1, :]
    for li in range(1, n_lay + 1):
        t = fr[li - 1]
        for j in range(n_c):
            zone_ids[li, j] = add_node(arc_pts[j] + t * rays[j])

    tris: list[tuple[int, int, int]] = []
    subs: list[int] = []

    bl_quads = []
    for i in range(spec.n_rad):
        for j in range(n_c):
            jn = (j + 1) % n_c
            bl_quads.append((ring_ids[i, j], ring_ids[i, jn],
                             ring_ids[i + 1, jn], ring_ids[i + 1, j]))
    zone_quads = []
    for li in range(n_lay):
        for j in range(n_c):
            jn = (j + 1) % n_c
            zone_quads.append((zone_ids[li, j], zone_ids[li, jn],
                               zone_ids[li + 1, jn], zone_ids[li + 1, j]))

    # Steel disc: a few uniform rings inward from the rebar circle plus a
    # center fan; the near-rigid steel needs no boundary-layer resolution.
    n_s = max(2, min(4, round(r / (4.0 * h1))))
    steel_ring_ids = [ring_ids[0]]
    for k in range(1, n_s):
        rad = r * (n_s - k) / n_s
        ids = np.array([add_node([cx + rad * math.cos(th), cy + rad * math.sin(th)])
                        for th in angles], dtype=np.int64)
        steel_ring_ids.append(ids)
    center_id = add_node([cx, cy])

    steel_quads = []
    for k in range(n_s - 1):
        outer_ids, inner_ids = steel_ring_ids[k], steel_ring_ids[k + 1]
        for j in range(n_c):
            jn = (j + 1) % n_c
            steel_quads.append((inner_ids[j], inner_ids[jn],
                                outer_ids[jn], outer_ids[j]))

    _split_quad(bl_quads, nodes, tris, subs, CONCRETE)
    _split_quad(zone_quads, nodes, tris, subs, CONCRETE)
    _split_quad(steel_quads, nodes, tris, subs, STEEL)
    innermost = steel_ring_ids[-1]
    pts = np.asarray(nodes)
    for j in range(n_c):
        jn = (j + 1) % n_c
        tri = (center_id, int(innermost[j]), int(innermost[jn]))
        p = pts[list(tri)]
        area = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                      - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
        tris.append(tri if area > 0 else (tri[0], tri[2], tri[1]))
        subs.append(STEEL)

    gamma_s = np.array([[ring_ids[0, j], ring_ids[0, (j + 1) % n_c]]
                        for j in range(n_c)], dtype=np.int64)
    outer_sides: dict[str, list] = {name: [] for name in SIDES}
    boundary_row = zone_ids[n_lay]
    for j in range(n_c):
        jn = (j + 1) % n_c
        outer_sides[side_of_edge[j]].append([boundary_row[j], boundary_row[jn]])
    outer_sides = {k: np.asarray(v, dtype=np.int64) for k, v in outer_sides.items()}

    mesh = Mesh(
        nodes=np.asarray(nodes, dtype=float),
        tris=np.asarray(tris, dtype=np.int64),
        subdomain=np.asarray(subs, dtype=np.int64),
        gamma_cc=outer_sides["TOP"].copy(),
        gamma_cf=np.vstack([outer_sides[s] for s in ("BOTTOM", "LEFT", "RIGHT")]),
        gamma_s=gamma_s,
        gamma_us=outer_sides["TOP"].copy(),
        outer_sides=outer_sides,
    )
    validate_mesh(mesh)
    return mesh


def rect_mesh(width: float, height: float, nx: int, ny: int,
              origin: tuple[float, float] = (0.0, 0.0)) -> Mesh:
    """Structured rectangle mesh (concrete only), used for column benchmarks
    and the diffusivity-fitting harness."""
    if width <= 0 or height <= 0 or nx < 1 or ny < 1:
        raise GeometryError("rect_mesh requires positive dimensions and counts")
    x = origin[0] + np.linspace(0.0, width, nx + 1)
    y = origin[1] + np.linspace(0.0, height, ny + 1)
    xx, yy = np.meshgrid(x, y, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris, subs = [], []
    for j in range(ny):
        for i in range(nx):
            n00, n10 = nid(i, j), nid(i + 1, j)
            n01, n11 = nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))
            subs.extend([CONCRETE, CONCRETE])

    outer_sides = {
        "BOTTOM": np.array([[nid(i, 0), nid(i + 1, 0)] for i in range(nx)]),
        "TOP": np.array([[nid(i, ny), nid(i + 1, ny)] for i in range(nx)]),
        "LEFT": np.array([[nid(0, j), nid(0, j + 1)] for j in range(ny)]),
        "RIGHT": np.array([[nid(nx, j), nid(nx, j + 1)] for j in range(ny)]),
    }
    outer_sides = {k: v.astype(np.int64) for k, v in outer_sides.items()}
    mesh = Mesh(
        nodes=nodes,
        tris=np.asarray(tris, dtype=np.int64),
        subdomain=np.asarray(subs, dtype=np.int64),
        gamma_cc=outer_sides["LEFT"].copy(),
        gamma_cf=np.vstack([outer_sides[s] for s in ("BOTTOM", "TOP", "RIGHT")]),
        gamma_s=np.zeros((0, 2), dtype=np.int64),
        gamma_us=outer_sides["TOP"].copy(),
        outer_sides=outer_sides,
    )
    validate_mesh(mesh)
    return mesh
