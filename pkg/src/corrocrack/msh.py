"""Reader for Gmsh MSH 2.2 ASCII files with named physical groups.

Recognised physical-group names: ``concrete``, ``steel`` (surfaces) and
``gamma_cc``, ``gamma_cf``, ``gamma_s``, ``gamma_us`` (lines).  Only 2-node
lines and 3-node triangles are accepted.
"""

from __future__ import annotations

import io

import numpy as np

from corrocrack.mesh import CONCRETE, STEEL, Mesh, validate_mesh

_SURFACE_GROUPS = {"concrete": CONCRETE, "steel": STEEL}
_LINE_GROUPS = ("gamma_cc", "gamma_cf", "gamma_s", "gamma_us")

_LINE_ELEMENT = 1
_TRI_ELEMENT = 2


class MshParseError(ValueError):
    """Malformed MSH content; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> tuple[str, int]:
        while self.pos < len(self.lines):
            raw = self.lines[self.pos]
            self.pos += 1
            stripped = raw.strip()
            if stripped:
                return stripped, self.pos
        raise MshParseError("unexpected end of file", len(self.lines))

    def expect(self, token: str) -> int:
        line, num = self.next()
        if line != token:
            raise MshParseError(f"expected {token!r}, found {line!r}", num)
        return num


def read_msh(stream: bytes | str | io.IOBase) -> Mesh:
    """Parse an MSH 2.2 ASCII document into a validated Mesh."""
    if isinstance(stream, io.IOBase):
        raw = stream.read()
    else:
        raw = stream
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")

    lines = _Lines(raw)
    lines.expect("$MeshFormat")
    fmt, num = lines.next()
    if fmt.split() != ["2.2", "0", "8"]:
        raise MshParseError(f"unsupported mesh format {fmt!r}, need '2.2 0 8'", num)
    lines.expect("$EndMeshFormat")

    # Physical names.
    section, num = lines.next()
    phys_by_tag: dict[tuple[int, int], str] = {}
    if section == "$PhysicalNames":
        count_line, num = lines.next()
        try:
            n_names = int(count_line)
        except ValueError:
            raise MshParseError("invalid $PhysicalNames count", num)
        for _ in range(n_names):
            entry, num = lines.next()
            parts = entry.split(maxsplit=2)
            if len(parts) != 3 or not parts[2].startswith('"'):
                raise MshParseError("malformed physical name entry", num)
            dim, tag = int(parts[0]), int(parts[1])
            name = parts[2].strip('"').lower()
            phys_by_tag[(dim, tag)] = name
        lines.expect("$EndPhysicalNames")
        section, num = lines.next()

    if section != "$Nodes":
        raise MshParseError(f"expected $Nodes, found {section!r}", num)
    count_line, num = lines.next()
    try:
        n_nodes = int(count_line)
    except ValueError:
        raise MshParseError("invalid $Nodes count", num)
    coords = np.empty((n_nodes, 2))
    id_map: dict[int, int] = {}
    for k in range(n_nodes):
        entry, num = lines.next()
        parts = entry.split()
        if len(parts) != 4:
            raise MshParseError("node entry must be 'id x y z'", num)
        nid = int(parts[0])
        if nid in id_map:
            raise MshParseError(f"duplicate node id {nid}", num)
        id_map[nid] = k
        coords[k] = (float(parts[1]), float(parts[2]))
    lines.expect("$EndNodes")

    lines.expect("$Elements")
    count_line, num = lines.next()
    try:
        n_elems = int(count_line)
    except ValueError:
        raise MshParseError("invalid $Elements count", num)

    tris: list[tuple[int, int, int]] = []
    subs: list[int] = []
    line_edges: dict[str, list[tuple[int, int]]] = {g: [] for g in _LINE_GROUPS}
    for _ in range(n_elems):
        entry, num = lines.next()
        parts = entry.split()
        if len(parts) < 3:
            raise MshParseError("element entry too short", num)
        etype = int(parts[1])
        n_tags = int(parts[2])
        tags = [int(t) for t in parts[3:3 + n_tags]]
        conn = [int(t) for t in parts[3 + n_tags:]]
        try:
            conn = [id_map[c] for c in conn]
        except KeyError as exc:
            raise MshParseError(f"element references unknown node {exc}", num)

        if etype == _TRI_ELEMENT:
            if len(conn) != 3:
                raise MshParseError("triangle needs 3 nodes", num)
            name = phys_by_tag.get((2, tags[0])) if tags else None
            if name not in _SURFACE_GROUPS:
                raise MshParseError(
                    f"triangle in unknown physical group {name!r}", num)
            tris.append(tuple(conn))
            subs.append(_SURFACE_GROUPS[name])
        elif etype == _LINE_ELEMENT:
            if len(conn) != 2:
                raise MshParseError("line needs 2 nodes", num)
            name = phys_by_tag.get((1, tags[0])) if tags else None
            if name not in _LINE_GROUPS:
                raise MshParseError(f"line in unknown physical group {name!r}", num)
            line_edges[name].append(tuple(conn))
        else:
            raise MshParseError(f"unsupported element type {etype}", num)
    lines.expect("$EndElements")

    if not tris:
        raise MshParseError("no triangles tagged 'concrete' or 'steel'")
    if CONCRETE not in subs:
        raise MshParseError("missing required physical group 'concrete'")

    def as_edges(name):
        e = line_edges[name]
        return (np.asarray(e, dtype=np.int64) if e
                else np.zeros((0, 2), dtype=np.int64))

    mesh = Mesh(
        nodes=coords,
        tris=np.asarray(tris, dtype=np.int64),
        subdomain=np.asarray(subs, dtype=np.int64),
        gamma_cc=as_edges("gamma_cc"),
        gamma_cf=as_edges("gamma_cf"),
        gamma_s=as_edges("gamma_s"),
        gamma_us=as_edges("gamma_us"),
        outer_sides={},
    )
    validate_mesh(mesh)
    return mesh
