"""Triangle meshes of annular domains and their text format.

The outer boundary (tag ``gamma``) carries the Cauchy data; the inner one
(tag ``gamma_c``) is inaccessible.
"""

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DegenerateMesh, InvariantViolation, ParseError
from .fmt import fmt

GAMMA = 0
GAMMA_C = 1
TAG_NAMES = {GAMMA: "gamma", GAMMA_C: "gamma_c"}
TAG_CODES = {v: k for k, v in TAG_NAMES.items()}


def outer_radius(theta):
    return 1.0 + 0.1 * np.cos(2 * theta) - 0.05 * np.sin(3 * theta)


def inner_radius(theta):
    return 0.5 - 0.02 * np.cos(theta) + 0.1 * np.sin(theta)


def robin_coefficient(theta):
    """Robin coefficient used in the corrosion experiment."""
    return 0.5 + 0.3 * np.sin(2 * (theta - 5 * np.pi / 4))


def polar_angle(xy):
    xy = np.asarray(xy, dtype=np.float64)
    return np.mod(np.arctan2(xy[..., 1], xy[..., 0]), 2 * np.pi)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangles (counterclockwise) with tagged boundary edges.

    Derived connectivity is built on construction: global edges are the
    sorted node pairs ``(lo, hi)``; ``tri_edges[t, i]`` is the edge opposite
    local vertex ``i`` and ``tri_signs[t, i]`` is +1 when the triangle's
    outward normal on that edge agrees with the edge's reference normal
    (the lo->hi tangent turned clockwise).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    edges: np.ndarray = field(init=False, repr=False)
    tri_edges: np.ndarray = field(init=False, repr=False)
    tri_signs: np.ndarray = field(init=False, repr=False)
    boundary_edge_ids: np.ndarray = field(init=False, repr=False)
    boundary_tri: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64).reshape(-1, 2)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        bedges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        btags = np.asarray(self.boundary_tags, dtype=np.int64).ravel()
        for name, val in (("nodes", nodes), ("triangles", tris),
                          ("boundary_edges", bedges), ("boundary_tags", btags)):
            object.__setattr__(self, name, val)
        if len(btags) != len(bedges):
            raise InvariantViolation("one tag per boundary edge is required")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise InvariantViolation("triangle references a missing node")
        if bedges.size and (bedges.min() < 0 or bedges.max() >= len(nodes)):
            raise InvariantViolation("boundary edge references a missing node")
        if np.any(self.areas <= 0):
            bad = int(np.argmin(self.areas))
            raise DegenerateMesh(f"triangle {bad} has non-positive area {self.areas[bad]:.3e}")

        local = np.stack([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]], axis=1)
        lo = local.min(axis=2)
        hi = local.max(axis=2)
        keys = np.stack([lo.ravel(), hi.ravel()], axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(len(tris), 3)
        signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "tri_edges", tri_edges)
        object.__setattr__(self, "tri_signs", signs)

        if np.any(counts > 2):
            raise InvariantViolation("an edge is shared by more than two triangles")
        bkeys = np.stack([bedges.min(axis=1), bedges.max(axis=1)], axis=1)
        edge_lookup = {tuple(e): k for k, e in enumerate(edges.tolist())}
        ids = np.array([edge_lookup.get(tuple(e), -1) for e in bkeys.tolist()], dtype=np.int64)
        if np.any(ids < 0):
            raise InvariantViolation("boundary edge is not a triangle edge")
        if np.any(counts[ids] != 1):
            raise InvariantViolation("boundary edge is shared by two triangles")
        if len(np.unique(ids)) != len(ids):
            raise InvariantViolation("boundary edge listed twice")
        if int(np.sum(counts == 1)) != len(ids):
            raise InvariantViolation("tagged edges do not cover the whole boundary")
        if not np.all(np.isin(btags, list(TAG_NAMES))):
            raise InvariantViolation("unknown boundary tag")
        object.__setattr__(self, "boundary_edge_ids", ids)
        owner = np.full(len(edges), -1, dtype=np.int64)
        owner[tri_edges.ravel()] = np.repeat(np.arange(len(tris)), 3)
        object.__setattr__(self, "boundary_tri", owner[ids])

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def edge_lengths(self):
        e = self.nodes[self.edges]
        return np.linalg.norm(e[:, 1] - e[:, 0], axis=1)

    def edge_normals(self):
        """Unit reference normals of all edges (lo->hi tangent turned clockwise)."""
        e = self.nodes[self.edges]
        t = e[:, 1] - e[:, 0]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    def boundary_orientation(self):
        """+1 where the outward normal of a boundary edge equals its reference normal."""
        ids = self.boundary_edge_ids
        owner = self.boundary_tri
        local = np.argmax(self.tri_edges[owner] == ids[:, None], axis=1)
        return self.tri_signs[owner, local]

    def boundary(self, tag):
        """Row indices into ``boundary_edges`` carrying ``tag``."""
        code = TAG_CODES[tag] if isinstance(tag, str) else tag
        return np.flatnonzero(self.boundary_tags == code)

    def boundary_nodes(self, tag):
        return np.unique(self.boundary_edges[self.boundary(tag)])

    def boundary_length(self, tag):
        e = self.nodes[self.boundary_edges[self.boundary(tag)]]
        return float(np.sum(np.linalg.norm(e[:, 1] - e[:, 0], axis=1)))

    def same_as(self, other):
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.boundary_edges, other.boundary_edges)
                and np.array_equal(self.boundary_tags, other.boundary_tags))


RadiusLike = Union[float, Callable]


def _radius(r, theta):
    return r(theta) if callable(r) else np.full_like(theta, float(r))


def annulus_mesh(nr: int, na: int, r_inner: RadiusLike = inner_radius,
                 r_outer: RadiusLike = outer_radius) -> TriMesh:
    """Structured mesh between two star-shaped curves around the origin.

    Node ``(i, j)`` sits on radial layer ``i`` (0 = inner curve, ``nr - 1`` =
    outer curve) at angle ``2 pi j / na`` and has index ``i * na + j``. Each
    quadrilateral is cut along its shorter diagonal (the ``(i, j)``-``(i+1,
    j+1)`` one on ties).
    """
    if nr < 2 or na < 8:
        raise DegenerateMesh(f"need nr >= 2 and na >= 8, got nr={nr}, na={na}")
    theta = 2 * np.pi * np.arange(na) / na
    rin = _radius(r_inner, theta)
    rout = _radius(r_outer, theta)
    s = np.linspace(0.0, 1.0, nr)[:, None]
    rad = rin[None, :] + s * (rout - rin)[None, :]
    nodes = np.stack([rad * np.cos(theta), rad * np.sin(theta)], axis=-1).reshape(-1, 2)

    i, j = np.meshgrid(np.arange(nr - 1), np.arange(na), indexing="ij")
    i, j = i.ravel(), j.ravel()
    jp = (j + 1) % na
    a = i * na + j
    b = (i + 1) * na + j
    c = (i + 1) * na + jp
    d = i * na + jp
    diag_ac = np.linalg.norm(nodes[a] - nodes[c], axis=1)
    diag_bd = np.linalg.norm(nodes[b] - nodes[d], axis=1)
    use_ac = diag_ac <= diag_bd
    t1 = np.where(use_ac[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    t2 = np.where(use_ac[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    tris = np.stack([t1, t2], axis=1).reshape(-1, 3)

    jj = np.arange(na)
    inner = np.column_stack([jj, (jj + 1) % na])
    outer = (nr - 1) * na + inner
    bedges = np.vstack([outer, inner])
    tags = np.concatenate([np.full(na, GAMMA), np.full(na, GAMMA_C)])
    return TriMesh(nodes, tris, bedges, tags)


def write_mesh(mesh: TriMesh, path):
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{fmt(x)} {fmt(y)}" for x, y in mesh.nodes]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {TAG_NAMES[t]}" for (i, j), t in
              zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    pos = 0

    def header(word):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"missing '{word}' section", pos + 1)
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != word:
            raise ParseError(f"expected '{word} <count>'", pos + 1)
        try:
            count = int(parts[1])
        except ValueError:
            raise ParseError(f"bad count {parts[1]!r}", pos + 1) from None
        if count < 0:
            raise ParseError("negative count", pos + 1)
        pos += 1
        return count

    def records(count, width, conv):
        nonlocal pos
        out = []
        for _ in range(count):
            if pos >= len(lines):
                raise ParseError("unexpected end of file", pos + 1)
            parts = lines[pos].split()
            if len(parts) != width:
                raise ParseError(f"expected {width} fields, got {len(parts)}", pos + 1)
            try:
                out.append([c(p) for c, p in zip(conv, parts)])
            except (ValueError, KeyError) as exc:
                raise ParseError(f"bad field ({exc})", pos + 1) from None
            pos += 1
        return out

    def tag(word):
        return TAG_CODES[word]

    nodes = records(header("nodes"), 2, (float, float))
    tris = records(header("triangles"), 3, (int, int, int))
    bnd = records(header("boundary"), 3, (int, int, tag))
    if any(line.strip() for line in lines[pos:]):
        raise ParseError("trailing content", pos + 1)
    bedges = [b[:2] for b in bnd]
    tags = [b[2] for b in bnd]
    return TriMesh(np.array(nodes, dtype=np.float64).reshape(-1, 2),
                   np.array(tris, dtype=np.int64).reshape(-1, 3),
                   np.array(bedges, dtype=np.int64).reshape(-1, 2),
                   np.array(tags, dtype=np.int64))
