"""Node layouts on rectangles, boundary labelling and nearest-neighbour stencils."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

#: Side names; ``top`` is the side ``z = z1``.
SIDES = ("left", "right", "bottom", "top")
_SIDE_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    z0: float
    z1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.z1 > self.z0):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.z1 - self.z0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, pts, tol=0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (
            (pts[:, 0] >= self.x0 - tol)
            & (pts[:, 0] <= self.x1 + tol)
            & (pts[:, 1] >= self.z0 - tol)
            & (pts[:, 1] <= self.z1 + tol)
        )

    @classmethod
    def from_sequence(cls, seq) -> "Rectangle":
        return cls(*(float(v) for v in seq))


UNIT_SQUARE = Rectangle(0.0, 1.0, 0.0, 1.0)


def side_labels(pts, domain: Rectangle, tol: float = BOUNDARY_TOL):
    """Per-point label (``''`` interior, ``'left'``, ``'bottom+left'`` ...) and outward normal.

    A point is on a side when it lies within ``tol`` times the domain extent of
    that edge.  Corner normals are the normalized sum of the adjacent side normals.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    tx = tol * max(domain.width, 1.0)
    tz = tol * max(domain.height, 1.0)
    on = {
        "left": np.abs(pts[:, 0] - domain.x0) <= tx,
        "right": np.abs(pts[:, 0] - domain.x1) <= tx,
        "bottom": np.abs(pts[:, 1] - domain.z0) <= tz,
        "top": np.abs(pts[:, 1] - domain.z1) <= tz,
    }
    labels = []
    normals = np.zeros((len(pts), 2))
    for i in range(len(pts)):
        sides = [s for s in SIDES if on[s][i]]
        labels.append("+".join(sides))
        if sides:
            v = np.sum([_SIDE_NORMALS[s] for s in sides], axis=0)
            normals[i] = v / np.linalg.norm(v)
    return np.array(labels, dtype=object), normals


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Scattered nodes in a rectangle.

    Attributes
    ----------
    coords : ndarray, shape (N, 2)
    labels : ndarray of str, shape (N,)
        ``''`` for interior nodes, otherwise the side name(s) joined by ``+``
        (corner nodes carry two sides).
    normals : ndarray, shape (N, 2)
        Outward unit normals on boundary nodes, zero on interior nodes.
    domain : Rectangle
    """

    coords: np.ndarray
    labels: np.ndarray
    normals: np.ndarray
    domain: Rectangle

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=float).reshape(-1, 2)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if len(self.labels) != len(coords) or self.normals.shape != coords.shape:
            raise ValueError("labels/normals do not match coords")
        if not np.all(self.domain.contains(coords, tol=BOUNDARY_TOL * max(self.domain.width, self.domain.height, 1.0))):
            raise ValueError("node outside the domain rectangle")

    def __len__(self):
        return len(self.coords)

    @property
    def N(self) -> int:
        return len(self.coords)

    @property
    def x(self):
        return self.coords[:, 0]

    @property
    def z(self):
        return self.coords[:, 1]

    @property
    def is_boundary(self) -> np.ndarray:
        return np.array([bool(s) for s in self.labels], dtype=bool)

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary)

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    def sides_of(self, i: int) -> list:
        return self.labels[i].split("+") if self.labels[i] else []

    def min_spacing(self) -> float:
        if self.N < 2:
            return np.inf
        d, _ = cKDTree(self.coords).query(self.coords, k=2)
        return float(d[:, 1].min())

    def nearest(self, point) -> int:
        """Index of the node nearest to ``point`` (lowest index on ties)."""
        d = np.hypot(self.x - point[0], self.z - point[1])
        return int(np.argmin(d))

    @classmethod
    def from_points(cls, pts, domain: Rectangle) -> "NodeSet":
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        labels, normals = side_labels(pts, domain)
        return cls(pts, labels, normals, domain)

    # -- CSV round trip ----------------------------------------------------
    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write(f"# domain {self.domain.x0!r} {self.domain.x1!r} {self.domain.z0!r} {self.domain.z1!r}\n")
            w = csv.writer(fh)
            w.writerow(["x", "z", "role", "gamma_label", "nx", "nz"])
            for (x, z), lab, (nx, nz) in zip(self.coords, self.labels, self.normals):
                w.writerow([repr(float(x)), repr(float(z)), "boundary" if lab else "interior", lab, repr(float(nx)), repr(float(nz))])

    @classmethod
    def from_csv(cls, path) -> "NodeSet":
        with open(path, newline="") as fh:
            first = fh.readline()
            if not first.startswith("# domain"):
                raise ValueError(f"{path}: missing '# domain' header line")
            domain = Rectangle.from_sequence(first.split()[2:6])
            rows = list(csv.DictReader(fh))
        coords = np.array([[float(r["x"]), float(r["z"])] for r in rows]).reshape(-1, 2)
        labels = np.array([r["gamma_label"] for r in rows], dtype=object)
        normals = np.array([[float(r["nx"]), float(r["nz"])] for r in rows]).reshape(-1, 2)
        return cls(coords, labels, normals, domain)


def generate_cartesian(nx: int, nz: int, domain: Rectangle = UNIT_SQUARE) -> NodeSet:
    """Regular ``nx`` by ``nz`` grid including the edges; x varies fastest."""
    if nx < 2 or nz < 2:
        raise ValueError("a Cartesian layout needs at least 2 nodes per direction")
    xs = np.linspace(domain.x0, domain.x1, nx)
    zs = np.linspace(domain.z0, domain.z1, nz)
    X, Z = np.meshgrid(xs, zs)
    return NodeSet.from_points(np.column_stack([X.ravel(), Z.ravel()]), domain)


def radical_inverse(i: int, base: int) -> float:
    """Van der Corput radical inverse of the integer ``i`` in ``base``."""
    inv, f = 0.0, 1.0 / base
    while i > 0:
        i, digit = divmod(i, base)
        inv += digit * f
        f /= base
    return inv


def halton_points(N: int, bases=(2, 3), start: int = 1) -> np.ndarray:
    """First ``N`` Halton points in the unit square, index starting at ``start``."""
    return np.array([[radical_inverse(i, b) for b in bases] for i in range(start, start + N)]).reshape(-1, len(bases))


def boundary_ring(domain: Rectangle, per_side: int) -> np.ndarray:
    """Evenly spaced points on the rectangle edges, ``per_side`` per edge including corners."""
    if per_side < 2:
        raise ValueError("boundary ring needs at least 2 points per side")
    xs = np.linspace(domain.x0, domain.x1, per_side)
    zs = np.linspace(domain.z0, domain.z1, per_side)
    pts = [(x, domain.z0) for x in xs]
    pts += [(domain.x1, z) for z in zs[1:]]
    pts += [(x, domain.z1) for x in xs[-2::-1]]
    pts += [(domain.x0, z) for z in zs[-2:0:-1]]
    return np.array(pts)


def _with_ring(pts, domain, ring_per_side):
    if ring_per_side:
        pts = np.vstack([pts, boundary_ring(domain, ring_per_side)])
    return NodeSet.from_points(pts, domain)


def map_unit(u, domain: Rectangle) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    return np.column_stack([domain.x0 + u[:, 0] * domain.width, domain.z0 + u[:, 1] * domain.height])


def generate_halton(N: int, domain: Rectangle = UNIT_SQUARE, boundary_ring: int = 0, start: int = 1) -> NodeSet:
    """Halton nodes (bases 2, 3) mapped into ``domain``.

    With ``boundary_ring > 0`` an evenly spaced layer of that many points per
    side is appended after the ``N`` interior points.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    return _with_ring(map_unit(halton_points(N, start=start), domain), domain, boundary_ring)


def generate_random(N: int, domain: Rectangle = UNIT_SQUARE, seed: int = 0, boundary_ring: int = 0) -> NodeSet:
    """Uniform i.i.d. nodes from a seeded generator, optionally with a boundary ring."""
    rng = np.random.default_rng(seed)
    u = rng.random((N, 2))
    return _with_ring(map_unit(u, domain), domain, boundary_ring)


@dataclass(frozen=True, eq=False)
class StencilMap:
    """``indices[i]`` are the ``n`` nearest nodes to node ``i``, nearest first."""

    indices: np.ndarray

    @property
    def n(self) -> int:
        return self.indices.shape[1]

    def __len__(self):
        return self.indices.shape[0]

    def __getitem__(self, i):
        return self.indices[i]


def _sort_rows(coords, cand):
    # order candidate lists by (distance, global index)
    d = np.linalg.norm(coords[cand] - coords[:, None, :], axis=-1)
    order = np.lexsort((cand, d), axis=-1)
    return np.take_along_axis(cand, order, axis=1), np.take_along_axis(d, order, axis=1)


def nearest_neighbors_bruteforce(nodes: NodeSet, n: int) -> StencilMap:
    """O(N^2) reference: full distance sort with ties broken by lower index."""
    N = nodes.N
    if n > N or n < 1:
        raise ValueError(f"stencil size {n} invalid for {N} nodes")
    c = nodes.coords
    d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
    idx = np.broadcast_to(np.arange(N), (N, N))
    order = np.lexsort((idx, d), axis=-1)
    return StencilMap(np.ascontiguousarray(order[:, :n]))


def nearest_neighbors(nodes: NodeSet, n: int) -> StencilMap:
    """``n`` nearest neighbours per node (self included), ties by lower index.

    Uses a k-d tree for candidates and re-sorts every list exactly so the
    result matches :func:`nearest_neighbors_bruteforce`.
    """
    N = nodes.N
    if n > N or n < 1:
        raise ValueError(f"stencil size {n} invalid for {N} nodes")
    c = nodes.coords
    if N <= 64:
        return nearest_neighbors_bruteforce(nodes, n)
    k = min(N, n + 8)
    tree = cKDTree(c)
    while True:
        dist, cand = tree.query(c, k=k)
        cand, dist = _sort_rows(c, cand)
        if k == N:
            break
        # every node tied with the n-th distance must be among the candidates
        kth = dist[:, n - 1]
        far = dist[:, -1]
        if np.all(far > kth * (1 + 1e-12) + 1e-300):
            break
        k = min(N, 2 * k)
    out = cand[:, :n]
    return StencilMap(np.ascontiguousarray(out))


def fill_distance(nodes: NodeSet) -> float:
    """Quasi-uniform spacing estimate ``sqrt(area) / sqrt(N)``."""
    if nodes.N < 1:
        raise ValueError("fill distance of an empty node set")
    return float(np.sqrt(nodes.domain.area) / np.sqrt(nodes.N))
