"""Integer lattice geometry for Z^d.

Points are plain tuples of Python ints, which hash fast and serialize
cleanly.  Balls are Euclidean; every membership test works on the integer
squared norm so boundary classification is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

Point = tuple[int, ...]


def norm2(x: Point) -> int:
    return sum(c * c for c in x)


def origin(d: int) -> Point:
    return (0,) * d


def unit(d: int, axis: int, sign: int = 1) -> Point:
    e = [0] * d
    e[axis] = sign
    return tuple(e)


def neighbors(x: Point):
    d = len(x)
    for j in range(d):
        for s in (1, -1):
            y = list(x)
            y[j] += s
            yield tuple(y)


def add(x: Point, y: Point) -> Point:
    return tuple(a + b for a, b in zip(x, y))


def sub(x: Point, y: Point) -> Point:
    return tuple(a - b for a, b in zip(x, y))


def canonical_edge(a: Point, b: Point) -> tuple[Point, Point]:
    """Unordered nearest-neighbor edge as a sorted pair of endpoints."""
    if norm2(sub(a, b)) != 1:
        raise ValueError(f"not a nearest-neighbor pair: {a}, {b}")
    return (a, b) if a <= b else (b, a)


Edge = tuple[Point, Point]


@dataclass(frozen=True)
class Box:
    """Euclidean ball B_r(center) = {x : |x - center| <= r} on Z^d."""

    center: Point
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    @property
    def d(self) -> int:
        return len(self.center)

    def contains(self, x: Point) -> bool:
        return norm2(sub(x, self.center)) <= self.radius * self.radius

    def on_boundary(self, x: Point) -> bool:
        """x in the ball with at least one nearest neighbor outside.

        The neighbor of largest norm relative to the center increases the
        squared distance by 2*max_j|x_j - c_j| + 1, so a single comparison
        decides the question.
        """
        v = sub(x, self.center)
        n2 = norm2(v)
        r2 = self.radius * self.radius
        if n2 > r2:
            return False
        return n2 + 2 * max(abs(c) for c in v) + 1 > r2

    def points(self) -> list[Point]:
        """All lattice points of the ball (cube scan, exact integer test)."""
        r = self.radius
        r2 = r * r
        d = self.d
        rng1 = np.arange(-r, r + 1, dtype=np.int64)
        grids = np.meshgrid(*([rng1] * d), indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=1)
        keep = (coords * coords).sum(axis=1) <= r2
        pts = coords[keep] + np.asarray(self.center, dtype=np.int64)
        return [tuple(int(c) for c in row) for row in pts]


@lru_cache(maxsize=64)
def ball_points_cached(d: int, center: Point, radius: int) -> tuple[Point, ...]:
    """Sorted lattice points of a ball, cached across calls."""
    return tuple(sorted(Box(center, radius).points()))


def ball_boundary(box: Box) -> set[Point]:
    """The inner boundary of the ball: members with a neighbor outside."""
    if box.radius == 0:
        return {box.center}
    return {p for p in box.points() if box.on_boundary(p)}


def dist_sets(A, B) -> float:
    """Minimal Euclidean distance between two nonempty point sets."""
    A = list(A)
    B = list(B)
    if not A or not B:
        raise ValueError("empty set")
    a = np.asarray(A, dtype=np.int64)
    b = np.asarray(B, dtype=np.int64)
    # pairwise squared distances; fine for the set sizes used here
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return math.sqrt(int(d2.min()))


def diameter(points) -> float:
    """Largest pairwise Euclidean distance (0 for a single point)."""
    pts = list(points)
    if len(pts) <= 1:
        return 0.0
    a = np.asarray(pts, dtype=np.int64)
    d2 = ((a[:, None, :] - a[None, :, :]) ** 2).sum(axis=2)
    return math.sqrt(int(d2.max()))


@lru_cache(maxsize=32)
def _sq_count_tables(d: int, s_max: int) -> np.ndarray:
    """tables[j][s] = number of x in Z^j with |x|^2 = s, for j = 1..d."""
    base = np.zeros(s_max + 1)
    base[0] = 1.0
    k = 1
    while k * k <= s_max:
        base[k * k] = 2.0
        k += 1
    tables = np.empty((d + 1, s_max + 1))
    tables[0, :] = 0.0
    tables[0, 0] = 1.0
    tables[1] = base
    for j in range(2, d + 1):
        tables[j] = np.convolve(tables[j - 1], base)[: s_max + 1]
    return tables


def ball_volume(d: int, r: int) -> int:
    """|B_r| in Z^d via convolution of per-coordinate square counts."""
    if r < 0:
        return 0
    t = _sq_count_tables(d, r * r)
    return int(round(t[d, : r * r + 1].sum()))


def pack_points(coords: np.ndarray, bound: int) -> np.ndarray:
    """Mixed-radix packing of integer coordinate rows into int64 keys.

    Requires |coord| <= bound; collision-free for 2*bound+1 <= 2**(63//d).
    """
    d = coords.shape[-1]
    radix = 2 * bound + 1
    if radix ** d >= 2 ** 63:
        raise ValueError("coordinates too large to pack")
    key = np.zeros(coords.shape[:-1], dtype=np.int64)
    for j in range(d):
        key = key * radix + (coords[..., j] + bound)
    return key
