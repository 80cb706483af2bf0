"""Connectivity analysis of a sampled soup.

Clusters of open edges are computed with a union-find over the touched
vertices (path compression + union by size, dense integer ids behind a
dict keyed by the packed coordinates).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lattice import Box, Point, diameter
from .loopmeasure import Loop
from .soup import Soup


class ClusterPartition:
    """Union-find over the vertex set touched by a set of open edges."""

    def __init__(self, edges):
        self._ids: dict[Point, int] = {}
        parents: list[int] = []
        sizes: list[int] = []
        self._edges = set(edges)
        for a, b in self._edges:
            ia = self._intern(a, parents, sizes)
            ib = self._intern(b, parents, sizes)
            self._union(ia, ib, parents, sizes)
        self._parents = parents
        self._sizes = sizes

    def _intern(self, p: Point, parents, sizes) -> int:
        i = self._ids.get(p)
        if i is None:
            i = len(parents)
            self._ids[p] = i
            parents.append(i)
            sizes.append(1)
        return i

    def _find(self, i: int, parents=None) -> int:
        parents = self._parents if parents is None else parents
        root = i
        while parents[root] != root:
            root = parents[root]
        while parents[i] != root:
            parents[i], i = root, parents[i]
        return root

    def _union(self, a: int, b: int, parents, sizes) -> None:
        ra, rb = self._find(a, parents), self._find(b, parents)
        if ra == rb:
            return
        if sizes[ra] < sizes[rb]:
            ra, rb = rb, ra
        parents[rb] = ra
        sizes[ra] += sizes[rb]

    def component_id(self, x: Point) -> int | None:
        i = self._ids.get(x)
        return None if i is None else self._find(i)

    def connected(self, a: Point, b: Point) -> bool:
        if a == b:
            return True
        ia, ib = self.component_id(a), self.component_id(b)
        return ia is not None and ia == ib

    def component(self, x: Point) -> set[Point]:
        """Vertex set of x's component ({x} for an untouched vertex)."""
        cid = self.component_id(x)
        if cid is None:
            return {x}
        return {p for p, i in self._ids.items() if self._find(i) == cid}


def build_clusters(edges) -> ClusterPartition:
    return ClusterPartition(edges)


@dataclass
class OriginCluster:
    vertices: set[Point]
    loop_indices: list[int]
    diameter: float
    touched_window_boundary: bool
    d: int = field(repr=False, default=0)


def origin_cluster(soup: Soup) -> OriginCluster:
    """C_0 union {0}: the vertex set of the origin's open-edge component.

    The origin is always included, so downstream capacities are defined
    for empty clusters as well.
    """
    d = soup.params.d
    org: Point = (0,) * d
    part = build_clusters(soup.open_edges)
    verts = part.component(org)
    verts.add(org)
    idx = [i for i, lp in enumerate(soup.loops)
           if any(v in verts for v in lp.vertices())]
    win = soup.params.window
    touched = any(win.on_boundary(v) or not win.contains(v) for v in verts)
    return OriginCluster(vertices=verts, loop_indices=idx,
                         diameter=diameter(verts),
                         touched_window_boundary=touched, d=d)


def one_arm(soup: Soup, n: int) -> bool:
    """Whether the origin's component reaches the boundary of B_n."""
    if n > soup.params.window.radius:
        raise ValueError(f"window too small: need radius >= {n}, "
                         f"have {soup.params.window.radius}")
    d = soup.params.d
    box = Box((0,) * d, n)
    verts = build_clusters(soup.open_edges).component((0,) * d)
    return any(box.on_boundary(v) for v in verts)


def two_point(soup: Soup, x: Point) -> bool:
    """Whether x lies in the origin's open-edge component."""
    if not soup.params.window.contains(x):
        raise ValueError(f"{x} lies outside the window")
    d = soup.params.d
    return build_clusters(soup.open_edges).connected((0,) * d, x)


def filtered_connectivity(soup: Soup, predicate, source, target) -> bool:
    """Connectivity from source to target using only loops passing the
    predicate (a pure function of a Loop).

    source and target are point sets; a Box target means its boundary.
    """
    edges = set()
    for lp in soup.loops:
        if predicate(lp):
            edges |= lp.edges()
    part = build_clusters(edges)
    src = {tuple(p) for p in ([source] if isinstance(source, tuple) else source)}
    if isinstance(target, Box):
        tgt_test = target.on_boundary
    else:
        tset = {tuple(p) for p in ([target] if isinstance(target, tuple) else target)}
        tgt_test = tset.__contains__
    for s in src:
        comp = part.component(s)
        comp.add(s)
        if any(tgt_test(v) for v in comp):
            return True
    return False
