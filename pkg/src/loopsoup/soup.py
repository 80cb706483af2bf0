"""Poisson loop-soup sampling.

Two exact samplers of the same truncated-length soup law:

* sample_soup builds the full configuration in a finite window.  Roots
  live in the window enlarged by L_max/2; a loop of length <= L_max
  reaches at most L_max/2 from its root, so connectivity restricted to
  the window is exactly distributed as under the truncated soup on all
  of Z^d.
* grow_origin_cluster reveals only the loops touching the cluster of the
  origin, which makes per-sample cost proportional to the cluster (not
  the window volume) and is what the large scans use.  Loops through a
  fixed vertex v are generated from the dominating visit-weighted
  process -- length k with Poisson(alpha p_k) counts, a uniform closed
  k-bridge rooted at v -- thinned by 1/(number of visits to v), which is
  exactly the loop measure restricted to loops through v.  Processing
  cluster vertices in order and discarding loops that touch an
  already-processed vertex partitions the soup by first touched vertex,
  so every cluster loop is produced exactly once.

Both samplers derive all randomness from counter-based substreams, so a
(params, seed) pair yields the same configuration for any thread count.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lattice import Box, Edge, Point, ball_points_cached
from .loopmeasure import LengthTable, Loop
from .rng import stream

_CHUNK = 4096  # fixed replica chunk; keeps parallel output byte-identical


@dataclass
class SoupParams:
    alpha: float
    d: int
    window: Box
    table: LengthTable
    seed: int
    max_expected_loops: float = 5e6
    # roots confined to the bare window (finite loop space for the Mecke
    # suite) instead of the enlarged window that makes window events exact
    enlarge_roots: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.table.d != self.d or self.window.d != self.d:
            raise ValueError("dimension mismatch between table, window, params")

    @property
    def root_window(self) -> Box:
        if not self.enlarge_roots:
            return self.window
        return Box(self.window.center, self.window.radius + self.table.L_max // 2)


@dataclass
class Soup:
    """A sampled loop configuration (multiset; duplicates permitted)."""

    params: SoupParams
    loops: list[Loop]
    root_window: Box
    _edge_counts: Counter = field(default_factory=Counter, repr=False)

    @property
    def open_edges(self) -> set[Edge]:
        return set(self._edge_counts)

    def dump_jsonl(self, fh) -> None:
        meta = {"schema": "loopsoup-soup/v1", "d": self.params.d,
                "alpha": self.params.alpha, "L_max": self.params.table.L_max,
                "seed": self.params.seed,
                "window": {"center": list(self.params.window.center),
                           "radius": self.params.window.radius},
                "root_window": {"center": list(self.root_window.center),
                                "radius": self.root_window.radius},
                "n_loops": len(self.loops)}
        fh.write(json.dumps(meta) + "\n")
        for lp in self.loops:
            fh.write(json.dumps(lp.to_json()) + "\n")


def _count_edges(loops) -> Counter:
    counts: Counter = Counter()
    for lp in loops:
        for e in lp.edges():
            counts[e] += 1
    return counts


def open_edges(soup: Soup) -> set[Edge]:
    """Deduplicated union of traversed edges; idempotent."""
    return soup.open_edges


def add_loop(soup: Soup, loop: Loop) -> Soup:
    counts = soup._edge_counts.copy()
    for e in loop.edges():
        counts[e] += 1
    return Soup(params=soup.params, loops=soup.loops + [loop],
                root_window=soup.root_window, _edge_counts=counts)


def remove_loop(soup: Soup, index: int) -> Soup:
    if not 0 <= index < len(soup.loops):
        raise IndexError(f"loop index {index} out of range")
    counts = soup._edge_counts.copy()
    for e in soup.loops[index].edges():
        counts[e] -= 1
        if counts[e] == 0:
            del counts[e]
    loops = soup.loops[:index] + soup.loops[index + 1:]
    return Soup(params=soup.params, loops=loops,
                root_window=soup.root_window, _edge_counts=counts)


def _vertex_loops(params: SoupParams, x: Point, v_x: int) -> list[Loop]:
    rng = stream(params.seed, "soup-vertex", *x)
    lengths = params.table.sample_length(rng, size=v_x)
    out = []
    for k in lengths:
        k = int(k)
        if k <= 32:
            trace = params.table.sample_bridge_single(k, rng, x)
        else:
            trace = params.table.sample_bridges(k, 1, rng, root=x)[0]
        out.append(Loop(root=x, length=k, trace=trace))
    return out


def sample_soup(params: SoupParams, threads: int = 1) -> Soup:
    """Sample the soup with roots in the enlarged window.

    Per-vertex Poisson counts come from one vectorized draw in fixed
    lexicographic vertex order; each vertex with loops then consumes its
    own coordinate-keyed substream, so the result does not depend on how
    vertices are assigned to threads.
    """
    rw = params.root_window
    m_d = params.table.m_d
    vertices = ball_points_cached(params.d, rw.center, rw.radius)
    expected = params.alpha * m_d * len(vertices)
    if expected > params.max_expected_loops:
        raise MemoryError(
            f"expected loop count {expected:.3e} exceeds budget "
            f"{params.max_expected_loops:.3e}; shrink the window or L_max")
    counts = stream(params.seed, "soup-counts").poisson(
        params.alpha * m_d, size=len(vertices))
    occupied = [(vertices[i], int(counts[i])) for i in np.flatnonzero(counts)]

    if threads <= 1 or len(occupied) < 2:
        loops = []
        for x, v in occupied:
            loops.extend(_vertex_loops(params, x, v))
    else:
        chunks = [occupied[i:i + 64] for i in range(0, len(occupied), 64)]

        def work(chunk):
            out = []
            for x, v in chunk:
                out.extend(_vertex_loops(params, x, v))
            return out

        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
        loops = [lp for part in parts for lp in part]

    return Soup(params=params, loops=loops, root_window=rw,
                _edge_counts=_count_edges(loops))


# -- lazy origin-cluster sampler ---------------------------------------------

@dataclass
class ClusterSample:
    """The cluster of the origin under the infinite-volume truncated soup."""

    vertices: set[Point]          # always contains the origin
    loops: list[Loop]             # every loop of the cluster, exactly once
    truncated: bool               # growth stopped at the radius cap
    boundary_hit: bool | None     # one-arm early-stop result, if requested

    @property
    def size(self) -> int:
        return len(self.vertices)


def _visits_to_root(pos: np.ndarray, root_arr: np.ndarray) -> np.ndarray:
    # visits at cyclic times 0..k-1 (row k duplicates row 0)
    return (pos[:, :-1, :] == root_arr).all(axis=2).sum(axis=1)


class OriginClusterSampler:
    """Reusable sampler: one grow() call per replica stream."""

    def __init__(self, alpha: float, table: LengthTable,
                 diam_filter: float | None = None):
        self.alpha = alpha
        self.table = table
        self.d = table.d
        # Poisson intensity of visit-weighted candidates per length class;
        # a diameter filter is applied per loop after sampling (exact
        # Poisson restriction), never per length class
        lam = alpha * table.p[1:]
        self.diam_filter = diam_filter
        self.lam = lam
        self.lam_total = float(lam.sum())
        self._probs = lam / self.lam_total if self.lam_total > 0 else None

    def _loops_through(self, v: Point, rng: np.random.Generator,
                       n_cand: int | None = None) -> list[Loop]:
        """Loops of the soup through v (visit-weighted, 1/J-thinned)."""
        if self._probs is None:
            return []
        if n_cand is None:
            n_cand = int(rng.poisson(self.lam_total))
        if n_cand == 0:
            return []
        classes = rng.choice(len(self.lam), size=n_cand, p=self._probs)
        root_arr = np.asarray(v, dtype=np.int64)
        out = []
        for s in np.unique(classes):
            k = 2 * (int(s) + 1)
            rows = int((classes == s).sum())
            pos = self.table.sample_bridges(k, rows, rng, root=v)
            j = _visits_to_root(pos, root_arr)
            keep = rng.random(rows) * j < 1.0
            for i in np.flatnonzero(keep):
                out.append(Loop(root=v, length=k, trace=pos[i]))
        if self.diam_filter is not None:
            out = [lp for lp in out if lp.diameter() <= self.diam_filter]
        return out

    def grow(self, rng: np.random.Generator, *,
             stop_boundary_n: int | None = None,
             max_radius: int | None = None,
             first_counts: int | None = None) -> ClusterSample:
        d = self.d
        org: Point = (0,) * d
        cluster: set[Point] = {org}
        processed: set[Point] = set()
        queue: deque[Point] = deque([org])
        loops: list[Loop] = []
        truncated = False
        boundary_hit = False if stop_boundary_n is not None else None
        stop_box = Box(org, stop_boundary_n) if stop_boundary_n is not None else None
        r2cap = max_radius * max_radius if max_radius is not None else None

        first = True
        while queue:
            v = queue.popleft()
            if v in processed:
                continue
            cand = self._loops_through(
                v, rng, n_cand=first_counts if first else None)
            first = False
            processed.add(v)
            for lp in cand:
                verts = lp.vertices()
                if (verts & processed) - {v}:
                    continue  # counted at an earlier vertex
                loops.append(lp)
                new = verts - cluster
                cluster |= new
                if stop_box is not None:
                    if any(stop_box.on_boundary(u) for u in verts):
                        return ClusterSample(cluster, loops, truncated, True)
                if r2cap is not None and any(
                        sum(c * c for c in u) > r2cap for u in new):
                    truncated = True
                    new = {u for u in new if sum(c * c for c in u) <= r2cap}
                queue.extend(sorted(new))
        return ClusterSample(cluster, loops, truncated, boundary_hit)


def grow_origin_cluster(alpha: float, table: LengthTable, rng, **kw) -> ClusterSample:
    return OriginClusterSampler(alpha, table).grow(rng, **kw)


def replicate_clusters(sampler: OriginClusterSampler, seed: int,
                       replicas: int, worker, threads: int = 1,
                       domain: str = "grow", **grow_kw) -> list:
    """Run worker(ClusterSample) over independent replicas.

    Replica r draws from stream (seed, domain, r); stage-0 candidate
    totals for each fixed-size chunk come from one vectorized draw, so
    the result list is identical for any thread count.
    """
    chunks = [(c, min(_CHUNK, replicas - c)) for c in range(0, replicas, _CHUNK)]

    def run_chunk(arg):
        start, size = arg
        totals = stream(seed, domain, "totals", start).poisson(
            sampler.lam_total, size=size)
        empty_hit = False if grow_kw.get("stop_boundary_n") is not None else None
        out = []
        for i in range(size):
            n0 = int(totals[i])
            if n0 == 0:
                out.append(worker(ClusterSample(
                    {(0,) * sampler.d}, [], False, empty_hit)))
                continue
            rng = stream(seed, domain, start + i)
            out.append(worker(sampler.grow(rng, first_counts=n0, **grow_kw)))
        return out

    if threads <= 1:
        parts = [run_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run_chunk, chunks))
    return [x for part in parts for x in part]
