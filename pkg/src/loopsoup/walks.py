"""Vectorized simple-random-walk engines.

All engines advance a shrinking batch of walkers with one RNG draw block
per step, so a fixed (generator, batch) pair always produces the same
trajectories.  Squared norms are tracked incrementally in int64.
Finished walkers are masked out immediately but only compacted away once
they are a sizable fraction of the batch, which keeps per-step numpy
overhead low.
"""

from __future__ import annotations

import numpy as np

from .lattice import pack_points

_COMPACT_AT = 0.7


def advance(pos: np.ndarray, n2: np.ndarray, rng: np.random.Generator) -> None:
    """One SRW step for every row of pos (modified in place)."""
    m, d = pos.shape
    axes = rng.integers(0, d, m)
    signs = rng.integers(0, 2, m).astype(np.int64) * 2 - 1
    rows = np.arange(m)
    old = pos[rows, axes]
    pos[rows, axes] = old + signs
    n2 += 2 * signs * old + 1


def walk_to_sphere_boundary(d: int, n: int, count: int,
                            rng: np.random.Generator,
                            start=None) -> np.ndarray:
    """First visit points on the ball boundary for walkers started inside.

    The boundary of B_n separates inside from out, so the hit is a.s.
    finite; walkers never leave B_n before stopping.
    """
    r2 = n * n
    if start is None:
        pos = np.zeros((count, d), dtype=np.int64)
    else:
        pos = np.tile(np.asarray(start, dtype=np.int64), (count, 1))
    n2 = (pos * pos).sum(axis=1)
    if (n2 > r2).any():
        raise ValueError("walkers must start inside the ball")
    out = np.empty((count, d), dtype=np.int64)
    idx = np.arange(count)
    alive = np.ones(count, dtype=bool)
    done = (n2 <= r2) & (n2 + 2 * np.abs(pos).max(axis=1) + 1 > r2)
    while True:
        new = alive & done
        if new.any():
            out[idx[new]] = pos[new]
            alive &= ~done
            n_alive = int(alive.sum())
            if n_alive == 0:
                return out
            if n_alive < _COMPACT_AT * alive.size:
                idx, pos, n2 = idx[alive], pos[alive], n2[alive]
                alive = np.ones(n_alive, dtype=bool)
        advance(pos, n2, rng)
        done = (n2 <= r2) & (n2 + 2 * np.abs(pos).max(axis=1) + 1 > r2)


def walk_hit_or_kill(start, targets, kill_radius: int, count: int,
                     rng: np.random.Generator):
    """Walk until hitting one of `targets` or leaving the kill ball.

    Returns (hit, final) where hit[i] is True when walker i reached a
    target, and final[i] is the hit point or the first point outside the
    kill radius.  The walk starts stepping immediately, so a start point
    inside `targets` is not counted as a hit at time zero.
    """
    targets = np.asarray(sorted(tuple(int(c) for c in t) for t in targets),
                         dtype=np.int64)
    d = targets.shape[1]
    # masked-out walkers may drift past the kill radius before compaction
    bound = 4 * (kill_radius + 2)
    tkeys = np.sort(pack_points(targets, bound))
    kill_r2 = kill_radius * kill_radius

    start = np.asarray(start, dtype=np.int64)
    if start.ndim == 1:
        pos = np.tile(start, (count, 1))
    else:
        if start.shape != (count, d):
            raise ValueError("start array must have shape (count, d)")
        pos = start.copy()
    n2 = (pos * pos).sum(axis=1)
    hit = np.zeros(count, dtype=bool)
    final = np.empty((count, d), dtype=np.int64)
    idx = np.arange(count)
    alive = np.ones(count, dtype=bool)
    while True:
        advance(pos, n2, rng)
        keys = pack_points(np.clip(pos, -bound, bound), bound)
        j = np.searchsorted(tkeys, keys)
        j[j == len(tkeys)] = 0
        on_target = tkeys[j] == keys
        done = (on_target | (n2 > kill_r2)) & alive
        if done.any():
            sel = idx[done]
            hit[sel] = on_target[done]
            final[sel] = pos[done]
            alive &= ~done
            n_alive = int(alive.sum())
            if n_alive == 0:
                return hit, final
            if n_alive < _COMPACT_AT * alive.size:
                idx, pos, n2 = idx[alive], pos[alive], n2[alive]
                alive = np.ones(n_alive, dtype=bool)
