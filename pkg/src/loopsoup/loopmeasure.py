"""The rooted loop measure: length tables, exact bridge sampling, and
Monte Carlo estimators of connection masses.

A closed nearest-neighbor path of length n rooted at x carries weight
(1/n) (2d)^{-n}.  Summing over roots and lengths gives the measure whose
Poisson soup is sampled in soup.py.  Everything here rests on the
coordinate decomposition of closed-path counts:

    #closed k-paths = k! * sum over even (n_1..n_d), sum n_j = k, of
                      prod_j 1/((n_j/2)!)^2

The per-coordinate weights a(n) = 1/((n/2)!)^2 span thousands of orders
of magnitude, so all convolutions run in log space; an exact big-integer
pass at small k validates the tables at build time.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from . import greens
from .lattice import Box, Point, ball_boundary, diameter, sub
from .results import Estimate
from .walks import walk_hit_or_kill, walk_to_sphere_boundary


@dataclass
class Loop:
    """A rooted closed nearest-neighbor path.

    trace holds absolute coordinates, shape (length+1, d), with
    trace[0] == trace[-1] == root.
    """

    root: Point
    length: int
    trace: np.ndarray

    def __post_init__(self):
        self.trace = np.asarray(self.trace, dtype=np.int64)

    @property
    def d(self) -> int:
        return self.trace.shape[1]

    def vertices(self) -> set[Point]:
        return {tuple(int(c) for c in row) for row in self.trace[:-1]}

    def edges(self) -> frozenset:
        # traces are unit-step by construction; skip revalidation
        pts = [tuple(int(c) for c in row) for row in self.trace]
        out = set()
        for a, b in zip(pts[:-1], pts[1:]):
            out.add((a, b) if a <= b else (b, a))
        return frozenset(out)

    def diameter(self) -> float:
        return diameter({tuple(int(c) for c in row) for row in self.trace})

    def to_json(self) -> dict:
        return {"root": list(self.root), "length": self.length,
                "trace": self.trace.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Loop":
        return cls(root=tuple(obj["root"]), length=int(obj["length"]),
                   trace=np.asarray(obj["trace"], dtype=np.int64))


def exact_closed_path_count(d: int, k: int) -> int:
    """Number of closed k-step paths in Z^d, exact integer arithmetic."""
    if k % 2:
        return 0
    s = k // 2
    total = 0
    # multisets of per-coordinate half-counts, expanded over placements
    for half in _compositions(s, d):
        ways = math.factorial(k)
        for m in half:
            ways //= math.factorial(m) ** 2
        total += ways
    return total


def _compositions(s: int, d: int):
    if d == 1:
        yield (s,)
        return
    for first in range(s + 1):
        for rest in _compositions(s - first, d - 1):
            yield (first,) + rest


class LengthTable:
    """Return probabilities p_k(0,0), sampling weights, and the partial
    coordinate-convolution tables used for exact bridge sampling."""

    def __init__(self, d: int, L_max: int, tolerance: float = 1e-6,
                 validate: bool = True):
        if d < 1:
            raise ValueError("d must be >= 1")
        if L_max % 2 or L_max < 2:
            raise ValueError("L_max must be an even integer >= 2")
        self.d = d
        self.L_max = L_max
        s_max = L_max // 2

        # log a(2m) = -2 log(m!)
        m = np.arange(s_max + 1)
        self.log_a = -2.0 * gammaln(m + 1.0)

        # log_conv[c][s] = log sum over (m_1..m_c), sum = s, of prod a(2 m_j)
        self.log_conv = np.full((d + 1, s_max + 1), -np.inf)
        self.log_conv[0, 0] = 0.0
        self.log_conv[1] = self.log_a
        for c in range(2, d + 1):
            prev = self.log_conv[c - 1]
            cur = np.empty(s_max + 1)
            for s in range(s_max + 1):
                cur[s] = logsumexp(self.log_a[: s + 1] + prev[s::-1])
            self.log_conv[c] = cur

        k = 2 * m
        self.log_p = gammaln(k + 1.0) + self.log_conv[d] - k * math.log(2 * d)
        self.p = np.exp(self.log_p)        # p[s] = p_{2s}(0,0); p[0] = 1
        with np.errstate(divide="ignore"):
            self.w = np.where(k > 0, self.p / np.maximum(k, 1), 0.0)
        self.m_d = float(self.w[1:].sum())

        # tail of sum_{k > L} p_k / k, from p_k <= c k^{-d/2} fitted at L
        c_fit = self.p[-1] * L_max ** (d / 2.0)
        self.tail_bound = float(c_fit * L_max ** (-d / 2.0) / d)
        if self.tail_bound > tolerance:
            target = (c_fit / (d * tolerance)) ** (2.0 / d)
            suggested = 2 * math.ceil(target / 2)
            warnings.warn(
                f"length-law tail bound {self.tail_bound:.3e} exceeds "
                f"tolerance {tolerance:.1e}; suggest L_max >= {suggested}")

        self._w_cum = np.cumsum(self.w[1:]) / self.m_d
        self._count_cums: dict[tuple[int, int], np.ndarray] = {}

        if validate:
            self._validate_small_k()
        if not (np.diff(self.p[1:]) <= 1e-15).all():
            raise greens.NumericalError("p_k not decreasing; table corrupt")

    def _validate_small_k(self):
        for s in range(1, min(6, self.L_max // 2) + 1):
            k = 2 * s
            exact = exact_closed_path_count(self.d, k)
            got = math.exp(self.log_p[s] + k * math.log(2 * self.d))
            if abs(got - exact) > 1e-9 * exact:
                raise greens.NumericalError(
                    f"path count mismatch at k={k}: {got} vs exact {exact}")

    # -- length sampling ---------------------------------------------------

    def sample_length(self, rng: np.random.Generator, size=None):
        """Even length(s) drawn with probability w_k / m_d, k <= L_max."""
        u = rng.random(size)
        s = np.searchsorted(self._w_cum, u, side="right") + 1
        return (2 * s) if size is not None else int(2 * s)

    # -- bridge sampling ---------------------------------------------------

    def _count_cum(self, coords_left: int, s: int) -> np.ndarray:
        """Cumulative law of the first half-count m given `coords_left`
        remaining coordinates after this one and s half-steps to place."""
        key = (coords_left, s)
        cum = self._count_cums.get(key)
        if cum is None:
            lw = self.log_a[: s + 1] + self.log_conv[coords_left][s::-1]
            w = np.exp(lw - lw.max())
            cum = np.cumsum(w)
            cum /= cum[-1]
            self._count_cums[key] = cum
        return cum

    def sample_bridge_single(self, k: int, rng: np.random.Generator,
                             root: Point) -> np.ndarray:
        """One closed k-path; same law as sample_bridges, cheaper for the
        short loops that dominate a soup."""
        if k % 2 or k < 2 or k > self.L_max:
            raise ValueError(f"k must be even in [2, {self.L_max}], got {k}")
        d = self.d
        if k == 2:
            sym = int(rng.integers(0, 2 * d))
            mid = list(root)
            mid[sym >> 1] += 1 - 2 * (sym & 1)
            return np.array([root, tuple(mid), root], dtype=np.int64)
        rem = k // 2
        syms = []
        for j in range(d - 1):
            cum = self._count_cum(d - 1 - j, rem)
            m = min(int(np.searchsorted(cum, rng.random(), side="right")), rem)
            syms += [2 * j] * m + [2 * j + 1] * m
            rem -= m
        syms += [2 * (d - 1)] * rem + [2 * d - 1] * rem
        order = rng.permutation(k)
        trace = np.empty((k + 1, d), dtype=np.int64)
        trace[0] = root
        cur = list(root)
        for t, i in enumerate(order):
            s = syms[i]
            cur[s >> 1] += 1 - 2 * (s & 1)
            trace[t + 1] = cur
        return trace

    def sample_bridges(self, k: int, count: int, rng: np.random.Generator,
                       root: Point | None = None) -> np.ndarray:
        """Exact uniform samples of closed k-step paths, batched.

        Returns positions of shape (count, k+1, d).  Sampling draws the
        per-coordinate step counts from the partial convolutions, then a
        uniformly random arrangement of the resulting signed-step multiset
        (one argsort), which is uniform over all closed k-paths with
        those counts.
        """
        if k % 2 or k < 2 or k > self.L_max:
            raise ValueError(f"k must be even in [2, {self.L_max}], got {k}")
        d, s = self.d, k // 2
        half = np.empty((count, d), dtype=np.int64)
        rem = np.full(count, s, dtype=np.int64)
        for j in range(d - 1):
            left = d - 1 - j
            u = rng.random(count)
            mj = np.empty(count, dtype=np.int64)
            for val in np.unique(rem):
                mask = rem == val
                cum = self._count_cum(left, int(val))
                mj[mask] = np.searchsorted(cum, u[mask], side="right")
            np.minimum(mj, rem, out=mj)
            half[:, j] = mj
            rem -= mj
        half[:, d - 1] = rem

        # signed-step symbols: 2j = +e_j, 2j+1 = -e_j, each used m_j times
        sym_counts = np.repeat(half, 2, axis=1)        # (count, 2d)
        symbols = np.tile(np.arange(2 * d, dtype=np.int8), count)
        steps = np.repeat(symbols, sym_counts.ravel()).reshape(count, k)
        order = np.argsort(rng.random((count, k)), axis=1)
        steps = np.take_along_axis(steps, order, axis=1)

        axes = steps >> 1
        signs = (1 - 2 * (steps & 1)).astype(np.int64)
        pos = np.zeros((count, k + 1, d), dtype=np.int64)
        for a in range(d):
            pos[:, 1:, a] = np.cumsum(np.where(axes == a, signs, 0), axis=1)
        if root is not None:
            pos += np.asarray(root, dtype=np.int64)
        return pos

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {"schema": "loopsoup-table/v1", "d": self.d,
                "L_max": self.L_max, "p": self.p.tolist(),
                "m_d": self.m_d, "tail_bound": self.tail_bound}

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "LengthTable":
        with open(path) as fh:
            obj = json.load(fh)
        if obj.get("schema") != "loopsoup-table/v1":
            raise ValueError(f"unsupported table schema: {obj.get('schema')!r}")
        table = cls(int(obj["d"]), int(obj["L_max"]), validate=False,
                    tolerance=math.inf)
        if not np.allclose(table.p, np.asarray(obj["p"]), rtol=1e-12, atol=0):
            raise greens.NumericalError("stored p_k disagree with rebuild")
        return table


def build_length_table(d: int, L_max: int, tolerance: float = 1e-6) -> LengthTable:
    return LengthTable(d, L_max, tolerance=tolerance)


def per_vertex_mass(table: LengthTable) -> tuple[float, float]:
    """Per-vertex loop mass m_d = sum_k w_k and its truncation tail bound.

    The Poisson soup places intensity alpha * m_d loops at each root.
    """
    return table.m_d, table.tail_bound


def sample_length(table: LengthTable, rng: np.random.Generator) -> int:
    return table.sample_length(rng)


def sample_bridge(root: Point, k: int, table: LengthTable,
                  rng: np.random.Generator) -> Loop:
    """One exact sample from the uniform closed k-path law rooted at root."""
    pos = table.sample_bridges(k, 1, rng, root=root)
    return Loop(root=tuple(int(c) for c in root), length=k, trace=pos[0])


# -- connection-mass estimators (Rao-Blackwellized walk Monte Carlo) --------

def _as_point_set(obj) -> tuple[Point, ...]:
    return tuple(sorted({tuple(int(c) for c in p) for p in obj}))


def _neglected_terms_factor(rho: float, sigma: float = 1.0) -> float:
    """sum_{m>=2} (sigma*rho)^(m-1) / m, the geometric bound on the
    relative weight of multi-round crossings against the first term."""
    q = sigma * rho
    if q >= 1.0:
        return float("inf")
    if q <= 0.0:
        return 0.0
    return (-math.log1p(-q) - q) / q


def _max_hit_from_sphere(cap_res, n: int, d: int, table) -> float:
    """max over y on the boundary of B_n of P_y(walk hits K).

    Evaluated on the boundary points of smallest norm (the maximizer up
    to lattice anisotropy; a whole-shell scan when enumeration is cheap).
    """
    if (2 * n + 1) ** d <= 2 * 10 ** 7:
        pts = ball_boundary(Box((0,) * d, n))
        n2min = min(sum(c * c for c in p) for p in pts)
        cand = [p for p in pts if sum(c * c for c in p) <= n2min + 4]
    else:
        cand = [(n - 1,) + (1,) * (d - 1), (n,) + (0,) * (d - 1)]
    return max(greens.hitting_probability(y, cap_res, table) for y in cand)


def loop_mass_connect(K, target, d: int | None = None, *,
                      kill_radius: int | None = None,
                      samples: int = 10 ** 5, seed: int = 0,
                      chunk: int = 1 << 16) -> Estimate:
    """Monte Carlo estimate of the first crossing term of the connection
    mass between K and a target set (a Box means its ball boundary).

    For each x in K the walk runs to the target, then back until it
    first re-enters K; leaving the kill radius at y is scored with the
    exact remaining hitting probability when K (and a point target) are
    singletons, and with a [0, P_y(hit K)] bracket otherwise.  The
    diagnostics carry the analytic geometric bound on the neglected
    multi-round terms.
    """
    from .rng import stream

    t0 = time.time()
    K = _as_point_set(K)
    if d is None:
        d = len(K[0])
    table = greens.default_table(d)
    g0 = table.green((0,) * d)

    sphere_n = None
    if isinstance(target, Box):
        if any(c != 0 for c in target.center):
            raise ValueError("sphere targets must be centered at the origin")
        sphere_n = target.radius
        tpts = None
    else:
        tpts = _as_point_set(target)
        if set(tpts) & set(K):
            raise ValueError("K and target must be disjoint")
    if sphere_n is not None:
        if any(sum(c * c for c in x) > sphere_n ** 2 for x in K):
            raise ValueError("K must lie inside the target ball")

    scale = sphere_n if sphere_n is not None else int(
        math.ceil(max(math.dist(x, t) for x in K for t in tpts)))
    if kill_radius is None:
        kill_radius = 4 * scale
    if kill_radius <= scale:
        raise ValueError("kill radius must exceed the largest query scale")

    cap_K = greens.capacity(K, d, table)
    singleton_K = len(K) == 1
    singleton_T = tpts is not None and len(tpts) == 1
    cap_T = greens.capacity(tpts, d, table) if tpts is not None else None

    per_x = max(1, samples // len(K))
    total_val = total_var = 0.0
    lo_sum = hi_sum = 0.0
    kill_events = 0
    n_used = 0
    cid = 0
    for x in K:
        vals_sum = vals_sq = 0.0
        m_done = 0
        while m_done < per_x:
            m = min(chunk, per_x - m_done)
            rng = stream(seed, "loop-mass", cid)
            cid += 1
            scores = np.zeros(m)
            lo = np.zeros(m)
            hi = np.zeros(m)

            if sphere_n is not None:
                mid = walk_to_sphere_boundary(d, sphere_n, m, rng, start=x)
                alive = np.ones(m, dtype=bool)
            else:
                hitT, mid = walk_hit_or_kill(x, tpts, kill_radius, m, rng)
                esc = ~hitT
                if esc.any():
                    if singleton_T and singleton_K:
                        z = tpts[0]
                        gy = np.array([table.green(tuple(v)) for v in
                                       (mid[esc] - np.asarray(z))])
                        w = (gy / g0) * (table.green(sub(z, x)) / g0)
                        scores[esc] = w
                        lo[esc] = hi[esc] = w
                    else:
                        p_hit_T = np.array([
                            greens.hitting_probability(tuple(v), cap_T, table)
                            for v in mid[esc]])
                        hi[esc] = p_hit_T
                        kill_events += int(esc.sum())
                alive = hitT

            if alive.any():
                hitK, back = walk_hit_or_kill(
                    mid[alive], K, kill_radius, int(alive.sum()), rng)
                ai = np.flatnonzero(alive)
                re_at_x = hitK & (back == np.asarray(x)).all(axis=1)
                scores[ai[re_at_x]] = 1.0
                lo[ai[re_at_x]] = hi[ai[re_at_x]] = 1.0
                escK = ~hitK
                if escK.any():
                    if singleton_K:
                        gy = np.array([table.green(tuple(v)) for v in
                                       (back[escK] - np.asarray(x))])
                        w = gy / g0
                        scores[ai[escK]] = w
                        lo[ai[escK]] = hi[ai[escK]] = w
                    else:
                        p_hit_K = np.array([
                            greens.hitting_probability(tuple(v), cap_K, table)
                            for v in back[escK]])
                        hi[ai[escK]] = p_hit_K
                        kill_events += int(escK.sum())

            vals_sum += scores.sum()
            vals_sq += (scores ** 2).sum()
            lo_sum += lo.sum()
            hi_sum += hi.sum()
            m_done += m
        mean = vals_sum / per_x
        var = max(vals_sq / per_x - mean * mean, 0.0) / per_x
        total_val += mean
        total_var += var
        n_used += per_x

    if sphere_n is not None:
        rho = _max_hit_from_sphere(cap_K, sphere_n, d, table)
        sigma = 1.0
    else:
        rho = max(greens.hitting_probability(y, cap_K, table) for y in tpts)
        sigma = max(greens.hitting_probability(x, cap_T, table) for x in K)
    n2_bound = total_val * _neglected_terms_factor(rho, sigma)

    exact = singleton_K and (sphere_n is not None or singleton_T)
    return Estimate(
        value=total_val, std_error=math.sqrt(total_var), samples=n_used,
        seed=seed,
        diagnostics={
            "n2_bound": n2_bound, "rho": rho, "sigma": sigma,
            "kill_radius": kill_radius,
            "bracket_low": lo_sum / per_x if exact else len(K) * lo_sum / n_used,
            "bracket_high": hi_sum / per_x if exact else len(K) * hi_sum / n_used,
            "exact_rao_blackwell": exact,
            "kill_rate": kill_events / max(n_used, 1),
        },
        wall_time_s=time.time() - t0)


# -- loop range statistics ---------------------------------------------------

def _pack_rows(pos: np.ndarray) -> np.ndarray:
    """Pack the coordinate vectors of a trace batch into int64 keys."""
    count, t, d = pos.shape
    bound = int(np.abs(pos).max()) + 1
    if (2 * bound + 1) ** d >= 2 ** 62:
        raise ValueError("trace coordinates too large to pack")
    keys = np.zeros((count, t), dtype=np.int64)
    for j in range(d):
        keys = keys * (2 * bound + 1) + (pos[:, :, j] + bound)
    return keys


def _range_and_diam_exceeds(pos: np.ndarray, m: float):
    """Per-loop range sizes and indicators of diameter > m.

    Diameter is bracketed below by axis and diagonal projections and
    above by the extent diagonal; only still-ambiguous loops pay an
    exact pairwise scan over their distinct vertices.
    """
    count, _, d = pos.shape
    ext = (pos.max(axis=1) - pos.min(axis=1)).astype(float)
    lo2 = (ext ** 2).max(axis=1)
    hi2 = (ext ** 2).sum(axis=1)
    m2 = m * m
    ambig = np.flatnonzero((lo2 <= m2) & (hi2 > m2))
    if ambig.size:
        # diagonal projections sharpen the lower bound; the centroid ball
        # gives r_max <= diam <= 2 r_max (the centroid forces an obtuse
        # pair, so the farthest point has a partner at squared distance
        # at least r_max^2)
        signs = np.array([[1 if (s >> j) & 1 else -1 for j in range(d)]
                          for s in range(2 ** (d - 1))], dtype=np.int64)
        proj = pos[ambig] @ signs.T
        pext = (proj.max(axis=1) - proj.min(axis=1)).astype(float)
        sub = pos[ambig, :-1, :].astype(float)
        dev = sub - sub.mean(axis=1, keepdims=True)
        r2 = (dev ** 2).sum(axis=2).max(axis=1)
        lo2[ambig] = np.maximum.reduce([lo2[ambig],
                                        (pext ** 2).max(axis=1) / d, r2])
        hi2[ambig] = np.minimum(hi2[ambig], 4.0 * r2)
    exceeds = lo2 > m2
    for i in np.flatnonzero((lo2 <= m2) & (hi2 > m2)):
        v = np.unique(pos[i, :-1], axis=0).astype(float)
        n2 = (v * v).sum(axis=1)
        d2max = (n2[:, None] + n2[None, :] - 2.0 * (v @ v.T)).max()
        exceeds[i] = d2max > m2 + 1e-9
    keys = np.sort(_pack_rows(pos[:, :-1, :]), axis=1)
    sizes = 1 + (keys[:, 1:] != keys[:, :-1]).sum(axis=1)
    return sizes, exceeds


def loop_range_stats(d: int, m: int, samples: int, seed: int = 0, *,
                     L_max: int | None = None,
                     table: LengthTable | None = None,
                     min_accepted: int = 100) -> Estimate:
    """Mean range size of loops rooted at the origin whose diameter
    exceeds m, by importance sampling over the truncated length law.

    Lengths are proposed from the length law tilted by the diffusive
    reach factor exp(-d m^2 / (2k)) (a diameter > m needs k of order
    m^2); the self-normalized ratio removes the tilt exactly.
    """
    from .rng import stream

    t0 = time.time()
    if m < 0:
        raise ValueError("m must be >= 0")
    if table is None:
        if L_max is None:
            L_max = max(512, 8 * m * m)
        table = LengthTable(d, L_max, validate=False, tolerance=math.inf)
    L = table.L_max
    k_min = 2 * m + 2 if m > 0 else 2
    if k_min > L:
        raise ValueError("L_max too small for this diameter threshold")

    s_all = np.arange(1, L // 2 + 1)
    k_all = 2 * s_all
    w = table.w[1:].copy()
    keep = k_all >= k_min
    tilt = np.exp(-d * m * m / (2.0 * k_all)) * keep
    prop = w * tilt
    prop_sum = prop.sum()
    prop /= prop_sum
    cum = np.cumsum(prop)

    rng = stream(seed, "range-stats")
    ks = 2 * (np.searchsorted(cum, rng.random(samples), side="right") + 1)
    num = den = num2 = den2 = cross = 0.0
    accepted = 0
    for k in np.unique(ks):
        rows = int((ks == k).sum())
        pos = table.sample_bridges(int(k), rows, rng)
        sizes, exceeds = _range_and_diam_exceeds(pos, float(m))
        wt = 1.0 / tilt[(k - 2) // 2]     # w_k / proposal, common factor dropped
        f = wt * sizes * exceeds
        g = wt * exceeds
        num += f.sum(); den += g.sum()
        num2 += (f ** 2).sum(); den2 += (g ** 2).sum(); cross += (f * g).sum()
        accepted += int(exceeds.sum())
    if accepted < min_accepted:
        raise RuntimeError(
            f"only {accepted} loops exceeded diameter {m}; increase the "
            f"sample budget (got {samples})")
    mean = num / den
    # delta-method variance of the ratio estimator
    n = samples
    vf = num2 / n - (num / n) ** 2
    vg = den2 / n - (den / n) ** 2
    cfg = cross / n - (num / n) * (den / n)
    var = (vf - 2 * mean * cfg + mean * mean * vg) / n / (den / n) ** 2
    return Estimate(
        value=float(mean), std_error=math.sqrt(max(var, 0.0)), samples=samples,
        seed=seed,
        diagnostics={"accepted": accepted, "ratio_to_m2": mean / (m * m) if m else float("nan"),
                     "tail_bound": table.tail_bound, "k_min": int(k_min), "L_max": L},
        wall_time_s=time.time() - t0)
