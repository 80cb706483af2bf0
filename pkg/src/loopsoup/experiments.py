"""Monte Carlo campaigns tying the samplers to the first-order theory.

Every scan recomputes its reference column from the potential-theory and
loop-measure modules at run time; nothing is hard-coded.  Scans over the
origin cluster use the lazy cluster sampler, whose per-sample cost is
proportional to the cluster, so millions of replicas are affordable.
"""

from __future__ import annotations

import json
import math
import subprocess
import time

import numpy as np
from scipy.stats import beta as beta_dist

from . import greens, __version__
from .lattice import Box, Point, ball_points_cached, diameter
from .loopmeasure import LengthTable, loop_mass_connect
from .percolation import one_arm, two_point
from .results import Estimate, ScanPoint, ScanResult
from .rng import stream
from .soup import OriginClusterSampler, SoupParams, replicate_clusters, sample_soup


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return f"loopsoup-{__version__}"


def clopper_pearson(k: int, n: int, conf: float = 0.95) -> tuple[float, float]:
    a = 1.0 - conf
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def _scan_length_table(d: int, n: int, L_max: int | None) -> LengthTable:
    """Length truncation for window-scale n.

    The mass connecting the origin to distance n is carried by loops of
    length of order n^2, so the soup truncation must scale with n^2; the
    residual weight is reported through tail diagnostics.
    """
    if L_max is None:
        L_max = max(16, 6 * n * n)
    L_max += L_max % 2
    return LengthTable(d, L_max, validate=False, tolerance=math.inf)


# -- expected cluster capacity ------------------------------------------------

def expected_cluster_capacity(alpha: float, d: int, *, samples: int,
                              seed: int, L_max: int = 1000,
                              max_radius: int = 60, threads: int = 1,
                              touch_tol: float = 0.01) -> Estimate:
    """Mean capacity of the origin cluster's vertex set (with the origin).

    Growth is capped at max_radius; capped samples are the analogue of
    window-boundary touches and must stay under touch_tol.
    """
    t0 = time.time()
    table = LengthTable(d, L_max, validate=False, tolerance=math.inf)
    sampler = OriginClusterSampler(alpha, table)
    gtab = greens.default_table(d)
    cap0 = 1.0 / gtab.green((0,) * d)

    def worker(cl):
        if cl.size == 1:
            return cap0, cl.truncated
        return greens.capacity(cl.vertices, d, gtab).cap, cl.truncated

    rows = replicate_clusters(sampler, seed, samples, worker,
                              threads=threads, domain="capacity",
                              max_radius=max_radius)
    caps = np.array([c for c, _ in rows])
    touched = np.array([t for _, t in rows])
    touch_rate = float(touched.mean())
    if touch_rate >= touch_tol:
        raise RuntimeError(
            f"boundary-touch rate {touch_rate:.3%} >= {touch_tol:.0%}; "
            f"increase max_radius or decrease alpha")
    value = float(caps.mean())
    bias_high = value + touch_rate * float(caps.max() - caps.min())
    return Estimate(
        value=value, std_error=float(caps.std(ddof=1) / math.sqrt(samples)),
        samples=samples, seed=seed,
        diagnostics={"boundary_touch_rate": touch_rate,
                     "tail_bound": table.tail_bound,
                     "cap_origin": cap0,
                     "bias_bracket": (value, bias_high)},
        wall_time_s=time.time() - t0)


# -- one-arm / two-point scans ------------------------------------------------

def _single_long_loop_localized(cl, n: int, K: int) -> bool:
    """Whether removing one loop leaves the rest of the origin cluster in
    B_K while that loop alone carries the connection to the boundary."""
    box_k = Box((0,) * len(next(iter(cl.vertices))), K)
    box_n = Box(box_k.center, n)
    loops = cl.loops
    for skip in range(len(loops)):
        lp = loops[skip]
        if not any(box_n.on_boundary(v) for v in lp.vertices()):
            continue
        # regrow the origin component from the remaining loops
        rest = [o.vertices() for j, o in enumerate(loops) if j != skip]
        comp = {box_k.center}
        changed = True
        while changed:
            changed = False
            for vs in rest:
                if vs & comp and not vs <= comp:
                    comp |= vs
                    changed = True
        if not all(box_k.contains(v) for v in comp):
            continue
        if lp.vertices() & comp or box_k.center in lp.vertices():
            return True
    return False


def one_arm_scan(alpha: float, d: int, n_list, *, samples: int, seed: int,
                 L_max: int | None = None, threads: int = 1,
                 ref_samples: int | None = None,
                 localization_k: int | None = None) -> ScanResult:
    """P(origin connects to the boundary of B_n) over a grid of n.

    Reference column: alpha * C_d * E[Cap(C_0 u {0})] / n^(d-2), with the
    capacity expectation estimated on a side budget.
    """
    t0 = time.time()
    cd = greens.green_constant(d)
    ecap = expected_cluster_capacity(
        alpha, d, samples=ref_samples or max(200, samples // 10),
        seed=seed + 1, threads=threads)
    points = []
    for n in n_list:
        table = _scan_length_table(d, n, L_max)
        sampler = OriginClusterSampler(alpha, table)
        k_loc = localization_k if localization_k is not None else max(2, n // 2)

        def worker(cl, n=n, k_loc=k_loc):
            hit = bool(cl.boundary_hit)
            loc = _single_long_loop_localized(cl, n, k_loc) if hit else False
            return hit, loc

        t1 = time.time()
        rows = replicate_clusters(sampler, seed, samples, worker,
                                  threads=threads, domain=f"one-arm-{n}",
                                  stop_boundary_n=n)
        hits = sum(h for h, _ in rows)
        locs = sum(l for _, l in rows)
        p_hat = hits / samples
        se = math.sqrt(p_hat * (1 - p_hat) / samples)
        lo, hi = clopper_pearson(hits, samples)
        est = Estimate(
            value=p_hat, std_error=se, samples=samples, seed=seed,
            diagnostics={"successes": hits, "cp95": (lo, hi),
                         "tail_bound": table.tail_bound,
                         "L_max": table.L_max,
                         "boundary_touch_rate": 0.0,
                         "single_loop_localized_freq":
                             locs / hits if hits else float("nan"),
                         "localization_K": k_loc},
            wall_time_s=time.time() - t1)
        points.append(ScanPoint(param=n, estimate=est,
                                reference=alpha * cd * ecap.value / n ** (d - 2)))
    return ScanResult(kind="one-arm", points=points,
                      meta={"alpha": alpha, "d": d, "samples": samples,
                            "seed": seed, "e_cap": ecap.value,
                            "e_cap_se": ecap.std_error, "C_d": cd,
                            "version": version_string(),
                            "wall_time_s": time.time() - t0})


def two_point_scan(alpha: float, d: int, x_list, *, samples: int, seed: int,
                   L_max: int | None = None, threads: int = 1,
                   ref_samples: int | None = None) -> ScanResult:
    """P(origin connects to x) over a grid of points x."""
    t0 = time.time()
    cd = greens.green_constant(d)
    ecap = expected_cluster_capacity(
        alpha, d, samples=ref_samples or max(200, samples // 10),
        seed=seed + 1, threads=threads)
    points = []
    for x in x_list:
        x = tuple(int(c) for c in x)
        r = math.sqrt(sum(c * c for c in x))
        n_eq = int(math.ceil(r))
        table = _scan_length_table(d, n_eq, L_max)
        sampler = OriginClusterSampler(alpha, table)
        cap_r = 4 * n_eq + table.L_max // 2

        def worker(cl, x=x):
            return x in cl.vertices, cl.truncated

        t1 = time.time()
        rows = replicate_clusters(sampler, seed, samples, worker,
                                  threads=threads, domain=f"two-point-{x}",
                                  max_radius=cap_r)
        hits = sum(h for h, _ in rows)
        trunc = sum(t for _, t in rows)
        p_hat = hits / samples
        est = Estimate(
            value=p_hat,
            std_error=math.sqrt(p_hat * (1 - p_hat) / samples),
            samples=samples, seed=seed,
            diagnostics={"successes": hits,
                         "cp95": clopper_pearson(hits, samples),
                         "tail_bound": table.tail_bound,
                         "L_max": table.L_max,
                         "boundary_touch_rate": trunc / samples},
            wall_time_s=time.time() - t1)
        points.append(ScanPoint(
            param=r, estimate=est,
            reference=alpha * cd ** 2 * ecap.value ** 2 / r ** (2 * d - 4)))
    return ScanResult(kind="two-point", points=points,
                      meta={"alpha": alpha, "d": d, "samples": samples,
                            "seed": seed, "e_cap": ecap.value, "C_d": cd,
                            "version": version_string(),
                            "wall_time_s": time.time() - t0})


# -- Poisson identities: Mecke and FKG ---------------------------------------

def verify_mecke(alpha: float, d: int, *, window_radius: int = 2,
                 L_max: int = 8, samples: int = 2000, seed: int = 0,
                 n_sigma: float = 4.0) -> dict:
    """Check E[sum_{w in eta} f(eta - w, w)] = alpha * int E[f(eta, w)] dmu
    on the finite loop space with roots in the window and lengths <= L_max.

    Defaults: f0 = 1, f1 = 1{root=0}, f2 = 1{root=0} * #loops(eta - w).
    The right side is sampled by drawing w from the normalized measure and
    scaling by alpha * M, with M = m_d * |window|.
    """
    t0 = time.time()
    table = LengthTable(d, L_max, validate=False, tolerance=math.inf)
    org: Point = (0,) * d
    window = Box(org, window_radius)
    wpoints = ball_points_cached(d, org, window_radius)
    m = table.m_d
    big_m = m * len(wpoints)

    def lhs_terms(soup):
        n_tot = len(soup.loops)
        at0 = sum(1 for lp in soup.loops if lp.root == org)
        return (n_tot, at0, at0 * (n_tot - 1))

    lhs = np.empty((samples, 3))
    for i in range(samples):
        p = SoupParams(alpha=alpha, d=d, window=window, table=table,
                       seed=stream_seed_for(seed, "mecke-lhs", i),
                       enlarge_roots=False)
        lhs[i] = lhs_terms(sample_soup(p))

    rhs = np.empty((samples, 3))
    rng = stream(seed, "mecke-root")
    roots = rng.integers(0, len(wpoints), size=samples)
    for i in range(samples):
        p = SoupParams(alpha=alpha, d=d, window=window, table=table,
                       seed=stream_seed_for(seed, "mecke-rhs", i),
                       enlarge_roots=False)
        soup = sample_soup(p)
        w_root = wpoints[roots[i]]
        n_tot = len(soup.loops)
        ind0 = 1.0 if w_root == org else 0.0
        rhs[i] = (1.0, ind0, ind0 * n_tot)

    report = {"alpha": alpha, "d": d, "window_radius": window_radius,
              "L_max": L_max, "samples": samples, "M": big_m,
              "rows": [], "passed": True,
              "wall_time_s": None}
    expected = {"f0=1": alpha * big_m, "f1=1{root=0}": alpha * m,
                "f2=1{root=0}*#rest": alpha * m * alpha * big_m}
    for j, name in enumerate(expected):
        l_mean = float(lhs[:, j].mean())
        l_se = float(lhs[:, j].std(ddof=1) / math.sqrt(samples))
        r_vals = alpha * big_m * rhs[:, j]
        r_mean = float(r_vals.mean())
        r_se = float(r_vals.std(ddof=1) / math.sqrt(samples))
        sig = math.hypot(l_se, r_se)
        n_sig = abs(l_mean - r_mean) / sig if sig > 0 else 0.0
        ok = n_sig <= n_sigma
        report["rows"].append({
            "functional": name, "lhs": l_mean, "lhs_se": l_se,
            "rhs": r_mean, "rhs_se": r_se, "n_sigma": n_sig,
            "expected": expected[name], "pass": bool(ok)})
        report["passed"] = report["passed"] and ok
    report["wall_time_s"] = time.time() - t0
    return report


def stream_seed_for(seed: int, domain: str, i: int) -> int:
    """A derived 63-bit seed for a sub-experiment replica."""
    from .rng import stream_key
    return stream_key(seed, domain, i)[0] >> 1


def verify_fkg(alpha: float, d: int, *, samples: int = 4000, seed: int = 0,
               L_max: int = 6, n_sigma: float = 4.0) -> dict:
    """Positive association of increasing events under the soup.

    Pairs: two perpendicular edges at the origin; a one-arm event with a
    two-point event; and two single-edge events further apart than any
    loop can reach, which must be uncorrelated.
    """
    t0 = time.time()
    table = LengthTable(d, L_max, validate=False, tolerance=math.inf)
    org: Point = (0,) * d
    e_x = tuple(1 if j == 0 else 0 for j in range(d))
    e_y = tuple(1 if j == 1 else 0 for j in range(d))
    far = tuple(L_max + 2 if j == 0 else 0 for j in range(d))
    far_x = tuple(L_max + 3 if j == 0 else 0 for j in range(d))
    window = Box(org, L_max + 4)

    edge_a = (org, e_x)
    edge_b = (org, e_y)
    edge_far = (far, far_x)

    ind = np.empty((samples, 6), dtype=bool)
    for i in range(samples):
        p = SoupParams(alpha=alpha, d=d, window=window, table=table,
                       seed=stream_seed_for(seed, "fkg", i))
        soup = sample_soup(p)
        edges = soup.open_edges
        ind[i, 0] = edge_a in edges
        ind[i, 1] = edge_b in edges
        ind[i, 2] = one_arm(soup, 2)
        ind[i, 3] = two_point(soup, e_x)
        ind[i, 4] = edge_a in edges
        ind[i, 5] = edge_far in edges

    pairs = [("edge(0,ex) & edge(0,ey)", 0, 1, "fkg"),
             ("one_arm(2) & two_point(ex)", 2, 3, "fkg"),
             ("distant edges (independent)", 4, 5, "independent")]
    report = {"alpha": alpha, "d": d, "samples": samples, "rows": [],
              "passed": True, "wall_time_s": None}
    for name, ia, ib, mode in pairs:
        a = ind[:, ia].astype(float)
        b = ind[:, ib].astype(float)
        cov = float(np.mean(a * b) - a.mean() * b.mean())
        infl = (a - a.mean()) * (b - b.mean()) - cov
        se = float(np.sqrt(np.mean(infl ** 2) / samples))
        if mode == "fkg":
            ok = cov >= -n_sigma * se
        else:
            ok = abs(cov) <= n_sigma * max(se, 1e-12)
        report["rows"].append({
            "pair": name, "p_a": a.mean(), "p_b": b.mean(),
            "cov": cov, "cov_se": se, "mode": mode, "pass": bool(ok)})
        report["passed"] = report["passed"] and ok
    report["wall_time_s"] = time.time() - t0
    return report


# -- lemma-level scans --------------------------------------------------------

def lemma_scan(kind: str, *, d: int, params: dict, seed: int = 0,
               threads: int = 1) -> ScanResult:
    """Desk-scale checks of the loop-measure lemmas.

    kinds: single_loop (mass of loops joining a small set to a distant
    ball boundary), two_sets (joining two distant sets), far_connect
    (two-point mass through large-diameter loops), short_loops
    (exponential decay of one-arm through bounded-diameter loops).
    """
    t0 = time.time()
    cd = greens.green_constant(d)
    gtab = greens.default_table(d)
    g0 = gtab.green((0,) * d)
    org: Point = (0,) * d
    points = []
    meta = {"kind": kind, "d": d, "seed": seed, "params": dict(params),
            "version": version_string()}

    if kind == "single_loop":
        K = [tuple(p) for p in params.get("K", [org])]
        cap_k = greens.capacity(K, d, gtab).cap
        for i, n in enumerate(params["n_list"]):
            est = loop_mass_connect(K, Box(org, n), d,
                                    kill_radius=params.get("kill_radius", n + 2),
                                    samples=params["samples"],
                                    seed=stream_seed_for(seed, "sl", i))
            points.append(ScanPoint(param=n, estimate=est,
                                    reference=cd * cap_k * n ** (2 - d)))

    elif kind == "two_sets":
        K = [tuple(p) for p in params.get("K", [org])]
        cap_k = greens.capacity(K, d, gtab).cap
        for i, x in enumerate(params["x_list"]):
            x = tuple(int(c) for c in x)
            r = math.dist(org, x)
            cap_l = greens.capacity([x], d, gtab).cap
            est = loop_mass_connect(
                K, [x], d,
                kill_radius=params.get("kill_radius", int(r) + 2),
                samples=params["samples"],
                seed=stream_seed_for(seed, "ts", i))
            if K == [org]:
                est.diagnostics["analytic"] = (gtab.green(x) / g0) ** 2
            points.append(ScanPoint(param=r, estimate=est,
                                    reference=cd ** 2 * cap_k * cap_l * r ** (4 - 2 * d)))

    elif kind == "far_connect":
        x = tuple(int(c) for c in params.get("x", (1,) + (0,) * (d - 1)))
        gx = gtab.green(x) / g0
        for i, m in enumerate(params["m_list"]):
            est = _far_connect_mass(d, x, m, params["samples"],
                                    stream_seed_for(seed, "fc", i))
            scaled = est.value * m ** (d - 2) * math.dist(org, x) ** (d - 2)
            est.diagnostics["scaled"] = scaled
            points.append(ScanPoint(
                param=m, estimate=est,
                reference=cd / g0 * gx * m ** (2 - d)))

    elif kind == "short_loops":
        m = params["m"]
        alpha = params["alpha"]
        table = LengthTable(d, params.get("L_max", max(16, 8 * m * m)),
                            validate=False, tolerance=math.inf)
        sampler = OriginClusterSampler(alpha, table, diam_filter=m)
        for i, n in enumerate(params["n_list"]):
            t1 = time.time()
            rows = replicate_clusters(
                sampler, stream_seed_for(seed, "shl", i), params["samples"],
                lambda cl: bool(cl.boundary_hit),
                threads=threads, stop_boundary_n=n)
            hits = sum(rows)
            p_hat = hits / params["samples"]
            est = Estimate(value=p_hat,
                           std_error=math.sqrt(p_hat * (1 - p_hat) / params["samples"]),
                           samples=params["samples"], seed=seed,
                           diagnostics={"successes": hits,
                                        "cp95": clopper_pearson(hits, params["samples"]),
                                        "tail_bound": table.tail_bound,
                                        "diam_filter": m},
                           wall_time_s=time.time() - t1)
            points.append(ScanPoint(param=n / m, estimate=est,
                                    reference=float("nan")))
        # log-linear decay fit over nonzero cells
        xs = [pt.param for pt in points if pt.estimate.value > 0]
        ys = [math.log(pt.estimate.value) for pt in points if pt.estimate.value > 0]
        if len(xs) >= 2:
            slope = np.polyfit(xs, ys, 1)[0]
            meta["log_slope"] = float(slope)
            meta["decay"] = bool(slope < 0)
    else:
        raise ValueError(f"unknown lemma scan kind: {kind!r}")

    meta["wall_time_s"] = time.time() - t0
    return ScanResult(kind=f"lemma-{kind}", points=points, meta=meta)


def _far_connect_mass(d: int, x: Point, m: int, samples: int,
                      seed: int) -> Estimate:
    """mu[loops through the origin that also visit x and have diameter > m],
    by length-stratified sampling of bridges rooted at the origin with the
    visit-count reweighting (1/J) that converts the visit-weighted law to
    the loop measure restricted to loops through 0."""
    t0 = time.time()
    table = LengthTable(d, max(64, 8 * m * m), validate=False, tolerance=math.inf)
    s_all = np.arange(1, table.L_max // 2 + 1)
    k_all = 2 * s_all
    tilt = np.exp(-d * m * m / (2.0 * k_all))
    prop = table.p[1:] * tilt
    prop_sum = prop.sum()
    prop_n = prop / prop_sum
    cum = np.cumsum(prop_n)
    rng = stream(seed, "far-connect")
    ks = 2 * (np.searchsorted(cum, rng.random(samples), side="right") + 1)
    x_arr = np.asarray(x, dtype=np.int64)
    total = total2 = 0.0
    hits = 0
    for k in np.unique(ks):
        rows = int((ks == k).sum())
        pos = table.sample_bridges(int(k), rows, rng)
        j = (pos[:, :-1, :] == 0).all(axis=2).sum(axis=1)
        vis_x = (pos[:, :-1, :] == x_arr).all(axis=2).any(axis=1)
        ext = pos.max(axis=1) - pos.min(axis=1)
        diam_ok = (ext ** 2).sum(axis=1) > m * m
        amb = np.flatnonzero(diam_ok & ((ext ** 2).max(axis=1) <= m * m) & vis_x)
        for i in amb:
            diam_ok[i] = diameter({tuple(int(c) for c in r) for r in pos[i]}) > m
        s = (k - 2) // 2
        w = (table.p[s + 1] / prop_n[s]) * (vis_x & diam_ok) / j
        total += w.sum()
        total2 += (w ** 2).sum()
        hits += int((vis_x & diam_ok).sum())
    mean = total / samples
    var = max(total2 / samples - mean * mean, 0.0) / samples
    return Estimate(value=float(mean), std_error=math.sqrt(var),
                    samples=samples, seed=seed,
                    diagnostics={"accepted": hits, "tail_bound": table.tail_bound,
                                 "L_max": table.L_max},
                    wall_time_s=time.time() - t0)


# -- scan output --------------------------------------------------------------

_CSV_COLUMNS = ["param", "estimate", "std_error", "reference", "ratio",
                "samples", "tail_bound", "boundary_touch_rate"]


def scan_to_csv(scan: ScanResult, fh) -> None:
    """CSV with the scan metadata in leading comment lines.

    Wall-time never appears in CSV output, so identical invocations give
    byte-identical files.
    """
    fh.write("# schema=loopsoup-scan/v1\n")
    fh.write(f"# kind={scan.kind}\n")
    for key in sorted(scan.meta):
        if key.startswith("wall_time"):
            continue
        fh.write(f"# {key}={_json_safe(scan.meta[key])!r}\n")
    fh.write(",".join(_CSV_COLUMNS) + "\n")
    for pt in scan.points:
        dg = pt.estimate.diagnostics
        row = [repr(float(pt.param)), repr(float(pt.estimate.value)),
               repr(float(pt.estimate.std_error)), repr(float(pt.reference)),
               repr(float(pt.ratio)), str(pt.estimate.samples),
               repr(float(dg.get("tail_bound", 0.0))),
               repr(float(dg.get("boundary_touch_rate", 0.0)))]
        fh.write(",".join(row) + "\n")


def scan_to_json(scan: ScanResult, fh) -> None:
    obj = {"schema": "loopsoup-scan/v1", "kind": scan.kind, "meta": scan.meta,
           "points": [{"param": pt.param, "estimate": pt.estimate.value,
                       "std_error": pt.estimate.std_error,
                       "reference": pt.reference, "ratio": pt.ratio,
                       "samples": pt.estimate.samples,
                       "diagnostics": _json_safe(pt.estimate.diagnostics),
                       "wall_time_s": pt.estimate.wall_time_s}
                      for pt in scan.points]}
    json.dump(obj, fh, indent=1, sort_keys=True)
    fh.write("\n")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
