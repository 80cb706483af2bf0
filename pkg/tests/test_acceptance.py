"""Acceptance suite: every criterion runs at its stated budget and
tolerance and reports one PASS line.  Run with `pytest -v -s
tests/test_acceptance.py` to see the lines as they complete.
"""

import io
import math
import time
import warnings

import numpy as np
import pytest

from loopsoup import experiments, greens
from loopsoup.lattice import Box, ball_volume
from loopsoup.loopmeasure import LengthTable, loop_mass_connect
from loopsoup.rng import stream
from loopsoup.soup import SoupParams, sample_soup

from oracles import enumerate_closed_paths, series_green0, tv_distance


def report(name, detail):
    print(f"ACCEPTANCE {name}: PASS  ({detail})")


# 1 ---------------------------------------------------------------------------

def test_green_values(table3_big, table5_big):
    t0 = time.time()
    oracle3 = series_green0(table3_big.p, 3)
    g3 = greens.default_table(3).green((0, 0, 0))
    assert abs(g3 - oracle3) <= 1e-6
    assert g3 == pytest.approx(1.5163860591, abs=1e-6)
    oracle5 = series_green0(table5_big.p, 5)
    g5 = greens.default_table(5).green((0,) * 5)
    assert abs(g5 - oracle5) <= 1e-6

    rng = np.random.default_rng(2024)
    checked = 0
    for d in (3, 5):
        tab = greens.default_table(d)
        cd = greens.green_constant(d)
        found = 0
        while found < 10:
            x = rng.integers(-30, 31, size=d)
            r = math.sqrt(float((x * x).sum()))
            if not 10 <= r <= 30:
                continue
            ratio = tab.green(tuple(int(v) for v in x)) * r ** (d - 2) / cd
            assert 0.98 <= ratio <= 1.02, (d, tuple(x), ratio)
            found += 1
            checked += 1
    dt = time.time() - t0
    assert dt < 60
    report("green-values", f"G3(0)={g3:.10f} vs oracle {oracle3:.10f}; "
           f"{checked} asymptotic ratios in [0.98,1.02]; {dt:.1f}s")


# 2 ---------------------------------------------------------------------------

def test_capacity_identities():
    t0 = time.time()
    tab = greens.default_table(3)
    g0, g1 = tab.green((0, 0, 0)), tab.green((1, 0, 0))
    c1 = greens.capacity([(0, 0, 0)]).cap
    assert abs(c1 - 1.0 / g0) <= 1e-10
    c2 = greens.capacity([(0, 0, 0), (1, 0, 0)]).cap
    assert abs(c2 - 2.0 / (g0 + g1)) <= 1e-10

    rng = np.random.default_rng(7)
    for _ in range(100):
        pts = {tuple(v) for v in rng.integers(-4, 5, size=(5, 3))}
        extra = tuple(rng.integers(-4, 5, size=3))
        assert greens.capacity(pts | {extra}).cap >= greens.capacity(pts).cap - 1e-9
    dt = time.time() - t0
    assert dt < 60
    report("capacity-identities",
           f"cap(0)={c1:.10f}; pair formula to 1e-10; 100 nested pairs; {dt:.1f}s")


# 3 ---------------------------------------------------------------------------

def test_bridge_sampler_exactness():
    t0 = time.time()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t2 = LengthTable(2, 4, validate=False)
    rng = stream(1234, "acceptance-tv")
    n = 1_000_000
    ref = enumerate_closed_paths(2, 4)
    counts: dict = {}
    done = 0
    while done < n:
        m = min(200_000, n - done)
        pos = t2.sample_bridges(4, m, rng)
        # encode the four steps of each path as one base-4 integer
        diff = np.diff(pos, axis=1)
        sym = 2 * np.abs(diff).argmax(axis=2) + (diff.sum(axis=2) < 0)
        codes = sym @ (4 ** np.arange(4))
        for c, k in zip(*np.unique(codes, return_counts=True)):
            counts[int(c)] = counts.get(int(c), 0) + int(k)
        done += m
    ref_codes = {sum(s * 4 ** i for i, s in enumerate(steps)): 1 / 36
                 for steps in ref}
    assert set(counts) <= set(ref_codes)
    tv = tv_distance({c: k / n for c, k in counts.items()}, ref_codes)
    assert tv < 0.01

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t3 = LengthTable(3, 24, validate=False)
    rng = stream(77, "acceptance-closure")
    checked = 0
    viol = 0
    ks = t3.sample_length(rng, size=1_000_000)
    for k in np.unique(ks):
        m_tot = int((ks == k).sum())
        done_k = 0
        while done_k < m_tot:
            m = min(100_000, m_tot - done_k)
            pos = t3.sample_bridges(int(k), m, rng, root=(1, 0, -1))
            viol += int((pos[:, 0] != (1, 0, -1)).any(axis=1).sum())
            viol += int((pos[:, -1] != (1, 0, -1)).any(axis=1).sum())
            viol += int((np.abs(np.diff(pos, axis=1)).sum(axis=2) != 1).sum())
            checked += m
            done_k += m
    assert checked == 1_000_000 and viol == 0
    dt = time.time() - t0
    assert dt < 120
    report("bridge-exactness",
           f"TV(d=2,k=4)@1e6 = {tv:.5f} < 0.01; 1e6 closure checks, 0 violations; {dt:.1f}s")


# 4 ---------------------------------------------------------------------------

def test_soup_law_and_determinism(table3_small):
    t0 = time.time()
    lam = 0.5 * table3_small.m_d * ball_volume(3, 1 + table3_small.L_max // 2)
    counts = np.empty(10_000)
    for s in range(10_000):
        params = SoupParams(alpha=0.5, d=3, window=Box((0, 0, 0), 1),
                            table=table3_small, seed=s)
        counts[s] = len(sample_soup(params).loops)
    disp = counts.var(ddof=1) / counts.mean()
    assert 0.95 <= disp <= 1.05
    assert abs(counts.mean() - lam) <= 4 * math.sqrt(lam / 10_000)

    params = SoupParams(alpha=0.7, d=3, window=Box((0, 0, 0), 2),
                        table=table3_small, seed=99)
    bufs = []
    for thr in (1, 8):
        buf = io.StringIO()
        sample_soup(params, threads=thr).dump_jsonl(buf)
        bufs.append(buf.getvalue().encode())
    assert bufs[0] == bufs[1]
    dt = time.time() - t0
    assert dt < 120
    report("soup-law", f"dispersion={disp:.4f} in [0.95,1.05] over 1e4 windows; "
           f"1-vs-8-thread byte-identical ({len(bufs[0])} bytes); {dt:.1f}s")


# 5 ---------------------------------------------------------------------------

def test_lemma_single_loop_mass_d3():
    t0 = time.time()
    cap0 = greens.capacity([(0, 0, 0)]).cap
    c3 = greens.green_constant(3)
    ratios = {}
    for n in (10, 20, 40):
        est = loop_mass_connect([(0, 0, 0)], Box((0, 0, 0), n), 3,
                                kill_radius=n + 2, samples=1_000_000,
                                seed=4000 + n)
        ratio = est.value * n / (c3 * cap0)
        assert 0.9 <= ratio <= 1.1, (n, ratio)
        ratios[n] = ratio
    dt = time.time() - t0
    assert dt < 600
    report("lemma-single-loop",
           "ratios " + ", ".join(f"n={n}: {r:.4f}" for n, r in ratios.items())
           + f"; {dt:.0f}s")


# 6 ---------------------------------------------------------------------------

def test_lemma_two_sets_analytic_d3():
    t0 = time.time()
    tab = greens.default_table(3)
    g0 = tab.green((0, 0, 0))
    details = []
    for r in (8, 16):
        x = (r, 0, 0)
        est = loop_mass_connect([(0, 0, 0)], [x], 3, kill_radius=r + 2,
                                samples=1_000_000, seed=8000 + r)
        exact = (tab.green(x) / g0) ** 2
        dev = abs(est.value - exact) / est.std_error
        assert dev <= 3.0, (r, est.value, exact, dev)
        details.append(f"|x|={r}: {dev:.2f} sigma")
    dt = time.time() - t0
    assert dt < 600
    report("lemma-two-sets", "; ".join(details) + f"; {dt:.0f}s")


# 7 ---------------------------------------------------------------------------

def test_theorem_order_sandwich_d5():
    t0 = time.time()
    alpha, d = 0.2, 5
    samples = 1_000_000
    scan = experiments.one_arm_scan(alpha, d, [4, 6, 8], samples=samples,
                                    seed=31337, ref_samples=40_000)
    scaled = []
    for pt in scan.points:
        n = int(pt.param)
        p_hat = pt.estimate.value
        se = pt.estimate.std_error
        scaled.append((n, n ** 3 * p_hat, n ** 3 * se,
                       pt.estimate.diagnostics["successes"],
                       pt.estimate.diagnostics["cp95"]))
    # pairwise compatibility within 3 sigma (Clopper-Pearson where empty)
    for i in range(len(scaled)):
        for j in range(i + 1, len(scaled)):
            ni, vi, si, ki, _ = scaled[i]
            nj, vj, sj, kj, _ = scaled[j]
            if ki > 0 and kj > 0:
                assert abs(vi - vj) <= 3 * math.hypot(si, sj), (scaled[i], scaled[j])
            else:
                lo_i, hi_i = scaled[i][4]
                lo_j, hi_j = scaled[j][4]
                assert ni ** 3 * lo_i <= nj ** 3 * hi_j and nj ** 3 * lo_j <= ni ** 3 * hi_i
    # bounded: the sandwich constant stays within a fixed factor of the
    # first-order reference alpha * C_d * E[Cap]
    ref_const = alpha * scan.meta["C_d"] * scan.meta["e_cap"]
    for n, v, s, k, cp in scaled:
        assert 0.0 <= v <= 10 * ref_const, (n, v, ref_const)
    dt = time.time() - t0
    assert dt < 1800
    report("theorem-order-sandwich",
           "n^3*P= " + ", ".join(f"{v:.4f}+-{s:.4f} (n={n}, k={k})"
                                 for n, v, s, k, _ in scaled)
           + f"; ref const {ref_const:.4f}; {dt:.0f}s")


# 8 ---------------------------------------------------------------------------

def test_mecke_and_fkg_suites():
    t0 = time.time()
    mecke = experiments.verify_mecke(0.3, 3, samples=20_000, seed=555)
    assert mecke["passed"]
    f0 = mecke["rows"][0]
    assert abs(f0["lhs"] - f0["expected"]) <= 4 * f0["lhs_se"]
    fkg = experiments.verify_fkg(0.5, 3, samples=3_000, seed=556)
    assert fkg["passed"]
    dt = time.time() - t0
    assert dt < 300
    sig = max(r["n_sigma"] for r in mecke["rows"])
    report("mecke-fkg", f"mecke max dev {sig:.2f} sigma over 3 functionals; "
           f"fkg {len(fkg['rows'])} pairs pass; {dt:.0f}s")


# 9 ---------------------------------------------------------------------------

def test_expected_cluster_capacity_limit_d5():
    t0 = time.time()
    est = experiments.expected_cluster_capacity(1e-4, 5, samples=200_000,
                                                seed=777)
    cap0 = est.diagnostics["cap_origin"]
    assert abs(est.value - cap0) <= 3 * est.std_error + 1e-12
    assert est.diagnostics["boundary_touch_rate"] < 0.01
    g5 = greens.default_table(5).green((0,) * 5)
    assert cap0 == pytest.approx(1.0 / g5, rel=1e-12)
    dt = time.time() - t0
    assert dt < 300
    report("cluster-capacity-limit",
           f"E[cap] at alpha=1e-4: {est.value:.6f} vs 1/G5(0)={cap0:.6f} "
           f"(se {est.std_error:.2e}); touch rate "
           f"{est.diagnostics['boundary_touch_rate']:.2%}; {dt:.0f}s")
