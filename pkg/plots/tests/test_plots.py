"""Secondary-component tests.

Inputs are produced by the primary package strictly through its CLI (the
documented external interface); this package only reads files.
"""

import json
import subprocess
import sys

import pytest

from loopsoup_plots.cli import main as plot_main
from loopsoup_plots.figures import FigureSpec, plot_scaling, plot_soup
from loopsoup_plots.reader import SchemaError, read_scan_csv, read_soup_jsonl

PRIMARY = [sys.executable, "-m", "loopsoup.cli"]


@pytest.fixture(scope="module")
def one_arm_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "one_arm.csv"
    out = subprocess.run(PRIMARY + [
        "one-arm", "--dim", "3", "--alpha", "0.5", "--samples", "4000",
        "--seed", "42", "--n-list", "2,4,6", "--out", str(path)],
        capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    return path


@pytest.fixture(scope="module")
def soup_jsonl(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "soup.jsonl"
    out = subprocess.run(PRIMARY + [
        "soup", "--dim", "3", "--alpha", "0.6", "--lmax", "10",
        "--radius", "6", "--seed", "5", "--out", str(path)],
        capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    return path


def is_png(path):
    return path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_read_scan_csv(one_arm_csv):
    scan = read_scan_csv(one_arm_csv)
    assert scan.kind == "one-arm"
    assert len(scan.columns["param"]) == 3
    assert (scan.columns["reference"] > 0).all()


def test_plot_scaling_one_arm_d3(one_arm_csv, tmp_path):
    out = tmp_path / "scaling.png"
    summary = plot_scaling(FigureSpec(str(one_arm_csv), "scaling", str(out)))
    assert out.exists() and out.stat().st_size > 5000 and is_png(out)
    # one-arm reference in d=3 decays like 1/n
    assert summary["reference_slope"] == pytest.approx(-1.0, abs=1e-6)


def test_plot_soup_projection(soup_jsonl, tmp_path):
    out = tmp_path / "soup.png"
    summary = plot_soup(FigureSpec(str(soup_jsonl), "soup", str(out)))
    assert summary["loops"] > 0
    assert out.exists() and out.stat().st_size > 5000 and is_png(out)


def test_plot_soup_empty(tmp_path):
    src = tmp_path / "empty.jsonl"
    src.write_text(json.dumps({"schema": "loopsoup-soup/v1", "d": 3,
                               "alpha": 0.1, "L_max": 8, "seed": 0,
                               "window": {"center": [0, 0, 0], "radius": 2},
                               "n_loops": 0}) + "\n")
    out = tmp_path / "empty.png"
    summary = plot_soup(FigureSpec(str(src), "soup", str(out)))
    assert summary["loops"] == 0
    assert is_png(out)


def test_single_loop_closed_polyline(tmp_path):
    src = tmp_path / "one.jsonl"
    head = {"schema": "loopsoup-soup/v1", "d": 3, "alpha": 0.1, "L_max": 8,
            "seed": 0, "window": {"center": [0, 0, 0], "radius": 2},
            "n_loops": 1}
    loop = {"root": [0, 0, 0], "length": 4,
            "trace": [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 0]]}
    src.write_text(json.dumps(head) + "\n" + json.dumps(loop) + "\n")
    sf = read_soup_jsonl(src)
    tr = sf.traces[0]
    assert (tr[0] == tr[-1]).all()
    out = tmp_path / "one.png"
    assert plot_soup(FigureSpec(str(src), "soup", str(out)))["loops"] == 1


def test_schema_mismatch_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("# schema=other/v9\nparam,estimate\n1,2\n")
    with pytest.raises(SchemaError):
        read_scan_csv(bad)
    badj = tmp_path / "bad.jsonl"
    badj.write_text(json.dumps({"schema": "nope"}) + "\n")
    with pytest.raises(SchemaError):
        read_soup_jsonl(badj)


def test_empty_scan_errors(tmp_path):
    f = tmp_path / "empty.csv"
    f.write_text("# schema=loopsoup-scan/v1\nparam,estimate\n")
    with pytest.raises(SchemaError, match="no data"):
        read_scan_csv(f)


def test_cli_end_to_end(one_arm_csv, soup_jsonl, tmp_path):
    out1 = tmp_path / "cli_scaling.png"
    assert plot_main(["scaling", str(one_arm_csv), str(out1)]) == 0
    assert is_png(out1)
    out2 = tmp_path / "cli_soup.png"
    assert plot_main(["soup", str(soup_jsonl), str(out2), "--monochrome"]) == 0
    assert is_png(out2)


def test_cli_error_paths(tmp_path):
    assert plot_main(["bogus-kind", "a", "b"]) == 1
    missing = tmp_path / "missing.csv"
    assert plot_main(["scaling", str(missing), str(tmp_path / "o.png")]) == 2
