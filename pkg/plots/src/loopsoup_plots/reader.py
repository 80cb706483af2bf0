"""Readers for the loopsoup file formats.

Scan CSV: `# key=value` comment lines (the first must carry
schema=loopsoup-scan/v1), then a header row and one row per scan point.
Soup dump: JSON lines, a schema header object followed by one loop per
line with root, length, and trace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SCAN_SCHEMA = "loopsoup-scan/v1"
SOUP_SCHEMA = "loopsoup-soup/v1"


class SchemaError(ValueError):
    pass


@dataclass
class ScanFile:
    meta: dict
    columns: dict          # name -> numpy array

    @property
    def kind(self) -> str:
        return self.meta.get("kind", "?")


def read_scan_csv(path) -> ScanFile:
    meta: dict = {}
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if meta.get("schema") != SCAN_SCHEMA:
        raise SchemaError(
            f"{path}: expected schema {SCAN_SCHEMA}, got {meta.get('schema')!r}")
    if header is None or not rows:
        raise SchemaError(f"{path}: no data rows")
    cols = {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}
    return ScanFile(meta=meta, columns=cols)


@dataclass
class SoupFile:
    meta: dict
    traces: list           # list of (length+1, d) int arrays


def read_soup_jsonl(path) -> SoupFile:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    head = json.loads(lines[0])
    if head.get("schema") != SOUP_SCHEMA:
        raise SchemaError(
            f"{path}: expected schema {SOUP_SCHEMA}, got {head.get('schema')!r}")
    traces = []
    for ln in lines[1:]:
        obj = json.loads(ln)
        tr = np.asarray(obj["trace"], dtype=np.int64)
        if tr.shape[0] != obj["length"] + 1:
            raise SchemaError(f"{path}: trace length mismatch")
        traces.append(tr)
    return SoupFile(meta=head, traces=traces)
