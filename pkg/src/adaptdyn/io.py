"""Output writers; every file starts with a version, config hash and seed header."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__


def config_hash(config: Mapping[str, Mapping[str, str]]) -> str:
    """sha256 of the canonical JSON form of a sectioned config."""
    canon = {s: {k: str(v) for k, v in sorted(config[s].items())} for s in sorted(config)}
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()


def header(cfg_hash: str, seed: Optional[int], **extra) -> dict:
    out = {"artifact": "adaptdyn", "version": __version__, "config_sha256": cfg_hash,
           "seed": seed}
    out.update(extra)
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_csv(path: str, head: dict, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with ``# key=value`` comment lines before the column row."""
    with open(path, "w", newline="") as fh:
        for k, v in head.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path: str):
    """Returns ``(header dict, column names, rows as lists of str)``."""
    head = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        k, _, v = lines[i][1:].strip().partition("=")
        head[k] = v
        i += 1
    rows = list(csv.reader(lines[i:]))
    return head, rows[0], rows[1:]


def write_json(path: str, head: dict, payload: Mapping) -> None:
    with open(path, "w") as fh:
        json.dump(_clean({"header": head, **payload}), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_ndjson(path: str, head: dict, records: Iterable[Mapping]) -> None:
    """Header object on the first line, one record per following line."""
    with open(path, "w") as fh:
        fh.write(json.dumps(_clean({"header": head}), sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")


def pes_records(trajectory) -> Iterable[dict]:
    """One record per jump: ``{t, support, densities, killed, event}``."""
    for rec in trajectory.records:
        st = rec.state
        ann = rec.annotation
        event = None
        if ann is not None:
            event = {k: ann.get(k) for k in ("parent", "mutant", "accepted", "killed_reason")}
        yield {"t": rec.t, "support": list(st.support), "densities": list(st.densities),
               "killed": st.killed, "event": event}
