"""Result files: frozen-header CSV (12 significant digits), JSON (17), atomic writes."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
import uuid
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

CSV_HEADER = ("frozen_past_id", "n", "v", "replicate_count", "sigma2", "ks", "dkw", "verdict")


def fmt_csv(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "pass" if x else "fail"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating, Fraction)):
        return format(float(x), ".12g")
    return str(x)


def csv_text(rows: Iterable[Mapping], header: tuple = CSV_HEADER) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_csv(r.get(h)) for h in header])
    return buf.getvalue()


def _plain(obj, floats: list, tag: str):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v, floats, tag) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v, floats, tag) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist(), floats, tag)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        x = float(obj)
        if not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        floats.append(format(x, ".17g"))
        return f"{tag}{len(floats) - 1}@"
    return obj


def json_text(obj) -> str:
    """JSON with every finite float at 17 significant digits; non-finite values become strings/null."""
    floats: list[str] = []
    tag = f"@f{uuid.uuid4().hex}:"  # placeholder that no real string can collide with
    text = json.dumps(_plain(obj, floats, tag), indent=2, sort_keys=False)
    return re.sub(f'"{tag}(\\d+)@"', lambda m: floats[int(m.group(1))], text) + "\n"


def write_atomic(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
