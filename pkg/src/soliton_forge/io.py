"""Profile CSV and report JSON serialisation."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import FirstIntegralContext, make_params
from .profile import PROFILE_COLUMNS, MetricProfile
from .report import VerificationReport


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_profile_csv(prof: MetricProfile, path) -> None:
    """Write the columns in ``PROFILE_COLUMNS`` order with 17 significant digits,
    plus a sidecar ``<path>.meta.json`` holding the parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for row in prof.data:
            w.writerow(["%.17g" % v for v in row])
    meta = {
        "d": prof.params.d,
        "q": prof.params.q,
        "C": prof.ctx.C,
        "lambda": prof.ctx.lam,
        "Lambda": prof.ctx.Lambda,
        "source": prof.source,
    }
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_profile_csv(path) -> MetricProfile:
    path = Path(path)
    meta = json.loads(meta_path(path).read_text())
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != PROFILE_COLUMNS:
        raise ValueError(f"unexpected CSV header: {header}")
    data = np.array(body, dtype=float)
    p = make_params(meta["d"], meta["q"])
    ctx = FirstIntegralContext.from_Lambda(p, meta["Lambda"], meta["lambda"])
    cols = {name: data[:, i] for i, name in enumerate(PROFILE_COLUMNS)}
    return MetricProfile.from_columns(p, ctx, source=meta.get("source", "file"), **cols)


def write_report(rep: VerificationReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rep.to_json() + "\n")
