"""Machine-readable reports: construction, schema validation and atomic output.

Reports are serialised with sorted keys and no timestamps, so a fixed seed
and configuration give byte-identical files.
"""
from __future__ import annotations

import json
import math
import os
import re
import tempfile
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from vidiag import __version__
from vidiag.psis import SmoothedWeights, khat_category, khat_to_renyi_order

SCHEMA_VERSION = 1


@lru_cache(maxsize=1)
def report_schema() -> dict:
    text = resources.files("vidiag").joinpath("schemas/report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(report: dict) -> None:
    """Raise ``jsonschema.ValidationError`` unless ``report`` matches the schema.

    Also checks that the reported category agrees with the reported k-hat.
    """
    jsonschema.validate(report, report_schema())
    diag = report.get("diagnostic")
    if diag and diag["khat"] is not None and not diag["fit_failed"]:
        expected = khat_category(diag["khat"]).value
        if diag["category"] != expected:
            raise jsonschema.ValidationError(
                f"category {diag['category']} inconsistent with khat {diag['khat']}")


def _clean(obj):
    """Convert numpy types to JSON natives; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def atomic_write(path, data: str | bytes) -> None:
    """Write ``data`` to a temporary file beside ``path`` and rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(path, report: dict) -> None:
    clean = _clean(report)
    validate_report(clean)
    atomic_write(path, dumps(clean))


def csv_text(header, rows) -> str:
    """CSV with ``repr`` floats so values round-trip exactly."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def base_report(command: str, seed: int, config: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "provenance": {"package": "vidiag", "version": __version__, "seed": int(seed),
                       "config": config},
    }


def diagnostic_section(w: SmoothedWeights) -> dict:
    khat = w.khat
    if khat is None:
        renyi = None
    else:
        order = khat_to_renyi_order(khat)
        renyi = "inf" if math.isinf(order) else order
    fit = w.pareto_fit
    return {
        "S": w.S, "M": w.M, "khat": khat, "khat_raw": w.khat_raw, "khat_reg": w.khat_reg,
        "regularized": w.regularized, "category": w.category.value,
        "pareto_sigma": None if fit is None else fit.sigma,
        "pareto_threshold": None if fit is None else fit.mu,
        "constant_ratios": w.constant_ratios, "fit_failed": w.fit_failed,
        "renyi_order": renyi, "log_ratio_shift": w.shift,
    }


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")


def write_vsbc_outputs(out: str, rep, prefix: str = "") -> list:
    """Write calibration probabilities and per-margin histograms; return file names."""
    written = []
    header = ["replication"] + list(rep.margins)
    rows = [[int(j)] + [float(v) for v in row] for j, row in zip(rep.replications, rep.pvals)]
    name = f"{prefix}pvals.csv"
    atomic_write(os.path.join(out, name), csv_text(header, rows))
    written.append(name)
    for m in rep.margins:
        counts, edges = rep.histogram(m)
        hrows = [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
        name = f"{prefix}hist_{safe_name(m)}.csv"
        atomic_write(os.path.join(out, name), csv_text(["bin_lo", "bin_hi", "count"], hrows))
        written.append(name)
    return written
