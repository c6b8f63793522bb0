"""CSV exchange format for externally produced draws.

A draws file is UTF-8 CSV with a header row naming the columns ``log_p`` and
``log_q`` (in either order), optionally followed by ``theta_1 .. theta_K``.
Each data row holds one draw; numbers use ``.`` as the decimal mark. Other
column names are rejected so that typos do not pass silently.
"""
from __future__ import annotations

import csv
import math
import re

import numpy as np

from vidiag.errors import InputFormatError, TooFewDrawsError
from vidiag.psis import MIN_DRAWS, DrawBatch

_THETA = re.compile(r"^theta_(\d+)$")


def _header_layout(header):
    names = [h.strip() for h in header]
    for required in ("log_p", "log_q"):
        if names.count(required) != 1:
            raise InputFormatError(f"header must contain exactly one {required!r} column", line=1)
    theta = {}
    for col, name in enumerate(names):
        if name in ("log_p", "log_q"):
            continue
        m = _THETA.match(name)
        if not m:
            raise InputFormatError(f"unexpected column {name!r}", line=1)
        theta[int(m.group(1))] = col
    K = len(theta)
    if sorted(theta) != list(range(1, K + 1)):
        raise InputFormatError("draw columns must be theta_1 .. theta_K without gaps", line=1)
    return names.index("log_p"), names.index("log_q"), [theta[i] for i in range(1, K + 1)]


def read_draws_csv(path, min_draws: int = MIN_DRAWS) -> DrawBatch:
    """Parse a draws file into a ``DrawBatch``.

    Raises
    ------
    InputFormatError
        For a bad header, a row of the wrong width, an unparsable or non-finite
        number, or an empty file; the message carries the 1-based line number.
    TooFewDrawsError
        When fewer than ``min_draws`` rows are present.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputFormatError("file is empty", line=1) from None
        ip, iq, itheta = _header_layout(header)
        width = len(header)
        lp, lq, th = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise InputFormatError(f"expected {width} fields, found {len(row)}", line=line)
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise InputFormatError("field is not a number", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise InputFormatError("non-finite value", line=line)
            lp.append(vals[ip])
            lq.append(vals[iq])
            th.append([vals[c] for c in itheta])
    if len(lp) < min_draws:
        raise TooFewDrawsError(f"need at least {min_draws} draws, file has {len(lp)}")
    draws = np.array(th, dtype=float).reshape(len(lp), len(itheta)) if itheta else None
    return DrawBatch(draws, np.array(lp), np.array(lq))


def draws_csv_text(batch: DrawBatch) -> str:
    """Serialise a batch in the exchange format (round-trips exactly)."""
    lines = [",".join(["log_p", "log_q"] + [f"theta_{i + 1}" for i in range(batch.K)])]
    for s in range(batch.S):
        vals = [batch.log_target[s], batch.log_proposal[s]]
        if batch.draws is not None:
            vals.extend(batch.draws[s])
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"
