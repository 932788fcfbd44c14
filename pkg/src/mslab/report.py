"""Deterministic run reports and CSV output.

``report.txt`` holds the echoed configuration, package versions, parameters
and pass/fail results.  The ``timestamp`` line is the only one that differs
between identical runs; wall-clock timings go to ``timings.txt``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return " ".join(fmt(t) for t in v)
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def versions() -> str:
    return f"mslab {__version__}, numpy {np.__version__}, scipy {scipy.__version__}, python {platform.python_version()}"


def emit_report(outdir, command: str, config_ini: str, sections: dict, passed: bool, timings: dict | None = None):
    """Write ``report.txt`` (and ``timings.txt``) into ``outdir``; returns the report path.

    ``sections`` maps a section title to a dict of key/value pairs, written
    in insertion order.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        "mslab run report",
        f"timestamp = {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
        f"command = {command}",
        f"versions = {versions()}",
        f"overall = {'pass' if passed else 'fail'}",
        "",
        "[config]",
        config_ini.rstrip(),
        "",
    ]
    for title, items in sections.items():
        lines.append(f"[{title}]")
        for k, v in items.items():
            lines.append(f"{k} = {fmt(v)}")
        lines.append("")
    path = out / "report.txt"
    path.write_text("\n".join(lines))
    if timings:
        (out / "timings.txt").write_text("".join(f"{k} = {v:.3f} s\n" for k, v in timings.items()))
    return path
