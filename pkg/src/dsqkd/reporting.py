"""Report serialization: canonical JSON, flat CSV summaries, pulse traces.

The JSON summary is byte-reproducible from (config, seed): keys are sorted
and every float is printed with 17 significant digits.  Wall-clock timing
is deliberately not part of the canonical document; it is carried on the
in-memory report and logged separately.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import SlotKind
from .experiment import ExperimentReport


class ReportIOError(Exception):
    """Filesystem failure while emitting a report, with path context."""


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot enter a canonical report")
    return format(x, ".17g")


def canonical_json(obj) -> str:
    """Serialize nested dict/list/scalar data with a stable byte layout."""
    out: list[str] = []
    _write_json(obj, out)
    return "".join(out) + "\n"


def _write_json(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, Mapping):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key) + ":")
            _write_json(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _write_json(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} canonically")


# execution details that cannot influence any computed number; keeping
# them out of the canonical document makes byte-identity hold across
# worker counts and output locations
_NON_CANONICAL_CONFIG = ("workers", "output_dir", "emit_traces")


def report_to_dict(report: ExperimentReport) -> dict:
    """Plain-dict view of a report, excluding non-reproducible timing and
    execution-only configuration."""
    config = dataclasses.asdict(report.config)
    for key in _NON_CANONICAL_CONFIG:
        config.pop(key, None)
    doc = {
        "config": config,
        "calibration": dataclasses.asdict(report.calibration),
        "link": None if report.link is None else dataclasses.asdict(report.link),
        "security": dataclasses.asdict(report.security),
        "phase": dataclasses.asdict(report.phase),
        "counts": dataclasses.asdict(report.counts),
        "version": report.version,
    }
    return doc


def _flatten(prefix: str, obj, into: dict) -> None:
    if isinstance(obj, Mapping):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], into)
    else:
        into[prefix] = obj


def emit_report(
    report: ExperimentReport, out_dir: str | Path, formats: Iterable[str] = ("json",)
) -> dict[str, Path]:
    """Write the report under ``out_dir``; returns {format: path}."""
    out = Path(out_dir)
    doc = report_to_dict(report)
    written: dict[str, Path] = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            if fmt == "json":
                path = out / "report.json"
                path.write_text(canonical_json(doc))
            elif fmt == "csv":
                path = out / "summary.csv"
                flat: dict = {}
                _flatten("", doc, flat)
                keys = list(flat)
                path.write_text(
                    ",".join(keys)
                    + "\n"
                    + ",".join(_csv_cell(flat[k]) for k in keys)
                    + "\n"
                )
            else:
                raise ValueError(f"unknown report format {fmt!r}")
            written[fmt] = path
    except OSError as exc:
        raise ReportIOError(f"cannot write report under {out}: {exc}") from exc
    return written


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _format_float(v)
    if isinstance(v, str):
        return '"' + v.replace('"', '""') + '"' if ("," in v or '"' in v) else v
    return str(v)


def write_sweep_csv(rows: list[dict], path: str | Path) -> Path:
    """One CSV row per sweep point; column order fixed by the first row."""
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        if not rows:
            p.write_text("")
            return p
        keys = list(rows[0])
        lines = [",".join(keys)]
        for row in rows:
            lines.append(",".join(_csv_cell(row.get(k)) for k in keys))
        p.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write sweep table to {p}: {exc}") from exc
    return p


_ROLE_NAMES = {
    SlotKind.PILOT: "pilot",
    SlotKind.SHOT_NOISE: "shot_noise",
    SlotKind.DATA: "data",
}

TRACE_COLUMNS = (
    "pulse_index",
    "packet_index",
    "role",
    "tx_x",
    "tx_p",
    "rx_x_mv",
    "rx_p_mv",
    "theta_true",
    "theta_hat",
    "symbol_tx",
    "symbol_rx",
)

SCATTER_COLUMNS = (
    "packet_index",
    "x_raw",
    "p_raw",
    "x_corrected",
    "p_corrected",
    "x_residual",
    "p_residual",
    "symbol_tx",
    "symbol_rx",
)


class TraceCsvWriter:
    """Streams the per-pulse trace: one row per simulated slot."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w")
        except OSError as exc:
            raise ReportIOError(f"cannot open trace file {self.path}: {exc}") from exc
        self._fh.write(",".join(TRACE_COLUMNS) + "\n")

    def write_packet(self, packet_index, roles, tx_x, tx_p, rx_x_mv, rx_p_mv,
                     theta_true, theta_hat, symbol_tx, symbol_rx) -> None:
        base = packet_index * len(roles)
        rows = []
        for s, role in enumerate(roles):
            sym_t = symbol_tx.get(s, "")
            sym_r = symbol_rx.get(s, "")
            rows.append(
                f"{base + s},{packet_index},{_ROLE_NAMES[role.kind]},"
                f"{_format_float(tx_x[s])},{_format_float(tx_p[s])},"
                f"{_format_float(rx_x_mv[s])},{_format_float(rx_p_mv[s])},"
                f"{_format_float(theta_true[s])},{_format_float(theta_hat)},"
                f"{sym_t},{sym_r}"
            )
        self._fh.write("\n".join(rows) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TraceCsvWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ScatterCsvWriter:
    """Streams the constellation scatter for data slots: raw / phase-corrected
    / displacement-removed quadratures per pulse."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w")
        except OSError as exc:
            raise ReportIOError(f"cannot open scatter file {self.path}: {exc}") from exc
        self._fh.write(",".join(SCATTER_COLUMNS) + "\n")

    def write_packet(self, packet_index, raw_x, raw_p, cor_x, cor_p,
                     res_x, res_p, symbol_tx, symbol_rx) -> None:
        rows = [
            f"{packet_index},"
            f"{_format_float(raw_x[i])},{_format_float(raw_p[i])},"
            f"{_format_float(cor_x[i])},{_format_float(cor_p[i])},"
            f"{_format_float(res_x[i])},{_format_float(res_p[i])},"
            f"{symbol_tx[i]},{symbol_rx[i]}"
            for i in range(len(raw_x))
        ]
        self._fh.write("\n".join(rows) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "ScatterCsvWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
