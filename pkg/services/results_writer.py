"""CSV and JSON writers for sweep tables and validation reports."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Iterable, List, Optional, TextIO

FLOAT_FORMAT = ".17g"  # round-trips every double
MISSING = "nan"


def format_value(value: Optional[float]) -> str:
    """Locale-independent text for a numeric cell."""
    if value is None:
        return MISSING
    value = float(value)
    if math.isnan(value):
        return MISSING
    return format(value, FLOAT_FORMAT)


def sweep_header(tier_count: int) -> List[str]:
    """Column names of a sweep table for tiers ``0..tier_count``."""
    return (
        ["sweep_var", "sweep_value"]
        + [f"assoc_{j}" for j in range(tier_count + 1)]
        + [
            "cov_analytic",
            "cov_lower",
            "cov_upper",
            "cov_ppp_limit",
            "cov_sim_mean",
            "cov_sim_halfwidth",
        ]
    )


class SweepTableWriter:
    """Write sweep rows to a CSV file (or stdout) behind a metadata comment.

    The first line is ``# key=value, ...`` so seeds travel with the table;
    the fixed header follows.
    """

    def __init__(self, tier_count: int, metadata: Optional[dict] = None) -> None:
        self.tier_count = tier_count
        self.metadata = dict(metadata or {})
        self._fh: Optional[TextIO] = None
        self._owns_fh = False
        self._writer = None
        self._path: Optional[Path] = None

    # ------------------------------------------------------------------
    def start(self, path: str | Path | None = None) -> None:
        """Open ``path`` (``None`` or ``"-"`` means stdout) and write the header."""
        if self._fh is not None:
            raise RuntimeError("Writer already started")
        if path is None or str(path) == "-":
            self._fh = sys.stdout
            self._owns_fh = False
        else:
            self._path = Path(path)
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self._path.open("w", newline="", encoding="utf-8")
            self._owns_fh = True
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if self.metadata:
            items = ", ".join(f"{k}={self.metadata[k]}" for k in sorted(self.metadata))
            self._fh.write(f"# {items}\n")
        self._writer.writerow(sweep_header(self.tier_count))

    # ------------------------------------------------------------------
    def append(self, row) -> None:
        """Append one :class:`~controllers.experiment_manager.SweepRow`."""
        if self._writer is None or self._fh is None:
            raise RuntimeError("Writer not started")
        assoc = list(row.assoc) + [None] * (self.tier_count + 1 - len(row.assoc))
        cells = [row.variable, format_value(row.value)]
        cells += [format_value(a) for a in assoc[: self.tier_count + 1]]
        cells += [
            format_value(row.analytic),
            format_value(row.lower),
            format_value(row.upper),
            format_value(row.ppp_limit),
            format_value(row.sim_mean),
            format_value(row.sim_half_width),
        ]
        self._writer.writerow(cells)
        self._fh.flush()

    # ------------------------------------------------------------------
    def stop(self) -> None:
        """Close the file handle if this writer opened it."""
        if self._fh is not None and self._owns_fh:
            self._fh.close()
        self._fh = None
        self._writer = None
        self._owns_fh = False

    @property
    def current_file_path(self) -> Optional[Path]:
        return self._path


def write_sweep_csv(
    path: str | Path | None,
    rows: Iterable,
    tier_count: int,
    metadata: Optional[dict] = None,
) -> None:
    writer = SweepTableWriter(tier_count, metadata)
    writer.start(path)
    try:
        for row in rows:
            writer.append(row)
    finally:
        writer.stop()


def _clean(value):
    """Replace NaN by ``None`` so the JSON stays standard."""
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def dumps_json(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path | None, payload: dict) -> None:
    """Write ``payload`` as sorted, indented JSON to ``path`` or stdout."""
    text = dumps_json(payload)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")


def read_sweep_csv(path: str | Path) -> List[dict]:
    """Read a table written by :class:`SweepTableWriter` back as dict rows."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


__all__ = [
    "SweepTableWriter",
    "dumps_json",
    "format_value",
    "read_sweep_csv",
    "sweep_header",
    "write_json",
    "write_sweep_csv",
]
