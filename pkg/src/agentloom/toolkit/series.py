"""Indexed numeric tables for macro-style series work.

A :class:`SeriesTable` holds equal-length value columns over a shared period
index at one of three frequencies.  Period labels: monthly ``2020-03``,
quarterly ``2020Q1``, annual ``2020``.  Tables persist as CSV plus a sidecar
``.meta.json`` document (frequency + per-column provenance).
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .. import FORMAT_VERSION

logger = logging.getLogger(__name__)

FREQUENCIES = ("monthly", "quarterly", "annual")
PERIODS_PER_YEAR = {"monthly": 12, "quarterly": 4, "annual": 1}


class SeriesError(ValueError):
    pass


def parse_period(label: str, frequency: str) -> Tuple[int, int]:
    """Parse a period label into (year, sub-period); sub is 1-based."""
    try:
        if frequency == "monthly":
            year, month = label.split("-")
            sub = int(month)
            if not 1 <= sub <= 12:
                raise ValueError
            return int(year), sub
        if frequency == "quarterly":
            year, quarter = label.split("Q")
            sub = int(quarter)
            if not 1 <= sub <= 4:
                raise ValueError
            return int(year), sub
        if frequency == "annual":
            return int(label), 1
    except (ValueError, AttributeError):
        pass
    raise SeriesError(f"bad {frequency} period label: {label!r}")


def format_period(year: int, sub: int, frequency: str) -> str:
    if frequency == "monthly":
        return f"{year}-{sub:02d}"
    if frequency == "quarterly":
        return f"{year}Q{sub}"
    return str(year)


@dataclass
class SeriesTable:
    """Columns of floats (None = missing) over a shared period index."""

    index: List[str]
    frequency: str
    columns: Dict[str, List[Optional[float]]] = field(default_factory=dict)
    provenance: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.frequency not in FREQUENCIES:
            raise SeriesError(f"unknown frequency: {self.frequency!r}")
        for name, values in self.columns.items():
            if len(values) != len(self.index):
                raise SeriesError(
                    f"column {name!r} has {len(values)} values for {len(self.index)} periods"
                )
        for label in self.index:
            parse_period(label, self.frequency)

    def __len__(self) -> int:
        return len(self.index)

    def column_names(self) -> List[str]:
        return list(self.columns)

    def periods(self) -> List[Tuple[int, int]]:
        return [parse_period(label, self.frequency) for label in self.index]

    def missing_fraction(self, column: str) -> float:
        values = self.columns[column]
        if not values:
            return 0.0
        return sum(1 for v in values if v is None) / len(values)

    def to_dict(self) -> dict:
        return {
            "index": list(self.index),
            "frequency": self.frequency,
            "columns": {k: list(v) for k, v in self.columns.items()},
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SeriesTable":
        return cls(
            index=list(doc["index"]),
            frequency=doc["frequency"],
            columns={k: list(v) for k, v in doc.get("columns", {}).items()},
            provenance=dict(doc.get("provenance", {})),
        )

    # ------------------------------------------------------------- CSV I/O --

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = self.column_names()
        writer.writerow(["period"] + names)
        for i, label in enumerate(self.index):
            row = [label]
            for name in names:
                v = self.columns[name][i]
                row.append("" if v is None else repr(v))
            writer.writerow(row)
        return buf.getvalue()

    def save(self, path: Path) -> None:
        """Write CSV at *path* and metadata at ``<path>.meta.json``."""
        path = Path(path)
        path.write_text(self.to_csv_text(), encoding="utf-8")
        meta = {
            "format_version": FORMAT_VERSION,
            "frequency": self.frequency,
            "provenance": dict(self.provenance),
        }
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        logger.debug("saved series table (%d periods, %d columns) to %s",
                     len(self.index), len(self.columns), path)

    @classmethod
    def load(cls, path: Path) -> "SeriesTable":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".meta.json").read_text(encoding="utf-8"))
        reader = csv.reader(io.StringIO(path.read_text(encoding="utf-8")))
        header = next(reader)
        names = header[1:]
        index: List[str] = []
        columns: Dict[str, List[Optional[float]]] = {n: [] for n in names}
        for row in reader:
            if not row:
                continue
            index.append(row[0])
            for name, cell in zip(names, row[1:]):
                columns[name].append(float(cell) if cell != "" else None)
        return cls(
            index=index,
            frequency=meta["frequency"],
            columns=columns,
            provenance=meta.get("provenance", {}),
        )
