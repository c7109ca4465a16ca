"""Loaders for the example data sets.

``load_seizures`` reads the bundled progabide seizure counts.  The student
performance table is not bundled; ``load_student`` reads a user-supplied copy
of ``student-mat.csv`` (semicolon separated, as distributed by UCI) and
returns the columns the examples use.
"""

from __future__ import annotations

import csv
import io
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidDataError

PASS_MARK = 10


def _read(text: str, delimiter: str) -> dict[str, list[str]]:
    reader = csv.DictReader(io.StringIO(text), delimiter=delimiter)
    if reader.fieldnames is None:
        raise InvalidDataError("empty table")
    cols: dict[str, list[str]] = {name.strip(): [] for name in reader.fieldnames}
    for row in reader:
        for key, value in row.items():
            cols[key.strip()].append(value.strip().strip('"'))
    return cols


def load_seizures() -> dict[str, np.ndarray]:
    """Progabide arm: ``subject``, ``base`` (8-week baseline) and ``post`` (8 weeks on drug)."""
    text = resources.files("latentrank").joinpath("data/seizures.csv").read_text("utf-8")
    cols = _read(text, ",")
    return {k: np.asarray(v, dtype=float) for k, v in cols.items()}


def default_student_path() -> Path:
    return Path(str(resources.files("latentrank").joinpath("data/student-mat.csv")))


def load_student(path: str | Path | None = None) -> dict[str, np.ndarray]:
    """Math-course student table with final grade ``G3``, ``Dalc``, ``Walc`` and ``famrel``.

    Also returns ``failed`` (``G3 < 10``).  Raises ``FileNotFoundError`` when
    no copy of the table is available.
    """
    path = default_student_path() if path is None else Path(path)
    text = path.read_text("utf-8-sig")
    delimiter = ";" if text.split("\n", 1)[0].count(";") > 0 else ","
    cols = _read(text, delimiter)
    missing = {"G3", "Dalc", "Walc", "famrel"} - set(cols)
    if missing:
        raise InvalidDataError(f"student table lacks columns {sorted(missing)}")
    out = {k: np.asarray(cols[k], dtype=float) for k in ("G3", "Dalc", "Walc", "famrel")}
    out["failed"] = out["G3"] < PASS_MARK
    return out
