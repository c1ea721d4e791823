"""Delimited-table helpers.

Every table written by the toolkit starts with one provenance comment line
(``# sustain <version> key=value ...``) followed by a regular CSV header.
Readers skip leading ``#`` lines, so hand-written inputs without the
comment line parse the same way.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from sustain import __version__

PROVENANCE_PREFIX = "# "


def provenance_line(params: Mapping[str, object] | None = None) -> str:
    parts = [f"sustain {__version__}"]
    for key in sorted(params or {}):
        parts.append(f"{key}={_fmt(params[key])}")
    return PROVENANCE_PREFIX + " ".join(parts)


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if value == int(value) and abs(value) < 1e15:
            return repr(float(value))
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def format_cell(value: object) -> str:
    if value is None:
        return ""
    return _fmt(value)


def write_table(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[object]],
    params: Mapping[str, object] | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(provenance_line(params) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_table(path: str | Path) -> tuple[list[str], Iterator[tuple[int, list[str]]]]:
    """Return the header and an iterator of ``(line_no, cells)`` pairs.

    Line numbers are 1-based physical lines of the file so error messages
    can point at the offending row.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    if start >= len(lines):
        return [], iter(())
    reader = csv.reader(lines[start:])
    header = [h.strip() for h in next(reader)]

    def rows() -> Iterator[tuple[int, list[str]]]:
        for offset, cells in enumerate(reader, start=start + 2):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            yield offset, cells

    return header, rows()


def read_provenance(path: str | Path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    if not first.startswith(PROVENANCE_PREFIX):
        return {}
    out = {}
    for token in first[len(PROVENANCE_PREFIX):].split()[2:]:
        if "=" in token:
            key, value = token.split("=", 1)
            out[key] = value
    return out


def write_json(path: str | Path, payload: object) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
