"""Deterministic serialization helpers.

All floating-point values are written with 17 significant digits so that
every emitted CSV/JSON round-trips to the exact in-memory double. The JSON
emitter is a small hand-rolled writer because the stdlib encoder does not
let us control float formatting.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ValidationError


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (lossless round-trip)."""
    if isinstance(x, (np.floating,)):
        x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialize non-finite value {x!r}")
    return format(x, ".17g")


def _dump_value(obj: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, np.ndarray):
        _dump_value(obj.tolist(), indent, out)
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(obj):
            out.append(pad + "  ")
            _dump_value(item, indent + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (key, value) in enumerate(items):
            if not isinstance(key, str):
                raise ValidationError(f"JSON keys must be strings, got {key!r}")
            out.append(pad + "  " + json.dumps(key) + ": ")
            _dump_value(value, indent + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    else:
        raise ValidationError(f"cannot serialize object of type {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    """Serialize to JSON with deterministic layout and 17-digit floats."""
    out: list[str] = []
    _dump_value(obj, 0, out)
    out.append("\n")
    return "".join(out)


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: str | Path, header: list[str], rows: list[list[Any]]) -> None:
    """Write a CSV with 17-digit floats and no quoting surprises.

    Cells may be str, int, or float; values must not contain commas or
    newlines (callers use restricted code/date vocabularies).
    """
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                if "," in cell or "\n" in cell:
                    raise ValidationError(f"CSV cell may not contain commas/newlines: {cell!r}")
                cells.append(cell)
            elif isinstance(cell, (bool, np.bool_)):
                cells.append("true" if cell else "false")
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            elif isinstance(cell, (float, np.floating)):
                cells.append(format_float(float(cell)))
            else:
                raise ValidationError(f"cannot serialize CSV cell of type {type(cell).__name__}")
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read a simple comma-separated file; returns (header, rows)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln != ""]
    if not lines:
        raise ValidationError(f"{path}: empty file")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]
