"""CSV artifacts with a ``#`` metadata header echoing the effective config."""
from __future__ import annotations

import datetime as _dt
import io as _io
import os
import tempfile
from pathlib import Path

from .config import config_to_yaml

__all__ = ["format_value", "render_csv", "write_artifact", "csv_body", "TIMESTAMP_PREFIX"]

TIMESTAMP_PREFIX = "# generated: "


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(int(v))
    if isinstance(v, float):
        return repr(float(v))  # shortest round-trip form, also for numpy scalars
    if isinstance(v, complex):
        return f"{float(v.real)!r}{float(v.imag):+}j"
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def render_csv(command: str, cfg: dict, columns, rows, results=None, timestamp: str | None = None) -> str:
    """Header (command, timestamp, results, config) followed by the CSV body."""
    out = _io.StringIO()
    out.write(f"# ramanconv {command}\n")
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    out.write(f"{TIMESTAMP_PREFIX}{timestamp}\n")
    for key, value in (results or {}).items():
        out.write(f"# result {key}: {format_value(value)}\n")
    out.write("# config:\n")
    for line in config_to_yaml(cfg).splitlines():
        out.write(f"#   {line}\n")
    out.write(",".join(columns) + "\n")
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        out.write(",".join(format_value(v) for v in row) + "\n")
    return out.getvalue()


def csv_body(text: str) -> str:
    """Non-comment lines of an artifact (what the determinism contract covers)."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def write_artifact(path, text: str) -> None:
    """Write atomically so a failed run never leaves a partial artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
