"""Output-file helpers: atomic writes and self-describing metadata comments."""

from __future__ import annotations

import json
import os
import tempfile
from typing import Any, Mapping


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file + rename in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def metadata_comments(meta: Mapping[str, Any] | None) -> str:
    """``# key = value`` comment block prepended to delimited outputs."""
    if not meta:
        return ""
    lines = []
    for key, value in meta.items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value, sort_keys=True, separators=(",", ":"))
        lines.append(f"# {key} = {value}")
    return "\n".join(lines) + "\n"


def format_cell(value: Any) -> str:
    """Round-trip-exact text for one CSV cell."""
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(
    path: str | os.PathLike,
    header: list[str],
    rows: list[list[Any]],
    meta: Mapping[str, Any] | None = None,
) -> None:
    lines = [metadata_comments(meta)]
    lines.append(",".join(header) + "\n")
    for row in rows:
        lines.append(",".join(format_cell(cell) for cell in row) + "\n")
    atomic_write_text(path, "".join(lines))


def write_json(path: str | os.PathLike, payload: Mapping[str, Any]) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
