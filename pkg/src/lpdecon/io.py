"""Data, configuration and report files."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidDataError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def read_data(path) -> np.ndarray:
    """Read observations, one per row.

    Fields are separated by commas or whitespace; a non-numeric first line
    is taken as a header. Blank lines are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidDataError(f"{path}: no such file")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = [f for f in (line.split(",") if "," in line else line.split())]
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                if not rows and lineno == _first_content_line(path):
                    continue
                raise InvalidDataError(f"{path}:{lineno}: cannot parse {line!r}") from None
    if not rows:
        raise InvalidDataError(f"{path}: no observations")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InvalidDataError(f"{path}: rows have differing numbers of fields {sorted(widths)}")
    Y = np.array(rows, dtype=float)
    if not np.all(np.isfinite(Y)):
        raise InvalidDataError(f"{path}: non-finite values")
    return Y


def _first_content_line(path) -> int:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                return lineno
    return 0


def write_data(path, Y, header: bool = True) -> None:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    hdr = ",".join(f"y{j + 1}" for j in range(Y.shape[1])) if header else ""
    np.savetxt(path, Y, delimiter=",", header=hdr, comments="", fmt="%.17g")


def load_config(path) -> dict:
    """Load a TOML or JSON configuration (chosen by extension, TOML otherwise)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, default=_default) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")
