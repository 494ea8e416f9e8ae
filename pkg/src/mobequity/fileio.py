"""Small file-output helpers shared by the generator and pipeline stages.

Outputs are written to a temp name in the destination directory and
renamed into place only on success, so a failed stage never leaves a
partial file behind. Floats are formatted with ``repr`` (shortest
round-trip), which keeps reruns byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Sequence


def fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


@contextmanager
def atomic_text(path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with atomic_text(path) as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path: str | Path, obj) -> None:
    with atomic_text(path) as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def read_csv_rows(path: str | Path, expected_header: Sequence[str]) -> list[list[str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        header = f.readline().rstrip("\r\n")
        if header != ",".join(expected_header):
            raise ValueError(f"{path}: unexpected header {header!r}")
        return [line.rstrip("\r\n").split(",") for line in f if line.strip()]
