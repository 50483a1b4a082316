"""Writing analysis artifacts (CSV tables and SVG figures) with digests."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

from .directional import GridCellStats, grid_to_csv
from .render import grid_svgs

FORMATS = ("csv", "svg", "both")
GRID_CSV = "grid.csv"


def _write(path: Path, text: str) -> str:
    data = text.encode("utf-8")
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def write_outputs(
    grid: Sequence[GridCellStats] | None,
    tables: dict[str, str] | None,
    out_dir,
    formats: str = "both",
) -> dict[str, str]:
    """Write grid CSV, extra CSV tables and grid SVGs; return ``{file name: sha256}``.

    ``tables`` maps file names to ready CSV text. ``formats`` selects which kinds
    are emitted (the extra tables are CSV).
    """
    if formats not in FORMATS:
        raise ValueError(f"formats must be one of {FORMATS}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOError(f"cannot create {out_dir}: {exc}") from exc
    manifest: dict[str, str] = {}
    if formats in ("csv", "both"):
        if grid is not None:
            manifest[GRID_CSV] = _write(out_dir / GRID_CSV, grid_to_csv(list(grid)))
        for name, text in sorted((tables or {}).items()):
            manifest[name] = _write(out_dir / name, text)
    if formats in ("svg", "both") and grid is not None:
        for name, text in grid_svgs(list(grid)).items():
            manifest[name] = _write(out_dir / name, text)
    return dict(sorted(manifest.items()))
