"""Delimited-file plumbing: provenance headers, hashing, and the run manifest.

Every artifact the toolkit writes is a comma-delimited text file that starts
with ``# key: value`` provenance comments, then a header row, then data rows.
Values are deterministic (no timestamps), so re-running a stage with the same
inputs yields byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError

TOOL_VERSION = "0.1.0"


def fmt_num(value) -> str:
    """Canonical text for a number: ints bare, floats via repr (round-trip exact)."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode("utf-8"))


def render_delimited(
    header: Sequence[str],
    rows: Iterable[Sequence[str]],
    provenance: dict[str, str] | None = None,
) -> str:
    """Render a delimited artifact to a string (rows are pre-formatted fields)."""
    buf = io.StringIO()
    for key, value in (provenance or {}).items():
        buf.write(f"# {key}: {value}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_delimited(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[str]],
    provenance: dict[str, str] | None = None,
) -> None:
    text = render_delimited(header, rows, provenance)
    Path(path).write_text(text, encoding="utf-8", newline="")


def read_delimited(path: str | Path):
    """Parse a delimited artifact.

    Returns (provenance, header, rows) where rows are
    (line_number, [field, ...]) tuples. Quoted fields are unescaped by the
    csv reader; ``#`` comment lines feed the provenance dict.
    """
    path = Path(path)
    provenance: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[tuple[int, list[str]]] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            if not stripped:
                continue
            if stripped.startswith("#"):
                body = stripped.lstrip("#").strip()
                if ":" in body:
                    key, _, value = body.partition(":")
                    provenance[key.strip()] = value.strip()
                continue
            fields = next(csv.reader([stripped]))
            if header is None:
                header = fields
            else:
                rows.append((lineno, fields))
    if header is None:
        raise FormatError(str(path), 1, "file has no header row")
    return provenance, header, rows


def provenance_for(
    artifact: str,
    seed: int | None = None,
    inputs: dict[str, str] | None = None,
    extra: dict[str, str] | None = None,
) -> dict[str, str]:
    """Standard provenance block: artifact kind, tool version, seed, input hashes."""
    out = {"artifact": artifact, "tool_version": TOOL_VERSION}
    if seed is not None:
        out["seed"] = str(seed)
    for name, digest in (inputs or {}).items():
        out[f"input_{name}"] = digest
    out.update(extra or {})
    return out


def write_manifest(run_dir: str | Path, filenames: Sequence[str]) -> Path:
    """Write ``manifest.txt`` listing the sha256 of each named artifact in run_dir."""
    run_dir = Path(run_dir)
    lines = [f"# artifact: manifest\n# tool_version: {TOOL_VERSION}\n"]
    for name in sorted(filenames):
        digest = sha256_file(run_dir / name)
        lines.append(f"{digest}  {name}\n")
    path = run_dir / "manifest.txt"
    path.write_text("".join(lines), encoding="utf-8", newline="")
    return path


def ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
