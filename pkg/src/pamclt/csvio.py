"""CSV emission with provenance headers and data checksums.

Every file starts with comment lines carrying the tool version and the
config hash; the sha256 of the data body (everything after the comments)
is recorded in the run manifest so the verify workflow can refuse
tampered or mismatched inputs.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from . import __version__


class IntegrityError(Exception):
    """Checksum or config-hash mismatch between files of a run."""


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, config_hash: str, columns, rows) -> str:
    """Write a header-commented CSV; returns the sha256 of the data body."""
    body_lines = [",".join(columns)]
    for row in rows:
        body_lines.append(",".join(_fmt(v) for v in row))
    body = "\n".join(body_lines) + "\n"
    header = f"# pamclt {__version__} config={config_hash}\n"
    Path(path).write_text(header + body)
    return hashlib.sha256(body.encode()).hexdigest()


def read_csv(path, expect_config_hash=None):
    """Read a header-commented CSV; returns (columns, rows, body_sha256)."""
    text = Path(path).read_text()
    lines = text.splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    data = [ln for ln in lines if not ln.startswith("#") and ln.strip()]
    if expect_config_hash is not None:
        ok = any(f"config={expect_config_hash}" in c for c in comments)
        if not ok:
            raise IntegrityError(f"{path}: config hash mismatch (expected {expect_config_hash})")
    if not data:
        raise IntegrityError(f"{path}: no data rows")
    body = "\n".join(data) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    columns = data[0].split(",")
    rows = [ln.split(",") for ln in data[1:]]
    return columns, rows, digest
