"""Small file helpers shared by the CLI and the mock pipeline."""

from __future__ import annotations

import os


def read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename, so readers never see a torn file."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
