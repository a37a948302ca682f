"""Instruction templates: loading the shipped defaults and safe rendering.

Templates are plain text files with ``{placeholder}`` slots so operators can
edit them without touching code. Rendering validates required placeholders
up front and fails loudly on unknown ones.
"""

from __future__ import annotations

import string
from importlib import resources


class TemplateError(ValueError):
    pass


def placeholders(template: str) -> set[str]:
    try:
        return {
            name
            for _, name, _, _ in string.Formatter().parse(template)
            if name is not None
        }
    except ValueError as exc:
        raise TemplateError(f"unparseable template: {exc}")


def require_placeholders(template: str, required: tuple[str, ...]) -> None:
    missing = set(required) - placeholders(template)
    if missing:
        raise TemplateError(f"template missing placeholders: {sorted(missing)}")


def render(template: str, **values: str) -> str:
    present = placeholders(template)
    unknown = present - set(values)
    if unknown:
        raise TemplateError(f"template has unknown placeholders: {sorted(unknown)}")
    return template.format(**values)


def load_default(name: str) -> str:
    """Read one of the packaged default templates by stem name."""
    ref = resources.files("adrcm.data.templates").joinpath(f"{name}.txt")
    return ref.read_text(encoding="utf-8")
