"""Prompt templates: plain text files with ``$name`` placeholders."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from string import Template
from typing import Any

TEMPLATE_NAMES = ("splitter", "boundary", "region_selector", "mutation_selector", "injector")


def load_template(name: str, template_dir: str | Path | None = None) -> Template:
    if template_dir is not None:
        override = Path(template_dir) / f"{name}.txt"
        if override.is_file():
            return Template(override.read_text(encoding="utf-8"))
    text = resources.files("bugsynth.agents.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)


def render(name: str, template_dir: str | Path | None = None, **values: Any) -> str:
    """Fill a template; a missing placeholder value is a ``KeyError``."""
    return load_template(name, template_dir).substitute({k: str(v) for k, v in values.items()})
