"""Prompt templates shipped as text resources.

Templates use ``{input_question}``, ``{responses}``, and ``{n_aug}``
placeholders and are loaded verbatim (trailing newline stripped).
"""

from __future__ import annotations

from importlib import resources


def load_template(name: str) -> str:
    text = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return text.rstrip("\n")
