"""Prompt asset loading.

Prompts are versioned text files shipped with the package, one per step.
Placeholders use ``{name}`` syntax and are substituted literally, so prompt
text may otherwise contain braces freely.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Read a prompt asset, e.g. ``"base"`` or ``"judge/statements"``."""
    root = resources.files("mrrag.prompts")
    path = root.joinpath(*f"{name}.txt".split("/"))
    return path.read_text(encoding="utf-8")


def render_prompt(name: str, **fields: str) -> str:
    text = load_prompt(name)
    for key, value in fields.items():
        text = text.replace("{" + key + "}", value)
    return text
