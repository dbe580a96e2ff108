"""Prompt templates are data: text files with {name} placeholders.

Templates live in a directory (default: the packaged ``prompts/``), one file
per stage, and are interpolated with keyword values.  Placeholder tokens are
ASCII lowercase identifiers in braces; any other braces (e.g. JSON examples
inside a prompt) pass through untouched.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

_PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")


class PromptNotFound(KeyError):
    pass


class MissingPlaceholder(KeyError):
    pass


def render_template(text: str, values: dict[str, str]) -> str:
    """Substitute {name} tokens; unknown tokens raise MissingPlaceholder."""

    def replace(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise MissingPlaceholder(name)
        return str(values[name])

    return _PLACEHOLDER_RE.sub(replace, text)


class PromptLibrary:
    """Loads and renders prompt files by stem name, with custom overrides."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._cache: dict[str, str] = {}

    def raw(self, name: str) -> str:
        if name in self._cache:
            return self._cache[name]
        if self.directory is not None:
            path = self.directory / f"{name}.txt"
            if not path.exists():
                raise PromptNotFound(f"{name} (looked in {self.directory})")
            text = path.read_text(encoding="utf-8")
        else:
            ref = resources.files("clinquiry").joinpath(f"prompts/{name}.txt")
            try:
                text = ref.read_text(encoding="utf-8")
            except FileNotFoundError:
                raise PromptNotFound(name) from None
        self._cache[name] = text
        return text

    def render(self, name: str, **values) -> str:
        return render_template(self.raw(name), values)

    def placeholders(self, name: str) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.raw(name)))
