"""Prompt templates stored as text files with ``[system]`` / ``[user]`` sections.

Placeholders look like ``{name}`` or ``{obj.field}``. Anything else in braces
(JSON examples, for instance) is left untouched.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import TemplateError

_PLACEHOLDER = re.compile(r"\{([a-z_]+(?:\.[a-z_]+)?)\}")
_SECTION = re.compile(r"^\[(system|user)\]\s*$", re.MULTILINE)


def render(template: str, context: Mapping[str, Any]) -> str:
    def sub(m: re.Match) -> str:
        key = m.group(1)
        head, _, attr = key.partition(".")
        if head not in context:
            raise TemplateError(f"unbound placeholder {{{key}}}")
        value = context[head]
        if attr:
            if isinstance(value, Mapping):
                if attr not in value:
                    raise TemplateError(f"unbound placeholder {{{key}}}")
                value = value[attr]
            elif hasattr(value, attr):
                value = getattr(value, attr)
            else:
                raise TemplateError(f"unbound placeholder {{{key}}}")
        return str(value)

    return _PLACEHOLDER.sub(sub, template)


class PromptLibrary:
    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._cache: dict[str, tuple[str, str]] = {}

    def _read(self, name: str) -> str:
        if self.directory is not None:
            path = self.directory / f"{name}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        res = resources.files("qgflow") / "prompts" / f"{name}.txt"
        if not res.is_file():
            raise TemplateError(f"no template named {name!r}")
        return res.read_text(encoding="utf-8")

    def sections(self, name: str) -> tuple[str, str]:
        if name not in self._cache:
            raw = self._read(name)
            parts = _SECTION.split(raw)
            found = {parts[i]: parts[i + 1].strip() for i in range(1, len(parts) - 1, 2)}
            if set(found) != {"system", "user"}:
                raise TemplateError(f"template {name!r} needs [system] and [user] sections")
            self._cache[name] = (found["system"], found["user"])
        return self._cache[name]

    def render(self, name: str, **context: Any) -> tuple[str, str]:
        system, user = self.sections(name)
        return render(system, context), render(user, context)
