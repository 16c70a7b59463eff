"""Prompt catalog loaded from the bundled ``prompts/*.txt`` data files."""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

_STUDENT_BLOCK = re.compile(r"Student (\d+)'s Solution\n\{reference_\1\}\n\n")


class PromptError(KeyError):
    pass


def template_ids() -> list[str]:
    root = resources.files("anchorwork.provider") / "prompts"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


@lru_cache(maxsize=None)
def load_template(template_id: str) -> str:
    path = resources.files("anchorwork.provider") / "prompts" / f"{template_id}.txt"
    if not path.is_file():
        raise PromptError(f"unknown template {template_id!r}")
    return path.read_text(encoding="utf-8").rstrip("\n")


def placeholders(template: str) -> list[str]:
    seen = []
    for name in PLACEHOLDER.findall(template):
        if name not in seen:
            seen.append(name)
    return seen


def fill(template: str, bindings: Mapping[str, str]) -> str:
    missing = [n for n in placeholders(template) if n not in bindings]
    if missing:
        raise PromptError(f"unbound placeholder(s): {', '.join(missing)}")
    # single pass, so bound values containing braces are never re-expanded
    return PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), template)


def render_prompt(template_id: str, bindings: Mapping[str, str]) -> str:
    """Render a catalog template; extra bindings are ignored."""
    return fill(load_template(template_id), bindings)


def refinement_template(n_references: int) -> str:
    """The refinement prompt with its reference slots resized to ``n_references``."""
    base = load_template("refinement")
    blocks = list(_STUDENT_BLOCK.finditer(base))
    start, end = blocks[0].start(), blocks[-1].end()
    slots = "".join(f"Student {k}'s Solution\n{{reference_{k}}}\n\n" for k in range(1, n_references + 1))
    return base[:start] + slots + base[end:]


def render_refinement(query: str, anchor: str, references: Sequence[str]) -> str:
    bindings = {"query": query, "anchor_solution": anchor}
    bindings.update({f"reference_{k}": text for k, text in enumerate(references, start=1)})
    return fill(refinement_template(len(references)), bindings)
