"""Python access to the culturecraft simulator.

Results come back as plain dicts and lists. Experiment specs may be passed as
a dict, a JSON string, or a path to a JSON file.
"""

from __future__ import annotations

import json
import os
from typing import Any, Mapping, Optional, Union

from . import _core

SpecLike = Union[Mapping[str, Any], str, "os.PathLike[str]"]

__all__ = [
    "parse_script",
    "simulate",
    "tasks",
    "run_experiment",
    "run_population",
    "run_tech_tree",
    "pair_pool",
    "format_milestone_cell",
    "fnv1a",
]


def _spec_text(spec: SpecLike) -> str:
    if isinstance(spec, Mapping):
        return json.dumps(spec)
    if isinstance(spec, os.PathLike) or (isinstance(spec, str) and os.path.isfile(spec)):
        with open(spec, encoding="utf-8") as fh:
            return fh.read()
    return spec


def parse_script(source: str) -> dict:
    """Parses an action script; raises ValueError with line and column on bad input."""
    return json.loads(_core.parse_script(source))


def simulate(source: str, world: str = "plains", seed: int = 1,
             inventory: Optional[Mapping[str, int]] = None) -> dict:
    """Runs a script for a lone agent in a world preset and returns the trace and final state."""
    return json.loads(_core.simulate(source, world, seed, dict(inventory or {})))


def tasks() -> list:
    return json.loads(_core.tasks())


def run_experiment(spec: SpecLike, run_dir: Optional[str] = None,
                   workers: Optional[int] = None) -> dict:
    return json.loads(_core.run_experiment(_spec_text(spec), None if run_dir is None else os.fspath(run_dir), workers))


def run_population(spec: SpecLike) -> dict:
    return json.loads(_core.run_population(_spec_text(spec)))


def run_tech_tree(spec: SpecLike) -> dict:
    return json.loads(_core.run_tech_tree(_spec_text(spec)))


pair_pool = _core.pair_pool
format_milestone_cell = _core.format_milestone_cell
fnv1a = _core.fnv1a
