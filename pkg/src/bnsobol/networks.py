"""Bundled benchmark networks and a loader that accepts names or paths."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .bif import read_bif
from .bn import BayesianNetwork

# bnlearn repository networks plus the three-variable disease example
BUNDLED = ("toy", "asia", "cancer", "sachs", "child", "insurance", "alarm", "hailfinder", "hepar2")


def load_network(source: str | Path) -> BayesianNetwork:
    """Load a BIF file, or a bundled network by name (``"alarm"``, ``"asia"``, ...)."""
    path = Path(source)
    if path.exists():
        return read_bif(path)
    name = str(source)
    if name not in BUNDLED:
        raise FileNotFoundError(f"{source}: no such file and not a bundled network ({', '.join(BUNDLED)})")
    data = resources.files("bnsobol") / "data"
    for fname in (f"{name}.bif", f"{name}.bif.gz"):
        res = data / fname
        if res.is_file():
            with resources.as_file(res) as p:
                return read_bif(p)
    raise FileNotFoundError(f"bundled network {name!r} is missing from the package data")
