"""Shipped ray configurations and block-embedding helpers."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .errors import ParseError
from .exact import ZERO
from .projlattice import RayConfiguration, load_ray_configuration

SHIPPED = ("basis3", "dim2_pairs", "peres33", "cabello18")
# uncolourable sets by dimension; larger blocks use direct sums of these
KS_SETS = {3: "peres33", 4: "cabello18"}


def data_dir() -> Path:
    return Path(str(resources.files("kslat") / "data"))


def shipped_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".rays") else name
    if stem not in SHIPPED:
        raise ParseError(f"no shipped dataset called {name!r}")
    return data_dir() / f"{stem}.rays"


def resolve_path(path: str | Path) -> Path:
    """``path`` itself if it exists, else the shipped file with that name
    (``peres33`` and ``peres33.rays`` both resolve)."""
    p = Path(path)
    if p.exists():
        return p
    if p.suffix in ("", ".rays") and p.parent == Path(".") and p.stem in SHIPPED:
        return shipped_path(p.stem)
    return p


def load(name: str) -> RayConfiguration:
    return load_ray_configuration(shipped_path(name))


def manifest() -> dict:
    return json.loads((data_dir() / "manifest.json").read_text())


def direct_sum(*configs: RayConfiguration) -> RayConfiguration:
    """Rays of each summand padded with zeros into C^{Σ d_k}."""
    if any(not c.exact for c in configs):
        raise ParseError("direct sums are built from exact configurations only")
    dim = sum(c.dim for c in configs)
    vectors, labels, off = [], [], 0
    for k, c in enumerate(configs):
        for ray in c.rays:
            vectors.append([ZERO] * off + list(ray.vector) + [ZERO] * (dim - off - c.dim))
            labels.append(f"s{k}.{ray.label}")
        off += c.dim
    return RayConfiguration.from_vectors(dim, vectors, labels, mode="exact")


def block_split(n: int) -> list[int]:
    """Write n as a sum of 3s and 4s (fewest parts)."""
    if n in (3, 4):
        return [n]
    if n < 6:
        raise ValueError(f"no shipped uncolourable set fits a block of size {n}")
    fours = next(f for f in range(n // 4, -1, -1) if (n - 4 * f) % 3 == 0)
    return [4] * fours + [3] * ((n - 4 * fours) // 3)


def ks_configuration(n: int) -> RayConfiguration:
    """An uncolourable ray set in dimension n (n = 3, 4 or n >= 6).

    Sizes beyond 8 need three or more summands and the context count grows
    multiplicatively, so only n <= 8 is practical.
    """
    parts = block_split(n)
    return load(KS_SETS[parts[0]]) if len(parts) == 1 else direct_sum(*(load(KS_SETS[p]) for p in parts))
