#!/usr/bin/env python3
"""Rebuild src/kslat/data/manifest.json from the brute-force oracles."""

import hashlib
import json
from pathlib import Path

from kslat.datasets import SHIPPED, load, shipped_path
from kslat.oracles import census

OUT = Path(__file__).resolve().parents[1] / "src" / "kslat" / "data" / "manifest.json"


def main() -> None:
    entries = {}
    for name in SHIPPED:
        path = shipped_path(name)
        config = load(name)
        entries[name] = {
            "file": path.name,
            "file_sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
            "config_hash": config.hash,
            **census(config, enumerate_colourings=len(config) <= 18),
        }
    OUT.write_text(json.dumps({"version": 1, "datasets": entries}, indent=2) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
