#!/usr/bin/env python3
"""Download a TU-Dortmund benchmark (MUTAG, PROTEINS, IMDB-BINARY, ...) into
data/<NAME>/ so the dataset-gated tests and the stats/augment commands can
run. Needs network access.

Usage: python scripts/fetch_tu_dataset.py MUTAG [PROTEINS ...]
"""
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

BASE_URL = "https://www.chrsmrrs.com/graphkerneldatasets"


def fetch(name: str, dest_root: Path) -> None:
    url = f"{BASE_URL}/{name}.zip"
    print(f"fetching {url}")
    with urllib.request.urlopen(url) as response:
        payload = response.read()
    dest_root.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        for member in zf.namelist():
            # archives nest files under <NAME>/
            rel = Path(member)
            if rel.suffix != ".txt":
                continue
            target = dest_root / name / rel.name
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(zf.read(member))
            print(f"  wrote {target}")


def main() -> int:
    names = sys.argv[1:] or ["MUTAG"]
    root = Path(__file__).resolve().parents[1] / "data"
    for name in names:
        fetch(name, root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
