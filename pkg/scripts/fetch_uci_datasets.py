#!/usr/bin/env python3
"""Download the UCI datasets used by the acceptance benchmarks.

Writes breast-cancer-wisconsin.data, parkinsons.data, and yeast.data into
the target directory (default: <repo>/data) and verifies their shapes.
Requires direct network access to archive.ics.uci.edu.
"""

import argparse
import sys
import urllib.request
from pathlib import Path

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases"

FILES = {
    "breast-cancer-wisconsin.data":
        (f"{BASE}/breast-cancer-wisconsin/breast-cancer-wisconsin.data", 699),
    "parkinsons.data": (f"{BASE}/parkinsons/parkinsons.data", 196),  # incl. header
    "yeast.data": (f"{BASE}/yeast/yeast.data", 1484),
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", default=Path(__file__).resolve().parent.parent / "data",
                        type=Path)
    args = parser.parse_args()
    args.dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for name, (url, expected_lines) in FILES.items():
        target = args.dir / name
        if target.exists():
            print(f"{name}: already present")
            continue
        try:
            print(f"fetching {url}")
            with urllib.request.urlopen(url, timeout=60) as resp:
                body = resp.read()
            lines = sum(1 for ln in body.decode().splitlines() if ln.strip())
            if lines != expected_lines:
                print(f"{name}: unexpected line count {lines} "
                      f"(expected {expected_lines}); not written", file=sys.stderr)
                failures += 1
                continue
            target.write_bytes(body)
            print(f"{name}: wrote {len(body)} bytes ({lines} lines)")
        except OSError as exc:
            print(f"{name}: download failed: {exc}", file=sys.stderr)
            failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
