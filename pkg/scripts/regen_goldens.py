#!/usr/bin/env python3
"""Rewrite tests/golden/*.trace from the matching .lio cases.

Run after an intentional change to the trace format or a rule; review the
diff before committing.
"""

import argparse
import sys
from pathlib import Path

from liocell.harness.golden import render_file

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--check", action="store_true", help="only report stale files")
    args = ap.parse_args()
    stale = 0
    for case in sorted(GOLDEN.glob("*.lio")):
        out = case.with_suffix(".trace")
        text = render_file(case)
        if out.exists() and out.read_text() == text:
            continue
        stale += 1
        if args.check:
            print(f"stale: {out.name}")
        else:
            out.write_text(text)
            print(f"wrote {out.name}")
    return 1 if args.check and stale else 0


if __name__ == "__main__":
    sys.exit(main())
