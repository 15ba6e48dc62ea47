"""Batch figure rendering:  horizon-plots <spec.json> [more specs...]"""

from __future__ import annotations

import argparse
import sys

from .figspec import SpecError, load_spec
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="horizon-plots",
        description="Render figures from horizon-lab CSV outputs per JSON figure specs.",
    )
    parser.add_argument("specs", nargs="+", help="figure spec JSON files")
    args = parser.parse_args(argv)
    try:
        for spec_path in args.specs:
            out = render(load_spec(spec_path))
            print(f"wrote {out}")
        return 0
    except SpecError as exc:
        print(f"invalid figure spec: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
