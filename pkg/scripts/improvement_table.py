"""Rebuild the before/after similarity table from per-cell means.

    python scripts/improvement_table.py [cells.json] [--json out.json]
"""

import argparse
import json
from pathlib import Path

from regraph.evaluation import dump_json, inc_percent, round_half_up, table_from_cell_means

DEFAULT = Path(__file__).parent / "data" / "improvement_cells.json"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("cells", nargs="?", default=str(DEFAULT))
    ap.add_argument("--json")
    args = ap.parse_args()
    table = table_from_cell_means(json.loads(Path(args.cells).read_text()))
    print(table.format())
    g = table.global_avg
    print(f"\nInc of the global means: {round_half_up(inc_percent(g.before, g.after), 1)}%")
    if args.json:
        dump_json(table.to_dict(), args.json)


if __name__ == "__main__":
    main()
