"""Print a comparison table from the summaries written by run_desk_suite.sh.

Usage: python3 scripts/summarize.py <output-root>
"""

import csv
import json
import sys
from pathlib import Path


def seed_summaries(root: Path, experiment: str) -> dict[int, dict]:
    out = {}
    for p in sorted((root / experiment).glob("*/summary.json")):
        out[int(p.parent.name)] = json.loads(p.read_text())
    return out


def lattice(root: Path) -> None:
    bridge = seed_summaries(root, "bridge-25g")
    if not bridge:
        return
    print("\n25-Gaussians: end-of-run KDE log-likelihood (modes at end of Step II for the bridge)")
    kinds = sorted(p.name.removeprefix("baseline-") for p in root.glob("baseline-*"))
    print("seed  bridge          " + "  ".join(f"{k:>8}" for k in kinds))
    for seed, s in bridge.items():
        cells = []
        for k in kinds:
            b = seed_summaries(root / f"baseline-{k}", "baseline-25g").get(seed)
            cells.append(f"{b['final']['kde_ll']:8.2f}" if b and b.get("final") else f"{'-':>8}")
        print(f"{seed:4d}  {s['final']['kde_ll']:7.2f} ({s['modes_end_step2']:2d})  " + "  ".join(cells))


def forgetting(root: Path) -> None:
    runs = seed_summaries(root, "forgetting")
    if not runs:
        return
    print("\nForgetting probe: coverage start -> after pure RKL / after bridge Step II")
    for seed, s in runs.items():
        print(f"{seed:4d}  {s['coverage_start']:2d} -> {s['coverage_rkl']:2d} / {s['coverage_bridge']:2d}")


def gmm1d(root: Path) -> None:
    rows = []
    for p in sorted(root.glob("gmm1d-*/gmm1d-suite/summary.json")):
        s = json.loads(p.read_text())
        rows.append(f"{s['method']:>12}  {s['successes']}/{len(s['seeds'])}")
    if rows:
        print("\n1-D mixture, two-component model: successes")
        print("\n".join(rows))


def variance(root: Path) -> None:
    for p in sorted((root / "variance-study").glob("*/variance_*.csv")):
        print(f"\n{p.stem}: variance by alpha (F / R / combined, param mu)")
        table: dict[str, dict[str, float]] = {}
        with open(p) as fh:
            for r in csv.DictReader(fh):
                if r["param"] == "mu":
                    table.setdefault(r["alpha"], {})[r["estimator"]] = float(r["variance"])
        for a, v in table.items():
            print(f"  {a:>4}  {v['F']:10.4g}  {v['R']:10.4g}  {v['combined']:10.4g}")


def main(argv: list[str]) -> int:
    root = Path(argv[1] if len(argv) > 1 else "runs")
    variance(root)
    lattice(root)
    forgetting(root)
    gmm1d(root)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
