"""Offline end-to-end run: three scripted experiments, a scripted tournament in
which one condition is favored by the judge, then the full analysis.

    python3 scripts/smoke_pipeline.py --out /tmp/smoke --favor mem_evo_web
"""

import argparse
import csv
import json
from pathlib import Path

from dialectica.cli import main as cli

AGENTS = ["builtin:environmental_scientist", "builtin:carbon_trading_advocate"]
TOPICS = ["Carbon border adjustments", "Community consent for mining"]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/smoke")
    p.add_argument("--conditions", nargs="+", default=["baseline", "mem", "mem_evo_web"])
    p.add_argument("--favor", default="mem_evo_web")
    p.add_argument("--contests", type=int, default=300)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()

    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    runs = []
    for cond in args.conditions:
        cfg = root / f"{cond}.json"
        cfg.write_text(json.dumps({"condition": cond, "topics": TOPICS, "agents": AGENTS,
                                   "rounds_per_topic": args.rounds, "seed": args.seed, "clock": "logical",
                                   "facilitator": "passive"}))
        assert cli(["run-experiment", "--config", str(cfg), "--out", str(root / cond)]) == 0
        runs.append(str(root / cond))
    prov = root / "providers.json"
    prov.write_text(json.dumps({"chat": {"type": "scripted"},
                                "judge": {"type": "scripted_judge", "favor": args.favor}}))
    matches = root / "tournament" / "matches.jsonl"
    assert cli(["run-tournament", "--snapshots", *runs, "--contests", str(args.contests), "--providers", str(prov),
                "--out", str(matches), "--seed", str(args.seed)]) == 0
    assert cli(["analyze", "--matches", str(matches), "--out", str(root / "analysis")]) == 0
    with open(root / "analysis" / "tables.csv") as fh:
        for row in csv.reader(fh):
            print("  ".join(f"{c:>12}" for c in row))


if __name__ == "__main__":
    main()
