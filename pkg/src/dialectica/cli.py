"""Command-line entry point: run-experiment, run-tournament, analyze."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .common import sha256_text, write_json
from .config import ConfigError
from .orchestrator import ExperimentConfig, Orchestrator
from .prompts import template_hashes
from .providers import ProviderConfigError, chat_from_spec
from .questions import BANK_SHA256, CATEGORIES
from .ranking import (
    alpha_sweep,
    bootstrap_masses,
    btd_fit,
    calibration,
    elo_run,
    mcc_analysis,
    payoff_matrix,
)
from .tournament import generate_pairings, load_matches, load_snapshots, run_tournament

log = logging.getLogger("dialectica")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_TOURNAMENT = 0, 1, 2, 3
CONTEST_COUNT_NOTE = ("Elo is reported both as the chronological final rating and as the mean over seeded "
                      "permutations of match order. Contest counts of 800 and of 1000 have both been reported "
                      "for this design, so the count used here is stated explicitly in n_matches.")


def _load_providers(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _run_manifest(command: str, args: dict, **extra) -> dict:
    return {"tool": "dialectica", "version": __version__, "command": command, "args": args,
            "question_bank_sha256": BANK_SHA256, "template_sha256": template_hashes(), **extra}


# -- run-experiment ------------------------------------------------------------


def cmd_run_experiment(args) -> int:
    if not args.config or not Path(args.config).is_file():
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        providers = _load_providers(args.providers)
        if "chat" in providers:
            data["model"] = providers["chat"]
        if "embedding" in providers:
            data["embedding"] = providers["embedding"]
        if "search" in providers:
            data["search"] = providers["search"]
        if args.seed is not None:
            data["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(data)
        out = Path(args.out or "runs/" + cfg.condition_label)
        orch = Orchestrator(cfg, out, base_dir=Path(args.config).parent)
    except (ConfigError, ProviderConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code = orch.run()
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    manifest.update(_run_manifest("run-experiment", {"config": Path(args.config).name, "seed": cfg.seed}))
    write_json(out / "manifest.json", manifest)
    print(f"run-experiment: {len(orch.topics_completed)}/{len(cfg.topics)} topics completed -> {out}")
    return EXIT_OK if code == 0 else EXIT_FAIL


# -- run-tournament --------------------------------------------------------------


def cmd_run_tournament(args) -> int:
    try:
        providers = _load_providers(args.providers)
        snapshots = [s for d in args.snapshots for s in load_snapshots(d)]
        contestant = chat_from_spec(providers.get("chat"))
        judge = chat_from_spec(providers.get("judge", providers.get("chat")))
    except (ProviderConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    labels = sorted({s.label for s in snapshots})
    if len(labels) < 2:
        print("error: need snapshots from at least two conditions", file=sys.stderr)
        return EXIT_USAGE
    personas = sorted(set.intersection(*[{s.persona for s in snapshots if s.label == lab} for lab in labels]))
    if not personas:
        print("error: no persona is present in every condition", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if args.seed is not None else 0
    contests = generate_pairings(labels, personas, args.contests, seed)
    out = Path(args.out or "matches.jsonl")
    started = time.time()
    result = run_tournament(snapshots, contests, contestant, judge, out, resume=args.resume, seed=seed)
    write_json(out.with_name("manifest.json"), _run_manifest(
        "run-tournament", {"snapshots": [Path(d).name for d in args.snapshots], "contests": args.contests,
                           "seed": seed, "resume": args.resume},
        conditions=labels, personas=personas,
        providers={"contestant": contestant.provider_id, "judge": judge.provider_id},
        started=started, finished=time.time(), valid_matches=len(result.matches),
        invalid_verdicts=result.invalid, elicitation_failures=result.skipped))
    print(f"run-tournament: {len(result.matches)} valid matches, {result.invalid} invalid, "
          f"{result.skipped} skipped -> {out}")
    if result.exit_code:
        print(f"error: failure rate {result.failure_rate:.1%} exceeds 10%", file=sys.stderr)
    return result.exit_code


# -- analyze ----------------------------------------------------------------------


def analyze(matches, out_dir: Path, *, kappa: float = 1.0, bootstrap: int = 200, epsilon: float = 0.02,
            permutations: int = 100, seed: int = 0) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    warnings = []
    elo = elo_run(matches, permutations=permutations, seed=seed)
    order = sorted(range(len(elo.agents)), key=lambda k: (-elo.mean[k], elo.agents[k]))
    best = elo.agents[order[0]]
    seen = {m.context for m in matches}
    contexts = [c for c in CATEGORIES if c in seen] + sorted(seen - set(CATEGORIES))
    fit = btd_fit(matches, reference=best, contexts=contexts)
    if fit.message:
        warnings.append(fit.message)
    calib = calibration(matches, fit)
    payoff = payoff_matrix(matches, elo.agents, kappa)
    sweep = alpha_sweep(payoff)
    if not sweep.plateau_found:
        warnings.append("no alpha plateau found; using the largest grid point")
    sweep.mccs = mcc_analysis(payoff, epsilon)
    if bootstrap > 0:
        boot = bootstrap_masses(matches, bootstrap, sweep.plateau_alpha, seed=seed, kappa=kappa, agents=elo.agents)
        sweep.bands = boot["bands"]
    nrm = fit.normalized_ability()
    mass = sweep.plateau_masses
    rows = []
    for k in order:
        a = elo.agents[k]
        rows.append({"condition": a, "Elo": float(elo.mean[k]), "BTDnrm": nrm.get(a, float("nan")),
                     "s": fit.s.get(a, float("nan")), "mass": mass[a]})
    with open(out_dir / "tables.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["condition", "Elo", "BTDnrm", "s", "mass"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})
    with open(out_dir / "reliability.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["bin", "lo", "hi", "mean_predicted", "empirical", "count"])
        w.writeheader()
        w.writerows(calib.reliability)
    with open(out_dir / "masses_by_alpha.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", *sweep.agents])
        for a, row in zip(sweep.alpha_grid, sweep.masses):
            w.writerow([f"{a:.6g}", *[f"{x:.8f}" for x in row]])
    report = {
        "n_matches": len(matches),
        "table": rows,
        "elo": {"k_factor": 32, "initial": 1200, "permutations": permutations,
                "column": "mean over permutations", "ratings": elo.as_dict()},
        "btd": fit.as_dict(),
        "calibration": calib.as_dict(),
        "payoff": payoff.as_dict(),
        "alpharank": sweep.as_dict(),
        "mcc_epsilon": epsilon,
        "bootstrap": {"B": bootstrap, "seed": seed},
        "notes": {"reference_agent": f"s is fixed at 0 for the best-Elo condition ({best})",
                  "contest_count": CONTEST_COUNT_NOTE},
        "warnings": warnings,
    }
    write_json(out_dir / "report.json", report)
    return report


def cmd_analyze(args) -> int:
    path = Path(args.matches)
    if not path.is_file():
        print(f"error: matches file not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    matches = load_matches(path)
    if not matches:
        print("error: no matches to analyze", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or path.parent / "analysis")
    seed = args.seed if args.seed is not None else 0
    report = analyze(matches, out, kappa=args.kappa, bootstrap=args.bootstrap, epsilon=args.epsilon,
                     permutations=args.permutations, seed=seed)
    write_json(out / "manifest.json", _run_manifest(
        "analyze", {"matches": path.name, "kappa": args.kappa, "bootstrap": args.bootstrap,
                    "epsilon": args.epsilon, "permutations": args.permutations, "seed": seed},
        matches_sha256=sha256_text(path.read_text(encoding="utf-8"))))
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(f"analyze: {report['n_matches']} matches -> {out}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("--providers", default=argparse.SUPPRESS, help="JSON file with chat/judge/embedding/search")

    p = argparse.ArgumentParser(prog="dialectica", description=__doc__)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--providers", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("run-experiment", parents=[common], help="run one experimental condition")
    e.add_argument("--config", required=True)
    e.set_defaults(func=cmd_run_experiment)

    t = sub.add_parser("run-tournament", parents=[common], help="judge same-persona contests across conditions")
    t.add_argument("--snapshots", nargs="+", required=True, help="experiment output directories")
    t.add_argument("--contests", type=int, default=1000)
    t.add_argument("--resume", action="store_true")
    t.set_defaults(func=cmd_run_tournament)

    a = sub.add_parser("analyze", parents=[common], help="Elo, BTD, calibration and AlphaRank reports")
    a.add_argument("--matches", required=True)
    a.add_argument("--kappa", type=float, default=1.0)
    a.add_argument("--bootstrap", type=int, default=200)
    a.add_argument("--epsilon", type=float, default=0.02)
    a.add_argument("--permutations", type=int, default=100)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
