"""Small offline experiment runs shared by the tournament, CLI and acceptance tests."""

from pathlib import Path

from dialectica.orchestrator import ExperimentConfig, run_experiment

SMOKE_AGENTS = ["builtin:environmental_scientist", "builtin:carbon_trading_advocate"]
SMOKE_TOPICS = ["Carbon border adjustments", "Community consent for mining"]


def smoke_runs(root: Path, conditions=("baseline", "mem", "mem_evo_web"), rounds: int = 2, seed: int = 7) -> list[Path]:
    dirs = []
    for cond in conditions:
        cfg = ExperimentConfig(condition=cond, topics=SMOKE_TOPICS, agents=SMOKE_AGENTS, rounds_per_topic=rounds,
                               seed=seed, clock="logical", facilitator="passive")
        out = Path(root) / cond
        assert run_experiment(cfg, out) == 0
        dirs.append(out)
    return dirs
