"""Normalized BTD ability from published ability estimates.

Feeds a set of fitted abilities (reference condition pinned at 0) into
exp(s) / mean(exp(s)) and prints them next to the published normalized values.

    python3 scripts/btdnrm_regression.py
"""

from dialectica.ranking import btd_normalized_ability

PUBLISHED = {
    "baseline": (-1.0485, 0.622),
    "mem": (-1.0645, 0.612),
    "mem_web": (-1.1508, 0.561),
    "mem_evo": (-0.2137, 1.432),
    "mem_evo_web": (0.0, 1.773),
}


def main() -> None:
    got = btd_normalized_ability([s for s, _ in PUBLISHED.values()])
    print(f"{'condition':>12} {'s':>8} {'published':>9} {'computed':>9} {'diff':>8}")
    for (name, (s, ref)), x in zip(PUBLISHED.items(), got):
        print(f"{name:>12} {s:8.4f} {ref:9.3f} {x:9.4f} {x - ref:8.4f}")


if __name__ == "__main__":
    main()
