import json
from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from dialectica.providers import ScriptedChat
from dialectica.questions import load_question_bank, question_by_id
from dialectica.scripted import default_responder, make_judge_responder
from dialectica.tournament import (
    MAX_FAILURE_RATE,
    VerdictError,
    draw_order_flip,
    elicitation_prompt,
    generate_pairings,
    judge,
    load_matches,
    load_snapshots,
    map_outcome,
    parse_verdict,
    run_tournament,
)

from .helpers import smoke_runs

Q = load_question_bank()[0]


@pytest.fixture(scope="module")
def snapshots(tmp_path_factory):
    dirs = smoke_runs(tmp_path_factory.mktemp("runs"))
    return [s for d in dirs for s in load_snapshots(d)]


def personas_of(snaps):
    return sorted({s.persona for s in snaps})


# -- verdict grammar ----------------------------------------------------------


@pytest.mark.parametrize("text,side", [
    ("WINNER: A\nREASONING: because", "first"),
    ("WINNER: B\nREASONING: because", "second"),
    ("WINNER: X\nREASONING: because", "first"),
    ("WINNER: Y\nREASONING: because", "second"),
    ("WINNER: TIE\nREASONING: close", "tie"),
    ("winner: [y]\nreasoning: lower case", "second"),
    ("**WINNER: X**\n**REASONING:** bold", "first"),
    ("\n  WINNER: Y  \n\nREASONING: padded\nmore", "second"),
])
def test_parser_accepts(text, side):
    assert parse_verdict(text)[0] == side


@pytest.mark.parametrize("text", [
    "", "WINNER: X", "REASONING: x\nWINNER: X", "WINNER: Z\nREASONING: r", "WINNER: X or Y\nREASONING: r",
    "The winner is X\nREASONING: r", "WINNER: X\nREASONING:", "WINNER: AB\nREASONING: r",
])
def test_parser_rejects(text):
    with pytest.raises(VerdictError):
        parse_verdict(text)


def test_order_flip_hand_traces():
    assert map_outcome("first", False) == "W"
    assert map_outcome("second", False) == "L"
    assert map_outcome("first", True) == "L"
    assert map_outcome("second", True) == "W"
    assert map_outcome("tie", True) == map_outcome("tie", False) == "D"


@given(st.sampled_from(["first", "second", "tie"]), st.booleans())
def test_order_flip_is_involutive(side, flip):
    other = {"first": "second", "second": "first", "tie": "tie"}[side]
    assert map_outcome(side, flip) == map_outcome(other, not flip)


def test_judge_y_with_flip_is_a_win_for_i():
    seed = next(s for s in range(100) if draw_order_flip(s))
    provider = ScriptedChat(lambda req: "WINNER: Y\nREASONING: scripted")
    outcome, flip, _ = judge(Q, "response of i", "response of j", seed, provider)
    assert flip and outcome == "W"
    assert "Response Y: response of i" in provider.calls[0].prompt


def test_judge_reasks_once_then_fails():
    replies = iter(["garbage", "WINNER: X\nREASONING: ok"])
    provider = ScriptedChat(lambda req: next(replies))
    outcome, flip, _ = judge(Q, "a", "b", 3, provider)
    assert outcome == ("L" if flip else "W")
    assert len(provider.calls) == 2 and "did not follow the required format" in provider.calls[1].prompt
    with pytest.raises(VerdictError):
        judge(Q, "a", "b", 3, ScriptedChat(lambda req: "no idea"))


def test_flip_proportion():
    contests = generate_pairings(["a", "b", "c"], ["p"], 1000, seed=0)
    share = sum(draw_order_flip(c.seed) for c in contests) / 1000
    assert 0.45 <= share <= 0.55


# -- pairings -----------------------------------------------------------------


def test_pairings_cover_every_pair_and_are_seeded():
    conds = ["baseline", "mem", "mem_web", "mem_evo", "mem_evo_web"]
    c1 = generate_pairings(conds, ["p1", "p2"], 10, seed=5)
    assert {(c.side_i, c.side_j) for c in c1} == set(combinations(sorted(conds), 2))
    assert c1 == generate_pairings(conds, ["p1", "p2"], 10, seed=5)
    assert c1 != generate_pairings(conds, ["p1", "p2"], 10, seed=6)
    assert len({c.id for c in generate_pairings(conds, ["p"], 300, seed=1)}) == 300


def test_pairings_validate():
    with pytest.raises(ValueError):
        generate_pairings(["a"], ["p"], 5, 0)
    with pytest.raises(ValueError):
        generate_pairings(["a", "b"], [], 5, 0)


# -- elicitation --------------------------------------------------------------


def test_elicitation_modes(snapshots):
    base = next(s for s in snapshots if s.condition == "baseline")
    mem = next(s for s in snapshots if s.condition == "mem_evo_web")
    p = elicitation_prompt(base, Q)
    assert p.startswith(f"You are a {base.config.name}.") and "Learning context" not in p
    p = elicitation_prompt(mem, question_by_id("climate_policy-3"))
    assert f"Your worldview perspective: {mem.config.perspective}" in p
    assert "Learning context from your previous debates:" in p


def test_snapshots_are_final_after_topic(snapshots):
    assert {s.path.name for s in snapshots} == {"after-topic-02"}
    assert len(snapshots) == 6


# -- tournament loop ----------------------------------------------------------


def run(snapshots, tmp_path, n=60, judge_fn=None, contestant=None, resume=False, contests=None):
    labels = sorted({s.label for s in snapshots})
    contests = contests or generate_pairings(labels, personas_of(snapshots), n, seed=2)
    contestant = contestant or ScriptedChat()
    judge_chat = ScriptedChat(judge_fn or make_judge_responder())
    res = run_tournament(snapshots, contests, contestant, judge_chat, tmp_path / "matches.jsonl",
                         resume=resume, seed=2)
    return res, contestant, contests


def test_tournament_runs_and_caches(snapshots, tmp_path):
    res, contestant, contests = run(snapshots, tmp_path, n=200)
    assert len(res.matches) == 200 and res.exit_code == 0
    assert res.elicitations == len(contestant.calls) <= len(snapshots) * 25
    assert {c.tag["phase"] for c in contestant.calls} == {"tournament"}
    keys = [f"{c.tag['condition']}|{c.tag['persona']}|{c.tag['question']}" for c in contestant.calls]
    assert len(keys) == len(set(keys))
    recs = load_matches(tmp_path / "matches.jsonl")
    assert [m.contest_id for m in recs] == [c.id for c in contests]
    assert {m.outcome for m in recs} <= {"W", "D", "L"}


def test_tournament_never_searches(snapshots, tmp_path):
    _, contestant, _ = run(snapshots, tmp_path, n=20)
    for req in contestant.calls:
        assert "TOOL_CALL" not in req.prompt


def test_resume_has_no_duplicates(snapshots, tmp_path):
    labels = sorted({s.label for s in snapshots})
    contests = generate_pairings(labels, personas_of(snapshots), 40, seed=2)
    run(snapshots, tmp_path, contests=contests[:25])
    res, contestant, _ = run(snapshots, tmp_path, contests=contests, resume=True)
    ids = [m.contest_id for m in load_matches(tmp_path / "matches.jsonl")]
    assert ids == [c.id for c in contests]
    assert len(res.matches) == 40
    assert len(contestant.calls) == res.elicitations


def test_failure_rate_sets_exit_code(snapshots, tmp_path):
    def bad(req):
        if int(req.tag["contest"][1:]) % 4 == 0:
            return "WINNER: maybe\nREASONING: unsure"
        return "WINNER: X\nREASONING: ok"

    res, _, _ = run(snapshots, tmp_path, n=100, judge_fn=bad)
    assert res.invalid > 0 and res.failure_rate > MAX_FAILURE_RATE and res.exit_code == 3
    rej = (tmp_path / "rejections.jsonl").read_text().splitlines()
    assert len(rej) == res.invalid
    assert json.loads(rej[0])["reason"] == "invalid_verdict"
    report = json.loads((tmp_path / "tournament_report.json").read_text())
    assert report["exit_code"] == 3


def test_elicitation_failure_is_skipped(snapshots, tmp_path):
    def flaky(req):
        return "" if req.tag.get("condition") == "mem" else default_responder(req)

    res, _, _ = run(snapshots, tmp_path, n=30, contestant=ScriptedChat(flaky))
    assert res.skipped == sum(1 for m in res.rejections if m["reason"] == "elicitation_failed") > 0
    assert all("mem" not in (m.agent_i, m.agent_j) for m in res.matches)


def test_favored_condition_wins_most(snapshots, tmp_path):
    res, _, _ = run(snapshots, tmp_path, n=150, judge_fn=make_judge_responder("mem_evo_web"))
    fav = [m for m in res.matches if "mem_evo_web" in (m.agent_i, m.agent_j)]
    wins = sum((m.outcome == "W") == (m.agent_i == "mem_evo_web") and m.outcome != "D" for m in fav)
    assert wins / len(fav) > 0.8
