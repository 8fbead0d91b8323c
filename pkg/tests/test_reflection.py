import logging
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dialectica.config import FIELD_NAMES, builtin_personas, load_agent_config, parse_version
from dialectica.providers import ScriptedChat
from dialectica.reflection import (
    DebateHistory,
    DegenerateTopicError,
    EvolutionProposal,
    ParseError,
    ReflectionRecord,
    TopicStore,
    apply_evolution,
    check_evolution_eligibility,
    consolidate,
    find_matching_key,
    jaccard,
    parse_consolidation,
    parse_evolution_proposal,
    propose_evolution,
    render_key,
    topic_key,
)
from dialectica.config import EvolutionCriteria

TOPIC1 = ("Is prioritizing global carbon mitigation over regional climate adaptation the most "
          "effective strategy for developing nations?")

CANNED = """CONSOLIDATED PERSPECTIVE: Carbon pricing needs equity safeguards.
KEY INSIGHTS:
- Revenue recycling wins support
- Border adjustments shift burdens
STRATEGIC LEARNINGS:
- Lead with distributional evidence
META:
confidence: medium
"""


def persona():
    return load_agent_config(builtin_personas()["environmental_scientist"])


def rec(k=1, topic="carbon markets equity"):
    return ReflectionRecord(k, topic, f"argument {k}", 2, f"reflection {k}", float(k))


# -- topic keys --------------------------------------------------------------------


def test_topic_key_hand_tokenization():
    key = topic_key(TOPIC1)
    assert {"prioritizing", "global", "carbon", "mitigation", "regional", "climate", "adaptation",
            "effective", "strategy", "developing", "nations"} == key
    assert "is" not in key and "the" not in key


def test_degenerate_topics():
    with pytest.raises(DegenerateTopicError):
        topic_key("a an of")
    with pytest.raises(ValueError):
        topic_key("   ")


def test_jaccard_cases():
    assert jaccard({"a"}, {"a"}) == 1.0
    assert jaccard({"a"}, {"b"}) == 0.0
    assert jaccard({"carbon", "markets", "equity"}, {"carbon", "equity", "speed"}) == 0.5


@given(st.sets(st.sampled_from("abcdefg"), min_size=1), st.sets(st.sampled_from("abcdefg"), min_size=1))
def test_jaccard_symmetric_bounded(a, b):
    j = jaccard(a, b)
    assert j == jaccard(b, a) and 0.0 <= j <= 1.0
    assert (j == 1.0) == (a == b)


def test_matching_threshold_is_inclusive():
    assert find_matching_key("carbon markets equity", ["carbon equity speed"]) == "carbon equity speed"
    # 1 shared of 3 distinct tokens -> 1/3 < 0.5
    assert find_matching_key("carbon markets", ["carbon speed"]) is None


def test_just_below_threshold():
    # |A & B| = 49, |A | B| = 100 -> 0.49
    a = " ".join(f"tok{k:03d}" for k in range(74))
    b = " ".join(f"tok{k:03d}" for k in range(25, 100))
    assert jaccard(topic_key(a), topic_key(b)) == pytest.approx(0.49)
    assert find_matching_key(a, [render_key(topic_key(b))]) is None


def test_tie_goes_to_earliest_key():
    # query {a,b,c,d,e}; each key shares 3 of 5 -> J = 3/5 = 0.6
    keys = ["aaa bbb ccc", "ccc ddd eee"]
    assert find_matching_key("aaa bbb ccc ddd eee", keys) == "aaa bbb ccc"
    assert find_matching_key("aaa bbb ccc ddd eee", keys[::-1]) == "ccc ddd eee"


def test_topic_store_keeps_creation_order(tmp_path):
    s = TopicStore(tmp_path / "t.json")
    k1 = s.resolve_key("carbon markets equity")
    s.put(parse_consolidation(CANNED, k1))
    k2 = s.resolve_key("indigenous land rights")
    s.put(parse_consolidation(CANNED, k2))
    assert s.resolve_key("carbon markets equity") == k1
    s.put(parse_consolidation(CANNED.replace("needs", "requires"), k1))
    again = TopicStore(tmp_path / "t.json")
    assert again.keys() == [k1, k2]
    assert "requires" in again.get(k1).consolidated_perspective


# -- consolidation ---------------------------------------------------------------------


def test_parse_consolidation():
    ct = parse_consolidation(CANNED, "carbon equity markets")
    assert ct.key_insights == ("Revenue recycling wins support", "Border adjustments shift burdens")
    assert ct.strategic_learnings == ("Lead with distributional evidence",)
    assert dict(ct.meta) == {"confidence": "medium"}


def test_parse_consolidation_tolerates_markdown():
    text = CANNED.replace("KEY INSIGHTS:", "## **KEY INSIGHTS**").replace("- Revenue", "1. Revenue")
    assert parse_consolidation(text, "k").key_insights[0] == "Revenue recycling wins support"


@pytest.mark.parametrize("text", [
    "Just some prose about carbon.",
    CANNED.replace("META:\nconfidence: medium\n", ""),
    CANNED.replace("CONSOLIDATED PERSPECTIVE: Carbon pricing needs equity safeguards.", "CONSOLIDATED PERSPECTIVE:"),
    CANNED + "KEY INSIGHTS:\n- again\n",
])
def test_parse_consolidation_rejects(text):
    with pytest.raises(ParseError):
        parse_consolidation(text, "k")


def test_consolidate_with_scripted_provider():
    chat = ScriptedChat(lambda req: CANNED)
    ct = consolidate([rec(1)], rec(2), chat)
    assert ct is not None and len(ct.key_insights) == 2
    assert ct.topic_key == "carbon equity markets"
    assert "argument 1" in chat.calls[0].prompt and "argument 2" in chat.calls[0].prompt


def test_no_prior_means_no_call():
    chat = ScriptedChat(lambda req: CANNED)
    assert consolidate([], rec(1), chat) is None
    assert chat.calls == []


def test_two_parse_failures_skip(caplog):
    chat = ScriptedChat(lambda req: "I think it went fine.")
    with caplog.at_level(logging.ERROR):
        assert consolidate([rec(1)], rec(2), chat) is None
    assert len(chat.calls) == 2
    assert "could not be parsed" in chat.calls[1].prompt
    assert "skipped" in caplog.text


def test_retry_recovers():
    answers = iter(["prose", CANNED])
    chat = ScriptedChat(lambda req: next(answers))
    assert consolidate([rec(1)], rec(2), chat) is not None


# -- evolution ------------------------------------------------------------------------------


@pytest.mark.parametrize("d,u,ok", [(3, 2, True), (2, 2, False), (3, 1, False), (2, 5, False), (10, 1, False),
                                    (10, 10, True)])
def test_eligibility_boundaries(d, u, ok):
    assert check_evolution_eligibility(d, u) is ok


def test_eligibility_custom_criteria():
    assert check_evolution_eligibility(1, 1, EvolutionCriteria(1, 1))
    with pytest.raises(ValueError):
        check_evolution_eligibility(-1, 0)


def test_declining_provider():
    chat = ScriptedChat(lambda req: "SHOULD_EVOLVE: no\nRATIONALE: not yet")
    p = propose_evolution(persona(), parse_consolidation(CANNED, "k"), [], chat)
    assert not p.should_evolve and p.field_edits == ()


def test_proposal_with_two_edits():
    text = ("SHOULD_EVOLVE: yes\nINTENSITY: moderate\nRATIONALE: learned a lot\n"
            "EDIT perspective: Evidence first, then equity.\nEDIT priorities: equity; accuracy\n")
    p = propose_evolution(persona(), parse_consolidation(CANNED, "k"), [], ScriptedChat(lambda r: text))
    assert p.edits == {"perspective": "Evidence first, then equity.", "priorities": "equity; accuracy"}


def test_unknown_field_dropped_at_parse(caplog):
    with caplog.at_level(logging.WARNING):
        p = parse_evolution_proposal("SHOULD_EVOLVE: yes\nEDIT favourite_food: soup\nEDIT debate_style: terse")
    assert p.edits == {"debate_style": "terse"}
    assert "favourite_food" in caplog.text


def test_unparseable_proposal_is_no_op():
    assert not parse_evolution_proposal("sure, let's evolve!").should_evolve


def test_disabled_policy_skips_provider():
    from dataclasses import replace
    cfg = persona()
    cfg = replace(cfg, evolution_settings=replace(cfg.evolution_settings, enabled=False))
    chat = ScriptedChat(lambda r: "SHOULD_EVOLVE: yes")
    assert not propose_evolution(cfg, parse_consolidation(CANNED, "k"), [], chat).should_evolve
    assert chat.calls == []


def test_protected_field_filtered():
    cfg = persona()
    p = EvolutionProposal(True, "moderate", (("perspective", "New view."), ("expertise_domains", "everything")))
    out = apply_evolution(cfg, p, timestamp=5.0, trigger_topic="t")
    assert out.perspective == "New view."
    assert out.expertise_domains == cfg.expertise_domains
    assert out.version == "1.1.0"
    (event,) = out.evolution_history
    assert [c.field for c in event.field_changes] == ["perspective"]
    assert event.version_after == "1.1.0" and event.trigger_topic == "t"


def test_empty_filtered_edit_set_is_identity():
    cfg = persona()
    p = EvolutionProposal(True, "moderate", (("expertise_domains", "x"),))
    assert apply_evolution(cfg, p) is cfg
    same = EvolutionProposal(True, "moderate", (("perspective", cfg.perspective),))
    assert apply_evolution(cfg, same) is cfg


def test_intensity_caps_edits():
    from dataclasses import replace
    cfg = persona()
    edits = (("description", "d2"), ("perspective", "p2"), ("priorities", "a; b"), ("debate_style", "s2"),
             ("preferred_evidence_types", "x; y"))
    for intensity, cap in [("conservative", 2), ("moderate", 4), ("radical", 5)]:
        c = replace(cfg, evolution_settings=replace(cfg.evolution_settings, intensity=intensity))
        out = apply_evolution(c, EvolutionProposal(True, intensity, edits))
        assert len(out.evolution_history[-1].field_changes) == cap


def test_learning_callback():
    lines = []
    p = EvolutionProposal(True, "moderate", (("perspective", "New."),), "because")
    apply_evolution(persona(), p, on_learning=lines.append)
    assert lines == ["EVOLUTION 1.0.0 -> 1.1.0: evolved perspective. because"]


FUZZ_FIELDS = list(FIELD_NAMES)
FUZZ_VALUES = ["", " ", "x", "a; b; c", "tone=calm; evidence_emphasis=high", "tone=; technical_depth=extreme",
               "evidence_emphasis=bogus", "new perspective", ";", "tone=direct; emotional_appeal=low"]


def test_fuzzed_proposals_never_touch_protected_fields():
    rng = random.Random(99)
    base = persona()
    for _ in range(1000):
        cfg = base
        versions = [parse_version(cfg.version)]
        for _ in range(rng.randint(1, 4)):
            names = rng.sample(FUZZ_FIELDS, rng.randint(0, len(FUZZ_FIELDS)))
            edits = tuple((n, rng.choice(FUZZ_VALUES) + rng.choice(["", " extra"])) for n in names)
            p = EvolutionProposal(rng.random() < 0.9, rng.choice(["conservative", "moderate", "radical"]), edits)
            before = cfg
            cfg = apply_evolution(cfg, p, timestamp=rng.random())
            assert cfg.expertise_domains == base.expertise_domains
            if cfg is not before:
                v = parse_version(cfg.version)
                assert v > versions[-1] and v[1] == versions[-1][1] + 1
                versions.append(v)
                assert cfg.evolution_history[-1].version_after == cfg.version
                for ch in cfg.evolution_history[-1].field_changes:
                    assert ch.field in cfg.evolution_settings.allowed()
                    assert ch.before != ch.after
        assert len(cfg.evolution_history) == len(versions) - 1


@given(st.text(max_size=300))
def test_proposal_parser_never_crashes(text):
    p = parse_evolution_proposal(text)
    assert all(name in FIELD_NAMES for name, _ in p.field_edits)


# -- debate history ------------------------------------------------------------------


def test_debate_history_persists(tmp_path):
    h = DebateHistory.open(tmp_path / "h.json")
    assert h.debates_completed == 0
    h.append({"topic": "t", "rounds": 3})
    assert DebateHistory.open(tmp_path / "h.json").debates_completed == 1


def test_reflection_record_validation():
    with pytest.raises(ValueError):
        ReflectionRecord(0, "t", "a", 1, "f", 0.0)
    r = rec(3)
    assert ReflectionRecord.from_dict(r.to_dict()) == r
