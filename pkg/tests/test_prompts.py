from dataclasses import replace

from dialectica.config import load_agent_config, resolve_agent_path
from dialectica.prompts import (
    PromptSections,
    identity_for,
    memory_conditioned_prompt,
    pure_baseline_prompt,
    render_prompt,
    template_hashes,
)
from dialectica.questions import question_by_id

CFG = load_agent_config(resolve_agent_path("builtin:environmental_scientist"))


def sections(**kw):
    base = dict(phase="statement", identity=identity_for(CFG, "statement"), topic="Carbon pricing", round=2,
                evidence=["[memory] a note"], guidance="Be clear.")
    base.update(kw)
    return PromptSections(**base)


def test_baseline_prompt_has_no_learning_blocks():
    p = render_prompt(sections())
    assert "STRATEGIC LESSONS" not in p
    assert "PERSONAL REFLECTIONS" not in p
    assert "PERSONAL GROWTH INSIGHTS" not in p
    assert "Web Search Tool: NOT AVAILABLE" in p
    assert "TOOL_CALL" not in p


def test_learning_blocks_and_web_guidance_appear_when_present():
    p = render_prompt(sections(lessons=["lead with data"], reflections=["I was vague"], web_available=True))
    assert "STRATEGIC LESSONS FROM PREVIOUS DEBATES:\n- lead with data" in p
    assert "PERSONAL REFLECTIONS FROM THIS/RECENT ROUNDS:" in p
    assert 'TOOL_CALL: web_search(query="' in p


def test_closing_prompt_lists_own_arguments():
    s = PromptSections(phase="closing", identity=identity_for(CFG, "closing"), topic="Carbon pricing",
                       own_arguments=["mine"], opponent_arguments=[["x", "theirs"]])
    p = render_prompt(s)
    assert "Your Arguments in This Debate:\n- mine" in p
    assert "- x: theirs" in p
    assert "Evidence Available" not in p


def test_rendering_is_deterministic_and_roundtrips():
    s = sections(recent_points=[["b", "claim"]])
    assert render_prompt(s) == render_prompt(PromptSections.from_dict(s.to_dict()))


def test_tournament_prompts():
    q = question_by_id("climate_policy-3")
    pure = pure_baseline_prompt(CFG.name, q)
    assert q.text in pure and "Learning context" not in pure
    evolved = replace(CFG, perspective="An evolved view on offsets")
    mc = memory_conditioned_prompt(evolved, q, ["lesson one"])
    assert "Your worldview perspective: An evolved view on offsets" in mc
    assert "Learning context from your previous debates:\n- lesson one" in mc
    assert "Do NOT search for new information" in mc


def test_template_hashes_are_stable():
    h = template_hashes()
    assert set(h) == {"debate", "facilitator", "memory_conditioned", "pure_baseline", "judge"}
    assert h == template_hashes()
