"""Deterministic offline responders for every chat phase.

Each response is a pure function of the request (tags, prompt and seed), so a
run with scripted providers and a fixed seed is reproducible byte for byte.
Outputs follow the formats the parsers expect.
"""

from __future__ import annotations

import hashlib
import re
from typing import Callable

from .providers import ChatRequest

_ANGLES = (
    "implementation capacity", "distributional fairness", "verification and monitoring",
    "long-term resilience", "cost effectiveness", "community consent", "institutional trust",
    "measurement uncertainty",
)
_MOVES = (
    "the evidence supports a cautious, staged approach",
    "the trade-offs are sharper than the previous speaker suggested",
    "the strongest objection deserves a direct answer",
    "the available evidence leaves a real gap that should be acknowledged",
)


def _h(*parts: object) -> int:
    return int.from_bytes(hashlib.sha256("|".join(map(str, parts)).encode()).digest()[:8], "big")


def _pick(options, *parts):
    return options[_h(*parts) % len(options)]


def _line_after(prompt: str, label: str) -> str:
    for line in prompt.splitlines():
        if line.startswith(label):
            return line[len(label):].strip()
    return ""


def _evidence_count(prompt: str) -> int:
    block = prompt.split("Evidence Available:", 1)
    if len(block) < 2:
        return 0
    n = 0
    for line in block[1].splitlines()[1:]:
        if not line.startswith("- "):
            break
        if "(no evidence retrieved)" not in line:
            n += 1
    return n


def _debate_turn(req: ChatRequest) -> str:
    t = req.tag
    agent, phase, rnd = t.get("agent", "agent"), t.get("phase", "statement"), t.get("round", "0")
    topic = _line_after(req.prompt, "Topic:") or t.get("topic", "the topic")
    angle = _pick(_ANGLES, agent, topic, rnd, req.seed)
    move = _pick(_MOVES, agent, rnd, phase, req.seed)
    n_ev = _evidence_count(req.prompt)
    if phase == "opening":
        return (f"{agent} opens on '{topic}': my position centres on {angle}. "
                f"Drawing on {n_ev} evidence items, {move}.")
    if phase == "closing":
        return (f"{agent} closes on '{topic}': after weighing the strongest opposing points my refined stance "
                f"still centres on {angle}, though {move}. Uncertainties remain about implementation.")
    return (f"{agent}, round {rnd}: on '{topic}' I emphasise {angle}. "
            f"Citing {n_ev} evidence items, {move}.")


def _reflection(req: ChatRequest) -> str:
    t = req.tag
    angle = _pick(_ANGLES, t.get("agent"), t.get("topic"), t.get("round"), "reflect")
    return (f"My emphasis held up in round {t.get('round', '?')}, but others exposed a gap around {angle}. "
            f"Next round I will address {angle} directly and tie it to stronger evidence.")


def _consolidation(req: ChatRequest) -> str:
    t = req.tag
    key = _line_after(req.prompt, "Topic key:")
    a = _pick(_ANGLES, t.get("agent"), key, "c1")
    b = _pick(_ANGLES, t.get("agent"), key, "c2")
    return "\n".join([
        f"CONSOLIDATED PERSPECTIVE: Across rounds on {key}, my view has sharpened around {a} and {b}.",
        "KEY INSIGHTS:",
        f"- Opponents repeatedly pressed on {a}.",
        f"- Arguments grounded in {b} were the most persuasive.",
        "STRATEGIC LEARNINGS:",
        f"- Lead with {b} and pre-empt objections on {a}.",
        "META:",
        "confidence: medium",
        f"rounds_considered: {req.prompt.count('- [round ')}",
    ])


def _evolution(req: ChatRequest) -> str:
    current = _line_after(req.prompt, "perspective:")
    base = re.sub(r"\s*\[refined: [^\]]*\]$", "", current)
    angle = _pick(_ANGLES, req.tag.get("agent"), req.tag.get("topic"), req.tag.get("round"), "evo")
    priorities = _line_after(req.prompt, "priorities:")
    items = [p.strip() for p in priorities.split(";") if p.strip()]
    if angle not in items:
        items = items[:4] + [angle]
    return "\n".join([
        "SHOULD_EVOLVE: yes",
        "INTENSITY: moderate",
        f"RATIONALE: Consolidated learning shows {angle} is decisive in these debates.",
        f"EDIT perspective: {base} [refined: {angle}]",
        f"EDIT priorities: {'; '.join(items)}",
    ])


def _facilitator(req: ChatRequest) -> str:
    rnd = _line_after(req.prompt, "- Round:")
    return (f"Round {rnd} facilitation: please respond directly to the most salient point raised before you, "
            "and make clear which evidence supports each claim. Speakers who have said less should be invited in.")


def _tournament_answer(req: ChatRequest) -> str:
    t = req.tag
    q = _line_after(req.prompt, "Question:")
    angle = _pick(_ANGLES, t.get("condition"), t.get("persona"), q)
    return (f"[condition:{t.get('condition', '?')}] As {t.get('persona', 'an expert')}, I would approach this "
            f"through {angle}. {q} The answer depends on stakeholder consent, credible measurement and staged "
            "implementation, with explicit attention to trade-offs.")


_RESPONSE = re.compile(r"^Response ([XY]): (.*)$", re.M)


def _judge_labels(prompt: str) -> dict[str, str]:
    return {m.group(1): m.group(2) for m in _RESPONSE.finditer(prompt)}


def make_judge_responder(favor: str | None = None, strength: float = 0.9,
                         draw_rate: float = 0.2) -> Callable[[ChatRequest], str]:
    """Scripted judge. With ``favor`` set, the response carrying that condition's
    marker wins with probability ``strength``; otherwise outcomes are hash-random."""

    def respond(req: ChatRequest) -> str:
        labels = _judge_labels(req.prompt)
        u = (_h(req.prompt, req.seed) % 10_000) / 10_000
        marker = f"[condition:{favor}]" if favor else None
        fav = [k for k, v in labels.items() if marker and v.startswith(marker)]
        if len(fav) == 1:
            other = "Y" if fav[0] == "X" else "X"
            winner = fav[0] if u < strength else ("TIE" if u < strength + (1 - strength) / 2 else other)
        elif u < draw_rate:
            winner = "TIE"
        else:
            winner = "X" if u < draw_rate + (1 - draw_rate) / 2 else "Y"
        return f"WINNER: {winner}\nREASONING: Scripted verdict based on a deterministic hash of the contest."

    return respond


_HANDLERS: dict[str, Callable[[ChatRequest], str]] = {
    "opening": _debate_turn,
    "statement": _debate_turn,
    "closing": _debate_turn,
    "reflection": _reflection,
    "consolidation": _consolidation,
    "evolution": _evolution,
    "facilitator": _facilitator,
    "tournament": _tournament_answer,
    "judge": make_judge_responder(),
}


def default_responder(req: ChatRequest) -> str:
    phase = req.tag.get("phase", "statement")
    return _HANDLERS.get(phase, _debate_turn)(req)
