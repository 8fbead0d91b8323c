"""Fixed tournament question bank: 25 questions, 5 per category."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

CATEGORIES = ("climate_policy", "environmental_justice", "economic_analysis", "strategic_analysis",
              "cross_domain_integration")

_BANK = {
    "climate_policy": (
        "Climate policy and carbon economics debate context",
        ("evidence_quality", "reasoning_depth", "stakeholder_consideration", "practical_feasibility"),
        (
            "How should international carbon pricing mechanisms balance economic efficiency with equity concerns for developing nations?",
            "What role should technology transfer play in global climate mitigation strategies?",
            "How can we ensure that carbon offset projects deliver genuine additionality and avoid double counting?",
            "What governance frameworks best balance climate urgency with local stakeholder rights?",
            "How should climate adaptation funding be prioritized between immediate needs and long-term resilience?",
        ),
    ),
    "environmental_justice": (
        "Environmental justice and equity considerations",
        ("equity_analysis", "stakeholder_representation", "historical_context", "practical_solutions"),
        (
            "How can large-scale environmental projects ensure meaningful participation from affected communities?",
            "What mechanisms best protect indigenous rights while advancing global environmental goals?",
            "How should environmental policies address historical inequities in pollution exposure?",
            "What role should traditional ecological knowledge play in environmental decision-making?",
            "How can we balance local autonomy with global environmental coordination?",
        ),
    ),
    "economic_analysis": (
        "Economic analysis and market mechanisms",
        ("economic_reasoning", "market_understanding", "quantitative_analysis", "policy_implications"),
        (
            "How should economic models account for environmental externalities in policy decisions?",
            "What market mechanisms most effectively drive sustainable innovation?",
            "How can developing economies balance growth needs with environmental protection?",
            "What role should government intervention play in environmental markets?",
            "How should we measure and compare economic versus environmental benefits?",
        ),
    ),
    "strategic_analysis": (
        "Strategic planning and implementation",
        ("strategic_thinking", "stakeholder_analysis", "implementation_feasibility", "communication_effectiveness"),
        (
            "What strategies best overcome political resistance to environmental policies?",
            "How should negotiation approaches differ between developed and developing nations?",
            "What role should scientific uncertainty play in environmental policy decisions?",
            "How can we build effective coalitions across diverse stakeholder groups?",
            "What communication strategies most effectively change environmental behavior?",
        ),
    ),
    "cross_domain_integration": (
        "Cross-domain policy integration",
        ("systems_thinking", "integration_ability", "complexity_handling", "holistic_perspective"),
        (
            "How should we integrate climate, economic, and social goals in environmental policy?",
            "What frameworks best handle trade-offs between competing environmental priorities?",
            "How can we ensure policy coherence across different environmental domains?",
            "What approaches best address the interconnections between local and global environmental issues?",
            "How should we balance short-term costs with long-term environmental benefits?",
        ),
    ),
}

BANK_SHA256 = "467f13d30e154552dbe57866e47bdac1afdd895275d7d0e742aea94ac6d7e255"


class QuestionBankError(RuntimeError):
    pass


@dataclass(frozen=True)
class Question:
    id: str
    category: str
    text: str
    context: str
    evaluation_criteria: tuple[str, ...]


def bank_checksum(questions) -> str:
    payload = [[q.id, q.category, q.text, q.context, list(q.evaluation_criteria)] for q in questions]
    return hashlib.sha256(json.dumps(payload, ensure_ascii=False).encode("utf-8")).hexdigest()


def load_question_bank(verify: bool = True) -> list[Question]:
    out = []
    for cat in CATEGORIES:
        context, criteria, texts = _BANK[cat]
        out += [Question(f"{cat}-{k}", cat, t, context, criteria) for k, t in enumerate(texts, start=1)]
    if verify and bank_checksum(out) != BANK_SHA256:
        raise QuestionBankError("question bank checksum mismatch")
    return out


def question_by_id(qid: str) -> Question:
    for q in load_question_bank():
        if q.id == qid:
            return q
    raise KeyError(qid)
