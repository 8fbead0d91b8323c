"""Prompt templates for debate turns, the facilitator, tournament answers and judging.

Debate prompts are rendered from a ``PromptSections`` record so a logged record
reproduces the exact prompt bytes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .config import AgentConfig, render_identity_block
from .common import sha256_text

EVIDENCE_ONLY = (
    "CRITICAL INSTRUCTION:\n"
    "You MUST NOT use background training knowledge to assert facts, cite studies, or provide statistics.\n"
    "All factual claims must come from the evidence listed below. If evidence is insufficient, state that limitation."
)
CLOSING_EVIDENCE_ONLY = (
    "CRITICAL INSTRUCTION:\n"
    "You MUST NOT use background training knowledge to assert facts, cite studies, or provide statistics.\n"
    "This closing statement should synthesize the debate; do not introduce new factual claims."
)

TOOL_GUIDANCE = {
    "opening": (
        "TOOL CALLING GUIDANCE:\n"
        "If you need additional evidence, you may call the web search tool using:\n"
        'TOOL_CALL: web_search(query="your focused, context-rich query here")\n'
        "Focus each search on a single information need and prefer peer-reviewed, recent, authoritative sources."
    ),
    "statement": (
        "TOOL CALLING GUIDANCE:\n"
        "If additional evidence is needed, call:\n"
        'TOOL_CALL: web_search(query="focused, context-rich query")\n'
        "Prefer peer-reviewed, recent, authoritative sources; one information need per query."
    ),
}

TASKS = {
    "opening": (
        "TASK:\n"
        "Generate a clear, evidence-grounded argument consistent with your worldview and communication style.\n"
        "Cite or paraphrase only from 'Evidence Available' (and any tool results you just retrieved).\n"
        "Acknowledge uncertainties or gaps where evidence is limited."
    ),
    "statement": (
        "TASK:\n"
        "Produce a clear, evidence-grounded argument consistent with your worldview and communication style.\n"
        "Cite or paraphrase only from 'Evidence Available' (and any tool results you just retrieved).\n"
        "Engage salient opponent points directly; acknowledge uncertainties where evidence is limited."
    ),
}

CLOSING_TASK = (
    "CLOSING TASK:\n"
    "Provide your final position after considering all arguments in this debate.\n"
    "- Clearly state your refined stance.\n"
    "- Briefly justify it in light of the strongest opposing points.\n"
    "- Indicate whether (and how) your position evolved during the discussion.\n"
    "- Acknowledge any remaining uncertainties or trade-offs."
)

PHASES = ("opening", "statement", "closing")


@dataclass
class PromptSections:
    """Everything a debate prompt is rendered from."""

    phase: str
    identity: str
    topic: str
    round: int = 0
    evidence: list[str] = field(default_factory=list)
    web_available: bool = False
    rag_enabled: bool = False
    lessons: list[str] = field(default_factory=list)
    insights: list[str] = field(default_factory=list)
    reflections: list[str] = field(default_factory=list)
    recent_points: list[list[str]] = field(default_factory=list)
    guidance: str = ""
    own_arguments: list[str] = field(default_factory=list)
    opponent_arguments: list[list[str]] = field(default_factory=list)
    tool_results: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PromptSections":
        return cls(**d)


def _bullets(items, empty: str | None = None) -> list[str]:
    lines = [f"- {x}" for x in items]
    if not lines and empty is not None:
        lines = [f"- {empty}"]
    return lines


def _optional(title: str, items) -> list[str]:
    if not items:
        return []
    return [title, *_bullets(items), ""]


def render_prompt(s: PromptSections) -> str:
    if s.phase not in PHASES:
        raise ValueError(f"unknown phase {s.phase!r}")
    if s.phase == "closing":
        lines = [s.identity, "", CLOSING_EVIDENCE_ONLY, "", f"Topic: {s.topic}", "",
                 "Your Arguments in This Debate:", *_bullets(s.own_arguments, "(no arguments recorded)"), "",
                 "Opponents' Arguments in This Debate:",
                 *_bullets([f"{who}: {text}" for who, text in s.opponent_arguments], "(no arguments recorded)"), "",
                 CLOSING_TASK]
        return "\n".join(lines)

    lines = [s.identity, "", EVIDENCE_ONLY, "", f"Topic: {s.topic}"]
    if s.phase == "statement":
        lines.append(f"Round: {s.round}")
    lines += ["", "Evidence Available:", *_bullets(s.evidence, "(no evidence retrieved)"), ""]
    lines += ["TOOL AVAILABILITY:",
              f"- Web Search Tool: {'AVAILABLE' if s.web_available else 'NOT AVAILABLE'}",
              f"- Document RAG: {'ENABLED' if s.rag_enabled else 'DISABLED'}", ""]
    lines += _optional("STRATEGIC LESSONS FROM PREVIOUS DEBATES:", s.lessons)
    lines += _optional("PERSONAL GROWTH INSIGHTS:", s.insights)
    title = ("PERSONAL REFLECTIONS FROM PREVIOUS ROUNDS:" if s.phase == "opening"
             else "PERSONAL REFLECTIONS FROM THIS/RECENT ROUNDS:")
    lines += _optional(title, s.reflections)
    lines += _optional("RECENT POINTS FROM OTHER PARTICIPANTS:", [f"{who}: {text}" for who, text in s.recent_points])
    lines += ["ROUND-SPECIFIC GUIDANCE:", s.guidance, ""]
    if s.web_available:
        lines += [TOOL_GUIDANCE[s.phase], ""]
    lines.append(TASKS[s.phase])
    if s.tool_results:
        lines += ["", "TOOL RESULTS (just retrieved):", *_bullets(s.tool_results)]
    return "\n".join(lines)


def round_guidance(cfg: AgentConfig, phase: str, round: int = 0, rounds: int = 1) -> str:
    """Turn instruction derived from the persona's debate and communication style."""
    if phase == "opening":
        move = "Open the discussion by setting out your position and the considerations you will weigh most."
    elif round <= 1:
        move = "Build your core case and respond to the opening positions you have heard."
    elif round >= rounds:
        move = "This is the final round: address the strongest remaining objections and name points of convergence."
    else:
        move = "Engage the strongest opposing points so far and deepen your evidence where it was challenged."
    cs = cfg.communication_style
    style = (f"Debate in this style: {cfg.debate_style}. Keep a {cs.tone} tone with {cs.evidence_emphasis} "
             f"evidence emphasis, {cs.technical_depth} technical depth and {cs.emotional_appeal} emotional appeal.")
    return f"{move} {style}"


def identity_for(cfg: AgentConfig, phase: str) -> str:
    return render_identity_block(cfg, include_expertise=(phase != "closing"))


# -- facilitator -----------------------------------------------------------------

FACILITATOR_DESCRIPTION = "a neutral process facilitator for multi-party policy discussions"


def facilitator_prompt(topic: str, round: int, total_arguments: int, total_evidence: int,
                       round_arguments: list[tuple[str, str]], quality: str, score: float,
                       strengths: str = "", improvements: str = "") -> str:
    lines = [
        f"You are: {FACILITATOR_DESCRIPTION}",
        "",
        "FACILITATOR ROLE:",
        "You are a PROCESS FACILITATOR. Do NOT contribute topic knowledge,",
        "do NOT take positions, and do NOT introduce facts or citations.",
        "Focus ONLY on how participants are debating (engagement, evidence use,",
        "participation balance, structure and flow).",
        "",
        "Debate Context:",
        f"- Topic: {topic}",
        f"- Round: {round}",
        f"- Total Arguments So Far: {total_arguments}",
        f"- Total Evidence Items So Far: {total_evidence}",
        "",
        "Current Round Arguments:",
        *[f"- {who}: {text}" for who, text in round_arguments],
        "",
        "Analysis Summary (for your awareness):",
        f"- Overall round quality: {quality} ({score:.2f})",
    ]
    if strengths:
        lines.append(f"- Notable strengths: {strengths}")
    if improvements:
        lines.append(f"- Improvement opportunities: {improvements}")
    lines += [
        "",
        "FACILITATION TASK:",
        "Provide a brief intervention that:",
        "1) Encourages direct engagement with salient prior points,",
        "2) Requests clearer reasoning and sufficient, appropriate evidence where needed,",
        "3) Promotes balanced participation and constructive tone,",
        "4) Improves structure and focus for the next exchanges.",
        "",
        "Constraints:",
        "- Keep it concise and actionable (2-5 sentences).",
        "- Do NOT inject topic content or new facts.",
        "- Do NOT evaluate who is correct; guide the process only.",
    ]
    return "\n".join(lines)


# -- tournament ------------------------------------------------------------------

DEFAULT_LIST = "not specified"


def _join(items) -> str:
    return ", ".join(items) if items else DEFAULT_LIST


def memory_conditioned_prompt(cfg: AgentConfig, question, learning_context: list[str]) -> str:
    lines = [
        f"You are {cfg.name}.",
        "",
        f"Background: {cfg.description}",
        "",
        f"Your worldview perspective: {cfg.perspective}",
        "",
        f"Your core priorities: {_join(cfg.priorities)}",
        "",
        f"Your expertise domains: {_join(cfg.expertise_domains)}",
        "",
        f"Your preferred evidence types: {_join(cfg.preferred_evidence_types)}",
        "",
    ]
    if learning_context:
        lines += ["Learning context from your previous debates:", *_bullets(learning_context), ""]
    lines += [
        "IMPORTANT: Respond using ONLY your accumulated knowledge, insights, and learning.",
        "Do NOT search for new information or access external sources.",
        "Draw upon your established expertise and learned perspectives.",
        "",
        f"Question Category: {question.category}",
        f"Context: {question.context}",
        "",
        f"Question: {question.text}",
        "",
        "Provide a thoughtful response that demonstrates your expertise and perspective.",
        "Your response should be substantial (200-400 words) and showcase:",
        "- Your accumulated knowledge and insights on this topic",
        "- Evidence-based reasoning using your established knowledge base",
        "- Strategic thinking developed through your experience",
        "- Consideration of multiple stakeholder perspectives",
        "- Practical policy implications based on your expertise",
        "- Your unique evolved perspective and priorities",
    ]
    return "\n".join(lines)


def pure_baseline_prompt(agent_role: str, question) -> str:
    return "\n".join([
        f"You are a {agent_role}.",
        "Provide a thoughtful response based on your general knowledge and expertise in this domain.",
        "",
        f"Question: {question.text}",
        "",
        "Provide a substantive response (200-400 words) that demonstrates your expertise and analytical thinking.",
        "Focus on:",
        "- Evidence-based reasoning using your knowledge",
        "- Multiple stakeholder perspectives",
        "- Practical policy implications",
        "- Strategic considerations",
        "",
        "Response:",
    ])


def judge_prompt(question, first: str, second: str) -> str:
    return "\n".join([
        "You are an expert judge evaluating two responses to a policy question. Your task is to",
        "determine which response demonstrates superior expertise and reasoning capability.",
        "",
        f"Question: {question.text}",
        f"Category: {question.category}",
        f"Context: {question.context}",
        "",
        f"Response X: {first}",
        "",
        f"Response Y: {second}",
        "",
        "Evaluate both responses based on these criteria (in order of importance):",
        "",
        "1. **Knowledge Depth & Sophistication** (35% weight): Which response shows deeper,",
        "more nuanced understanding of the policy domain? Look for:",
        "- Comprehensive grasp of complex policy interactions",
        "- Awareness of implementation challenges and trade-offs",
        "- Understanding of stakeholder dynamics and competing interests",
        "- Recognition of both intended and unintended consequences",
        "",
        "2. **Evidence Quality & Integration** (25% weight): Which response uses more",
        "credible evidence and reasoning? Assess:",
        "- Use of relevant, authoritative sources and examples",
        "- Logical structure and causal reasoning",
        "- Integration of multiple types of evidence (economic, social, environmental)",
        "- Factual accuracy and precision",
        "",
        "3. **Strategic Thinking & Problem-Solving** (25% weight): Which response offers better",
        "strategic analysis? Consider:",
        "- Identification of key leverage points and barriers",
        "- Practical implementation pathways",
        "- Anticipation of counterarguments and responses",
        "- Creative yet feasible solutions",
        "",
        "4. **Stakeholder Consideration & Equity** (15% weight): Which response better integrates",
        "diverse perspectives? Evaluate:",
        "- Recognition of affected communities and power dynamics",
        "- Consideration of distributional impacts and fairness",
        "- Inclusion of marginalized voices and perspectives",
        "- Balance between competing legitimate interests",
        "",
        "Focus on which response demonstrates the capabilities of a more sophisticated,",
        "experienced policy expert who has developed nuanced understanding through extensive",
        "engagement with these issues.",
        "",
        "Provide your judgment in this exact format:",
        "WINNER: [X or Y or TIE]",
        "REASONING: [2-3 sentences explaining your decision, focusing on the key differentiating",
        "factors that made one response superior in demonstrating policy expertise and sophisticated",
        "reasoning]",
        "",
        "Your evaluation:",
    ])


JUDGE_REMINDER = (
    "\n\nYour previous answer did not follow the required format. Reply with exactly two lines:\n"
    "WINNER: X or WINNER: Y or WINNER: TIE\nREASONING: <2-3 sentences>"
)


def template_hashes() -> dict[str, str]:
    """SHA-256 of each template's source, recorded in run manifests so results can
    be tied to the exact prompt wording that produced them."""
    import inspect

    parts = {
        "debate": [EVIDENCE_ONLY, CLOSING_EVIDENCE_ONLY, repr(TOOL_GUIDANCE), repr(TASKS), CLOSING_TASK,
                   inspect.getsource(render_prompt), inspect.getsource(round_guidance)],
        "facilitator": [inspect.getsource(facilitator_prompt)],
        "memory_conditioned": [inspect.getsource(memory_conditioned_prompt)],
        "pure_baseline": [inspect.getsource(pure_baseline_prompt)],
        "judge": [inspect.getsource(judge_prompt), JUDGE_REMINDER],
    }
    return {k: sha256_text("\n".join(v)) for k, v in parts.items()}
