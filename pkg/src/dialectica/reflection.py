"""Per-round reflection, topic-keyed consolidation and gated persona evolution."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .common import read_json, write_json
from .config import (
    FIELD_NAMES,
    INTENSITIES,
    AgentConfig,
    ConfigError,
    EvolutionCriteria,
    EvolutionEvent,
    FieldChange,
    bump_minor,
)
from .providers import ChatRequest, chat

log = logging.getLogger(__name__)

JACCARD_THRESHOLD = 0.5
MIN_TOKEN_LEN = 3
INTENSITY_EDIT_CAP = {"conservative": 2, "moderate": 4, "radical": None}

STOP_WORDS = frozenset("""
a an the and or but nor so yet for of to in on at by with from into onto over under about
as is are was were be been being am do does did has have had having it its this that these
those such than then there their they them what which who whom whose when where why how
can could should would will shall may might must not no all any each both more most
""".split())

_TOKEN = re.compile(r"[a-z0-9]+")


class DegenerateTopicError(ValueError):
    pass


class ParseError(ValueError):
    pass


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class ReflectionRecord:
    round: int
    topic: str
    argument_summary: str
    opponent_count: int
    free_text: str
    timestamp: float

    def __post_init__(self):
        if self.round < 1:
            raise ValueError("round must be >= 1")
        if self.opponent_count < 0:
            raise ValueError("opponent_count must be >= 0")

    def to_dict(self) -> dict:
        return {
            "round": self.round, "topic": self.topic, "argument_summary": self.argument_summary,
            "opponent_count": self.opponent_count, "free_text": self.free_text, "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReflectionRecord":
        return cls(int(d["round"]), d["topic"], d["argument_summary"], int(d["opponent_count"]),
                   d["free_text"], float(d["timestamp"]))


@dataclass(frozen=True)
class ConsolidatedTopic:
    topic_key: str
    consolidated_perspective: str
    key_insights: tuple[str, ...] = ()
    strategic_learnings: tuple[str, ...] = ()
    meta: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.topic_key:
            raise ValueError("topic_key must be nonempty")

    def to_dict(self) -> dict:
        return {
            "topic_key": self.topic_key,
            "consolidated_perspective": self.consolidated_perspective,
            "key_insights": list(self.key_insights),
            "strategic_learnings": list(self.strategic_learnings),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConsolidatedTopic":
        return cls(d["topic_key"], d["consolidated_perspective"], tuple(d.get("key_insights", ())),
                   tuple(d.get("strategic_learnings", ())), tuple(dict(d.get("meta", {})).items()))


@dataclass(frozen=True)
class EvolutionProposal:
    should_evolve: bool
    intensity: str = "moderate"
    field_edits: tuple[tuple[str, str], ...] = ()
    rationale: str = ""

    def __post_init__(self):
        for name, _ in self.field_edits:
            if name not in FIELD_NAMES:
                raise ValueError(f"unknown field {name!r}")

    @property
    def edits(self) -> dict[str, str]:
        return dict(self.field_edits)


# -- topic keys ----------------------------------------------------------------


def topic_key(topic: str) -> frozenset[str]:
    if not topic or not topic.strip():
        raise ValueError("topic must be nonempty")
    tokens = {t for t in _TOKEN.findall(topic.lower()) if len(t) >= MIN_TOKEN_LEN and t not in STOP_WORDS}
    if not tokens:
        raise DegenerateTopicError(f"topic {topic!r} has no content tokens")
    return frozenset(tokens)


def render_key(key: Iterable[str]) -> str:
    return " ".join(sorted(key))


def parse_key(text: str) -> frozenset[str]:
    return frozenset(text.split())


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    if not a or not b:
        raise ValueError("jaccard needs nonempty sets")
    return len(a & b) / len(a | b)


def find_matching_key(topic: str | frozenset[str], existing_keys: Iterable[str]) -> str | None:
    """Best existing key with J >= threshold; ties go to the earliest in ``existing_keys``."""
    key = topic_key(topic) if isinstance(topic, str) else frozenset(topic)
    best, best_j = None, -1.0
    for k in existing_keys:
        j = jaccard(key, parse_key(k))
        if j >= JACCARD_THRESHOLD and j > best_j:
            best, best_j = k, j
    return best


class TopicStore:
    """Consolidated topics keyed by rendered topic key, in creation order."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        raw = read_json(self.path, default={}) or {}
        self._topics = {k: ConsolidatedTopic.from_dict(v) for k, v in raw.items()}

    def keys(self) -> list[str]:
        return list(self._topics)

    def get(self, key: str) -> ConsolidatedTopic | None:
        return self._topics.get(key)

    def values(self) -> list[ConsolidatedTopic]:
        return list(self._topics.values())

    def __len__(self) -> int:
        return len(self._topics)

    def put(self, topic: ConsolidatedTopic) -> None:
        # re-consolidating an existing key keeps its creation slot
        self._topics[topic.topic_key] = topic
        write_json(self.path, {k: v.to_dict() for k, v in self._topics.items()})

    def resolve_key(self, topic: str) -> str:
        return find_matching_key(topic, self.keys()) or render_key(topic_key(topic))


# -- reflection ------------------------------------------------------------------


def reflection_prompt(cfg: AgentConfig, topic: str, round: int, statement: str,
                      opponents: Iterable[tuple[str, str]]) -> str:
    lines = [
        f"You are: {cfg.description}",
        "",
        "PRIVATE REFLECTION (not shared with other participants)",
        f"Topic: {topic}",
        f"Round: {round}",
        "",
        "Your statement this round:",
        statement.strip(),
        "",
        "Other participants this round:",
    ]
    opp = list(opponents)
    lines += [f"- {who}: {text}" for who, text in opp] or ["- (none)"]
    lines += [
        "",
        "In the first person, reflect briefly on this round: which of your points held up, "
        "which were weakened or exposed by others, and what you will adjust next round.",
    ]
    return "\n".join(lines)


# -- consolidation ---------------------------------------------------------------

CONSOLIDATION_HEADINGS = ("CONSOLIDATED PERSPECTIVE", "KEY INSIGHTS", "STRATEGIC LEARNINGS", "META")
FORMAT_REMINDER = (
    "\n\nYour previous answer could not be parsed. Reply using exactly these four headings, "
    "each on its own line: CONSOLIDATED PERSPECTIVE:, KEY INSIGHTS: (bullets starting with '- '), "
    "STRATEGIC LEARNINGS: (bullets starting with '- '), META: (lines of 'key: value')."
)


def consolidation_prompt(key: str, reflections: Iterable[ReflectionRecord]) -> str:
    lines = [
        "Consolidate the following private reflections, all on the same debate topic, "
        "into one structured summary of your current perspective and what you have learned.",
        f"Topic key: {key}",
        "",
        "Reflections (oldest first):",
    ]
    for r in reflections:
        lines.append(f"- [round {r.round}; {r.opponent_count} opponents] {r.topic}")
        lines.append(f"  argument: {r.argument_summary}")
        lines.append(f"  reflection: {' '.join(r.free_text.split())}")
    lines += [
        "",
        "Respond in exactly this format:",
        "CONSOLIDATED PERSPECTIVE: <one paragraph>",
        "KEY INSIGHTS:",
        "- <insight>",
        "STRATEGIC LEARNINGS:",
        "- <learning>",
        "META:",
        "confidence: <low|medium|high>",
    ]
    return "\n".join(lines)


def _heading(line: str) -> tuple[str, str] | None:
    clean = line.strip().lstrip("#").strip().replace("**", "")
    for h in CONSOLIDATION_HEADINGS:
        if clean.upper().startswith(h + ":") or clean.upper() == h:
            return h, clean[len(h) + 1:].strip()
    return None


def _bullet(line: str) -> str:
    return re.sub(r"^(?:[-*•]|\d+[.)])\s*", "", line.strip()).strip()


def parse_consolidation(text: str, key: str) -> ConsolidatedTopic:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        h = _heading(line)
        if h is not None:
            current = h[0]
            if current in sections:
                raise ParseError(f"duplicate heading {current}")
            sections[current] = [h[1]] if h[1] else []
        elif current is not None and line.strip():
            sections[current].append(line)
    missing = [h for h in CONSOLIDATION_HEADINGS if h not in sections]
    if missing:
        raise ParseError(f"missing sections: {', '.join(missing)}")
    perspective = " ".join(" ".join(sections["CONSOLIDATED PERSPECTIVE"]).split())
    if not perspective:
        raise ParseError("empty consolidated perspective")
    meta = []
    for line in sections["META"]:
        k, sep, v = _bullet(line).partition(":")
        if sep and k.strip():
            meta.append((k.strip(), v.strip()))
    return ConsolidatedTopic(
        topic_key=key,
        consolidated_perspective=perspective,
        key_insights=tuple(b for b in map(_bullet, sections["KEY INSIGHTS"]) if b),
        strategic_learnings=tuple(b for b in map(_bullet, sections["STRATEGIC LEARNINGS"]) if b),
        meta=tuple(meta),
    )


def consolidate(prior: list[ReflectionRecord], new: ReflectionRecord, provider, *, key: str | None = None,
                seed: int | None = None, tags: Mapping[str, object] | None = None) -> ConsolidatedTopic | None:
    """Synthesize prior + new reflections; None when there is nothing to consolidate or parsing fails twice."""
    if not prior:
        return None
    key = key or render_key(topic_key(new.topic))
    prompt = consolidation_prompt(key, [*prior, new])
    tags = dict(tags or {}, phase="consolidation")
    for attempt in range(2):
        text = chat(provider, ChatRequest.from_prompt(prompt + (FORMAT_REMINDER if attempt else ""),
                                                     seed=seed, temperature=0.3, **tags)).content
        try:
            return parse_consolidation(text, key)
        except ParseError as exc:
            log.warning("consolidation parse failed (attempt %d): %s", attempt + 1, exc)
    log.error("consolidation for %r skipped after retry", key)
    return None


# -- evolution ---------------------------------------------------------------------


def check_evolution_eligibility(debates_completed: int, consolidated_topics: int,
                                criteria: EvolutionCriteria | None = None) -> bool:
    if debates_completed < 0 or consolidated_topics < 0:
        raise ValueError("counts must be non-negative")
    c = criteria or EvolutionCriteria()
    return debates_completed >= c.min_debates and consolidated_topics >= c.min_consolidated_topics


def evolution_prompt(cfg: AgentConfig, latest: ConsolidatedTopic, survey: Iterable[ConsolidatedTopic]) -> str:
    p = cfg.evolution_settings
    lines = [
        "You are reviewing whether your debate persona should evolve based on what you have learned.",
        "",
        "CURRENT CONFIGURATION:",
        f"description: {cfg.description}",
        f"perspective: {cfg.perspective}",
        f"priorities: {cfg.field_text('priorities')}",
        f"debate_style: {cfg.debate_style}",
        f"communication_style: {cfg.field_text('communication_style')}",
        f"preferred_evidence_types: {cfg.field_text('preferred_evidence_types')}",
        "",
        "EVOLUTION POLICY:",
        f"intensity: {p.intensity}",
        f"evolvable: {', '.join(p.evolvable)}",
        f"protected: {', '.join(p.protected)}",
        f"significance_threshold: {p.criteria.significance_threshold}",
        "",
        "LATEST CONSOLIDATED PERSPECTIVE:",
        f"topic: {latest.topic_key}",
        latest.consolidated_perspective,
        "Key insights:",
        *[f"- {s}" for s in latest.key_insights],
        "Strategic learnings:",
        *[f"- {s}" for s in latest.strategic_learnings],
        "",
        "LEARNING ACROSS TOPICS:",
    ]
    for t in survey:
        head = t.key_insights[0] if t.key_insights else t.consolidated_perspective[:160]
        lines.append(f"- {t.topic_key}: {head}")
    lines += [
        "",
        "Decide whether to evolve. Only evolvable fields may change. Respond in exactly this format:",
        "SHOULD_EVOLVE: yes|no",
        f"INTENSITY: {'|'.join(INTENSITIES)}",
        "RATIONALE: <one or two sentences>",
        "EDIT <field>: <new value>   (one line per field; list fields separated by ';', "
        "communication_style as 'tone=...; evidence_emphasis=...; emotional_appeal=...; technical_depth=...')",
    ]
    return "\n".join(lines)


_EDIT = re.compile(r"^\s*EDIT\s+([A-Za-z_\-]+)\s*:\s*(.*)$")


def parse_evolution_proposal(text: str, default_intensity: str = "moderate") -> EvolutionProposal:
    should = None
    intensity = default_intensity
    rationale = ""
    edits: dict[str, str] = {}
    for line in text.splitlines():
        clean = line.strip().replace("**", "")
        upper = clean.upper()
        if upper.startswith("SHOULD_EVOLVE:"):
            val = clean.split(":", 1)[1].strip().lower()
            if val in ("yes", "true"):
                should = True
            elif val in ("no", "false"):
                should = False
        elif upper.startswith("INTENSITY:"):
            val = clean.split(":", 1)[1].strip().lower()
            if val in INTENSITIES:
                intensity = val
        elif upper.startswith("RATIONALE:"):
            rationale = clean.split(":", 1)[1].strip()
        else:
            m = _EDIT.match(clean)
            if m:
                name = m.group(1).lower().replace("-", "_")
                if name not in FIELD_NAMES:
                    log.warning("dropping edit to unknown field %r", m.group(1))
                    continue
                if m.group(2).strip():
                    edits[name] = m.group(2).strip()
    if should is None:
        log.warning("evolution proposal unparseable; treating as no-op")
        return EvolutionProposal(False, intensity, (), rationale)
    if not should:
        return EvolutionProposal(False, intensity, (), rationale)
    ordered = tuple((f, edits[f]) for f in FIELD_NAMES if f in edits)
    return EvolutionProposal(True, intensity, ordered, rationale)


def propose_evolution(cfg: AgentConfig, latest: ConsolidatedTopic, survey: Iterable[ConsolidatedTopic], provider,
                      *, seed: int | None = None, tags: Mapping[str, object] | None = None) -> EvolutionProposal:
    if not cfg.evolution_settings.enabled:
        return EvolutionProposal(False, cfg.evolution_settings.intensity)
    prompt = evolution_prompt(cfg, latest, survey)
    text = chat(provider, ChatRequest.from_prompt(prompt, seed=seed, temperature=0.3,
                                                  **dict(tags or {}, phase="evolution"))).content
    return parse_evolution_proposal(text, cfg.evolution_settings.intensity)


def apply_evolution(cfg: AgentConfig, proposal: EvolutionProposal, *, timestamp: float = 0.0,
                    trigger_topic: str = "", on_learning: Callable[[str], None] | None = None) -> AgentConfig:
    """Apply allow-listed, policy-capped edits; bump the minor version iff anything changed."""
    if not proposal.should_evolve:
        return cfg
    policy = cfg.evolution_settings
    allowed = set(policy.allowed())
    cap = INTENSITY_EDIT_CAP[policy.intensity]
    updated = cfg
    changes: list[FieldChange] = []
    for name, value in proposal.field_edits:
        if name not in allowed:
            log.info("edit to %s filtered by policy", name)
            continue
        if cap is not None and len(changes) >= cap:
            break
        before = updated.field_text(name)
        try:
            candidate = updated.with_field_text(name, value)
        except ConfigError as exc:
            log.warning("invalid value for %s dropped: %s", name, exc)
            continue
        after = candidate.field_text(name)
        if after == before:
            continue
        updated = candidate
        changes.append(FieldChange(name, before, after))
    if not changes:
        return cfg
    version = bump_minor(cfg.version)
    summary = "evolved " + ", ".join(c.field for c in changes)
    event = EvolutionEvent(timestamp, trigger_topic, summary, proposal.rationale, tuple(changes), version)
    updated = replace(updated, version=version, evolution_history=cfg.evolution_history + (event,))
    if on_learning is not None:
        on_learning(f"EVOLUTION {cfg.version} -> {version}: {summary}. {proposal.rationale}".strip())
    return updated


# -- debate history ------------------------------------------------------------------


@dataclass
class DebateHistory:
    path: Path
    sessions: list[dict] = field(default_factory=list)

    @classmethod
    def open(cls, path: str | Path) -> "DebateHistory":
        path = Path(path)
        data = read_json(path, default={"sessions": []}) or {"sessions": []}
        return cls(path, list(data.get("sessions", [])))

    @property
    def debates_completed(self) -> int:
        return len(self.sessions)

    def append(self, session: dict) -> None:
        self.sessions.append(session)
        write_json(self.path, {"debates_completed": len(self.sessions), "sessions": self.sessions})
