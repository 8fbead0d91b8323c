"""Debate controller: topics x rounds, prompt assembly, broadcasting and the
per-round reflection / consolidation / evolution phase.

Run directory layout::

    transcript.jsonl  manifest.json  providers.log.jsonl  web_cache.jsonl
    agents/<agent_id>.json                        live persona (evolves)
    agents/snapshots/<agent_id>/initial/          persona + memory before topic 1
    agents/snapshots/<agent_id>/after-topic-NN/   persona + memory after topic NN
    memory/<agent_id>/                            notes, reflections, topics, history
    rag/<namespace>/chunks.jsonl
"""

from __future__ import annotations

import json
import logging
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .common import (
    append_jsonl,
    derive_seed,
    first_sentence,
    make_clock,
    write_json,
)
from .config import (
    AgentConfig,
    ConfigError,
    EvolutionCriteria,
    load_agent_config,
    resolve_agent_path,
    save_agent_config,
)
from .memory import MemoryStore
from .prompts import (
    PromptSections,
    facilitator_prompt,
    identity_for,
    render_prompt,
    round_guidance,
)
from .providers import (
    ChatRequest,
    EvidenceItem,
    LoggedChat,
    ScriptedSearch,
    WebSearchClient,
    chat,
    chat_from_spec,
    embedder_from_spec,
    search_from_spec,
    word_tokens,
)
from .rag import DocumentStore
from .reflection import (
    JACCARD_THRESHOLD,
    DebateHistory,
    ReflectionRecord,
    TopicStore,
    apply_evolution,
    check_evolution_eligibility,
    consolidate,
    jaccard,
    parse_key,
    propose_evolution,
    reflection_prompt,
    topic_key,
)

log = logging.getLogger(__name__)

EVENT_KINDS = ("opening", "statement", "reflection", "consolidation", "evolution", "closing",
               "facilitator_note", "tool_call", "error")
MEMORY_QUERY_TEMPLATE = "<topic> round <r> <first priority>"
EVIDENCE_CHARS = 600
RECENT_POINTS = 6
REFLECTIONS_IN_PROMPT = 3
_TOOL_CALL = re.compile(r'TOOL_CALL:\s*web_search\(\s*query\s*=\s*"([^"]+)"\s*\)')


@dataclass(frozen=True)
class ToolFlags:
    memory: bool
    web: bool
    evolution: bool
    rag: bool = False


CONDITIONS = {
    "baseline": (False, False, False),
    "mem": (True, False, False),
    "mem_web": (True, True, False),
    "mem_evo": (True, False, True),
    "mem_evo_web": (True, True, True),
}


def condition_flags(condition: str, rag: bool = False) -> ToolFlags:
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}; expected one of {sorted(CONDITIONS)}", "condition")
    return ToolFlags(*CONDITIONS[condition], rag=rag)


@dataclass
class ExperimentConfig:
    condition: str
    topics: list[str]
    agents: list[str]
    rounds_per_topic: int = 5
    seed: int = 0
    facilitator: str = "off"
    rag: bool = False
    clock: str = "system"
    search_year: int | None = None
    label: str | None = None
    model: dict = field(default_factory=lambda: {"type": "scripted"})
    embedding: dict = field(default_factory=lambda: {"type": "hashing"})
    search: dict = field(default_factory=lambda: {"type": "scripted"})
    documents: list[dict] = field(default_factory=list)
    evolution_criteria: dict | None = None
    memory_k: int = 3

    def __post_init__(self):
        condition_flags(self.condition, self.rag)
        if not self.topics:
            raise ConfigError("topics must be nonempty", "topics")
        if not self.agents:
            raise ConfigError("agents must be nonempty", "agents")
        if self.rounds_per_topic < 1:
            raise ConfigError("rounds_per_topic must be >= 1", "rounds_per_topic")
        if self.facilitator not in ("off", "passive"):
            raise ConfigError("facilitator must be 'off' or 'passive'", "facilitator")
        if self.clock not in ("system", "logical"):
            raise ConfigError("clock must be 'system' or 'logical'", "clock")

    @property
    def condition_label(self) -> str:
        return self.label or self.condition

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}", sorted(unknown)[0])
        for key in ("condition", "topics", "agents"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}", key)
        return cls(**dict(data))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class RoundContext:
    topic: str
    round: int
    prior_arguments: list[tuple[str, str]]
    opponent_claims: list[tuple[str, str]]
    persona_instruction: str


@dataclass
class Argument:
    agent_id: str
    round: int
    phase: str
    text: str
    evidence_count: int


@dataclass
class AgentState:
    config: AgentConfig
    config_path: Path
    memory_dir: Path
    memory: MemoryStore | None
    topics: TopicStore | None
    history: DebateHistory

    @property
    def agent_id(self) -> str:
        return self.config.agent_id


class Transcript:
    def __init__(self, path: Path, clock):
        self.path = path
        self.clock = clock
        self.seq = 0
        self.events: list[dict] = []
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("", encoding="utf-8")

    def emit(self, kind: str, agent_id: str, topic_index: int, round: int, content: str = "",
             data: Mapping | None = None) -> dict:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self.seq += 1
        event = {"seq": self.seq, "kind": kind, "agent_id": agent_id, "topic_index": topic_index,
                 "round": round, "content": content, "timestamp": self.clock.now(), "data": dict(data or {})}
        self.events.append(event)
        append_jsonl(self.path, event)
        return event


def format_evidence(item: EvidenceItem) -> str:
    text = " ".join(item.content.split())
    if len(text) > EVIDENCE_CHARS:
        text = text[: EVIDENCE_CHARS - 3].rstrip() + "..."
    return f"[{item.source}] {text}"


def memory_query(cfg: AgentConfig, topic: str, round: int) -> str:
    return f"{topic} round {round} {cfg.priorities[0] if cfg.priorities else ''}".strip()


class Orchestrator:
    def __init__(self, config: ExperimentConfig, out_dir: str | Path, *, chat_provider=None, embedder=None,
                 search_backend=None, base_dir: Path | None = None):
        self.cfg = config
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.flags = condition_flags(config.condition, config.rag)
        self.clock = make_clock(config.clock)
        inner = chat_provider if chat_provider is not None else chat_from_spec(config.model)
        self.chat = LoggedChat(inner, self.out / "providers.log.jsonl", self.clock)
        self.embedder = embedder if embedder is not None else embedder_from_spec(config.embedding)
        backend = search_backend
        if backend is None and self.flags.web:
            backend = search_from_spec(config.search)
        self.web = WebSearchClient(backend or ScriptedSearch(), self.out / "web_cache.jsonl",
                                   enabled=self.flags.web, year=config.search_year, clock=self.clock)
        self.docs = DocumentStore(self.out / "rag", self.embedder, self.clock) if self.flags.rag else None
        self.transcript = Transcript(self.out / "transcript.jsonl", self.clock)
        self.agents = [self._load_agent(ref, base_dir) for ref in config.agents]
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate agent ids: {ids}", "agents")
        if self.docs is not None:
            for doc in config.documents:
                text = Path(resolve_agent_path(doc["path"], base_dir)).read_text(encoding="utf-8")
                self.docs.ingest_document(text, doc.get("namespace", "shared"), tuple(doc.get("tags", ())),
                                          source=Path(doc["path"]).name)
        self.arguments: list[Argument] = []
        self.topic_index = 0
        self.topics_completed: list[int] = []

    # -- setup --------------------------------------------------------------

    def _load_agent(self, ref: str, base_dir: Path | None) -> AgentState:
        cfg = load_agent_config(resolve_agent_path(ref, base_dir))
        if self.cfg.evolution_criteria:
            from dataclasses import replace

            crit = replace(cfg.evolution_settings.criteria, **self.cfg.evolution_criteria)
            cfg = replace(cfg, evolution_settings=replace(cfg.evolution_settings, criteria=crit))
        path = save_agent_config(cfg, self.out / "agents" / f"{cfg.agent_id}.json")
        mem_dir = self.out / "memory" / cfg.agent_id
        mem_dir.mkdir(parents=True, exist_ok=True)
        memory = MemoryStore(mem_dir, self.embedder, self.clock) if self.flags.memory else None
        topics = TopicStore(mem_dir / "consolidated_topics.json") if self.flags.memory else None
        return AgentState(cfg, path, mem_dir, memory, topics, DebateHistory.open(mem_dir / "debate_history.json"))

    def manifest(self, exit_code: int | None = None) -> dict:
        return {
            "condition": self.cfg.condition,
            "label": self.cfg.condition_label,
            "flags": vars(self.flags),
            "seed": self.cfg.seed,
            "topics": self.cfg.topics,
            "rounds_per_topic": self.cfg.rounds_per_topic,
            "speaking_order": [a.agent_id for a in self.agents],
            "facilitator": self.cfg.facilitator,
            "clock": self.cfg.clock,
            "providers": {"chat": self.chat.provider_id,
                          "embedding": getattr(self.embedder, "provider_id", type(self.embedder).__name__),
                          "search": getattr(self.web.backend, "provider_id", "search") if self.flags.web else None},
            "templates": {
                "memory_query": MEMORY_QUERY_TEMPLATE,
                "web_query": MEMORY_QUERY_TEMPLATE + " enriched with (context: <first expertise domain>) "
                                                     "and a recency token",
                "high_importance_notes": "closing statement plus the statement citing the most evidence items",
                "opening_statements": "visible to other agents as prior arguments from round 1 on",
                "evolution_edit_cap": "conservative=2, moderate=4, radical=unbounded",
            },
            "topics_completed": self.topics_completed,
            "exit_code": exit_code,
        }

    # -- main loop ------------------------------------------------------------

    def run(self) -> int:
        write_json(self.out / "manifest.json", self.manifest())
        for a in self.agents:
            self._snapshot(a, "initial")
        for ti in range(len(self.cfg.topics)):
            self.run_topic(ti)
        code = 0 if len(self.topics_completed) == len(self.cfg.topics) else 1
        write_json(self.out / "manifest.json", self.manifest(code))
        return code

    def run_topic(self, ti: int) -> bool:
        self.topic_index = ti
        self.arguments = []
        R = self.cfg.rounds_per_topic
        for a in self.agents:
            self.take_turn(a, "opening", 0)
        rounds_ok = [self.run_round(ti, r) for r in range(1, R + 1)]
        for a in self.agents:
            self.take_turn(a, "closing", R + 1)
        for a in self.agents:
            self.session_end(a, ti)
            self._snapshot(a, f"after-topic-{ti + 1:02d}")
        ok = all(rounds_ok)
        if ok:
            self.topics_completed.append(ti)
        return ok

    def run_round(self, ti: int, r: int) -> bool:
        said = {}
        for a in self.agents:
            text = self.take_turn(a, "statement", r)
            if text is not None:
                said[a.agent_id] = text
        if self.cfg.facilitator == "passive" and said:
            self.facilitator_note(ti, r)
        for a in self.agents:
            if a.agent_id in said:
                self.reflect(a, r, said)
        return bool(said)

    # -- turns ------------------------------------------------------------------

    @property
    def topic(self) -> str:
        return self.cfg.topics[self.topic_index]

    def _emit(self, kind: str, agent_id: str, r: int, content: str = "", data: Mapping | None = None) -> dict:
        return self.transcript.emit(kind, agent_id, self.topic_index, r, content, data)

    def _ask(self, a_id: str, phase: str, r: int, prompt: str, **extra) -> str | None:
        seed = derive_seed(self.cfg.seed, a_id, self.topic_index, r, phase, *extra.values())
        req = ChatRequest.from_prompt(prompt, seed=seed, agent=a_id, topic=self.topic_index, round=r,
                                      phase=phase, condition=self.cfg.condition_label, **extra)
        try:
            return chat(self.chat, req).content
        except Exception as exc:
            self._emit("error", a_id, r, str(exc), {"phase": phase})
            return None

    def round_context(self, a: AgentState, r: int) -> RoundContext:
        prior = [(x.agent_id, x.text) for x in self.arguments if x.round < r]
        if a.memory is not None:
            claims = [(c.opponent_id, c.claim)
                      for c in a.memory.recent_opponent_claims(RECENT_POINTS, topic=self.topic, before_round=r)]
        else:
            claims = [(x.agent_id, first_sentence(x.text)) for x in reversed(self.arguments)
                      if x.round < r and x.agent_id != a.agent_id][:RECENT_POINTS]
        phase = "opening" if r == 0 else "statement"
        return RoundContext(self.topic, r, prior, claims,
                            round_guidance(a.config, phase, r, self.cfg.rounds_per_topic))

    def gather_evidence(self, a: AgentState, r: int) -> list[EvidenceItem]:
        q = memory_query(a.config, self.topic, r)
        items: list[EvidenceItem] = []
        if a.memory is not None:
            hits = a.memory.retrieve(q, self.cfg.memory_k, exclude_tags=("lesson", "insight", "reflection"))
            now = self.clock.now()
            mem_items = [EvidenceItem("memory", q, h.note.content, now, f"note:{h.note.id}") for h in hits]
            items += mem_items
            self._emit("tool_call", a.agent_id, r, f"memory_retrieve: {q}", {
                "tool": "memory_retrieve", "query": q,
                "results": [{"id": h.note.id, "relevance": h.relevance, "score": h.score} for h in hits]})
        if self.docs is not None:
            rag_items = self.docs.evidence(q, ("shared", f"agent:{a.agent_id}"), n=3, now=self.clock.now())
            items += rag_items
            self._emit("tool_call", a.agent_id, r, f"rag_query: {q}", {
                "tool": "rag_query", "query": q, "results": [e.provenance for e in rag_items]})
        if self.flags.web:
            items += self._web(a, r, q)
        return items

    def _web(self, a: AgentState, r: int, query: str) -> list[EvidenceItem]:
        tag = a.config.expertise_domains[0] if a.config.expertise_domains else ""
        before = self.web.remote_calls
        self.web.last_error = None
        found = self.web.search(query, topic_tag=tag)
        self._emit("tool_call", a.agent_id, r, f"web_search: {query}", {
            "tool": "web_search", "query": query, "enriched": self.web.enrich(query, tag),
            "cached": self.web.remote_calls == before, "error": self.web.last_error,
            "results": [e.provenance for e in found]})
        return found

    def build_sections(self, a: AgentState, phase: str, ctx: RoundContext,
                       evidence: list[EvidenceItem]) -> PromptSections:
        cfg = a.config
        s = PromptSections(phase=phase, identity=identity_for(cfg, phase), topic=ctx.topic, round=ctx.round)
        if phase == "closing":
            s.own_arguments = [first_sentence(x.text) for x in self.arguments if x.agent_id == a.agent_id]
            s.opponent_arguments = [[x.agent_id, first_sentence(x.text)] for x in self.arguments
                                    if x.agent_id != a.agent_id]
            return s
        s.evidence = [format_evidence(e) for e in evidence]
        s.web_available = self.flags.web
        s.rag_enabled = self.flags.rag
        s.guidance = ctx.persona_instruction
        s.recent_points = [[who, text] for who, text in ctx.opponent_claims]
        if a.memory is not None:
            q = memory_query(cfg, ctx.topic, ctx.round)
            lessons = a.memory.retrieve(q, 3, tag="lesson")
            insights = a.memory.retrieve(q, 3, tag="insight")
            s.lessons = [h.note.content for h in lessons]
            s.insights = [h.note.content for h in insights]
            active = a.memory.active_reflections()
            same = [x for x in active if x.topic == ctx.topic]
            chosen = (same if phase == "statement" and same else active)[-REFLECTIONS_IN_PROMPT:]
            s.reflections = [first_sentence(x.free_text, 300) for x in chosen]
            if lessons or insights or chosen:
                self._emit("tool_call", a.agent_id, ctx.round, "memory_context", {
                    "tool": "memory_context", "lessons": [h.note.id for h in lessons],
                    "insights": [h.note.id for h in insights], "reflections": [x.timestamp for x in chosen]})
        return s

    def take_turn(self, a: AgentState, phase: str, r: int) -> str | None:
        ctx = self.round_context(a, r)
        evidence = self.gather_evidence(a, r) if phase != "closing" else []
        sections = self.build_sections(a, phase, ctx, evidence)
        prompt = render_prompt(sections)
        text = self._ask(a.agent_id, phase, r, prompt)
        if text is None:
            return None
        m = _TOOL_CALL.search(text) if self.flags.web and phase != "closing" else None
        if m:
            extra = self._web(a, r, m.group(1))
            evidence += extra
            sections.tool_results = [format_evidence(e) for e in extra] or ["(search returned no results)"]
            prompt = render_prompt(sections)
            text = self._ask(a.agent_id, phase, r, prompt, attempt="2")
            if text is None:
                return None
        self._emit(phase, a.agent_id, r, text, {
            "prompt": prompt, "sections": sections.to_dict(),
            "evidence": [e.to_dict() for e in evidence]})
        self.arguments.append(Argument(a.agent_id, r, phase, text, len(evidence)))
        claim = first_sentence(text)
        for other in self.agents:
            if other is not a and other.memory is not None:
                other.memory.track_opponent_claim(a.agent_id, claim, r, self.topic)
        if a.memory is not None and evidence and phase != "closing":
            counts: dict[str, int] = {}
            for e in evidence:
                counts[e.source] = counts.get(e.source, 0) + 1
            breakdown = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
            note = (f"Evidence analysis for '{self.topic}' ({phase}, round {r}): {breakdown}. "
                    f"Sample: {first_sentence(evidence[0].content, 200)}")
            nid = a.memory.save_note("session", note, "medium", tags=("evidence",))
            self._emit("tool_call", a.agent_id, r, "memory_save", {"tool": "memory_save", "ids": [nid]})
        return text

    # -- facilitator ------------------------------------------------------------

    def facilitator_note(self, ti: int, r: int) -> dict | None:
        this_round = [x for x in self.arguments if x.round == r and x.phase == "statement"]
        total_ev = sum(x.evidence_count for x in self.arguments)
        score = sum(min(x.evidence_count, 3) / 3 for x in this_round) / max(len(this_round), 1)
        quality = "high" if score >= 2 / 3 else "medium" if score >= 1 / 3 else "low"
        cited = sum(1 for x in this_round if x.evidence_count)
        prompt = facilitator_prompt(
            self.topic, r, len(self.arguments), total_ev,
            [(x.agent_id, first_sentence(x.text)) for x in this_round], quality, score,
            strengths=f"evidence cited in {cited} of {len(this_round)} arguments" if cited else "",
            improvements="" if cited == len(this_round) else "more arguments should be grounded in evidence")
        text = self._ask("facilitator", "facilitator", r, prompt)
        if text is None:
            return None
        return self._emit("facilitator_note", "facilitator", r, text, {"prompt": prompt})

    # -- learning phase ---------------------------------------------------------

    def reflect(self, a: AgentState, r: int, said: Mapping[str, str]) -> None:
        opponents = [(who, first_sentence(t)) for who, t in said.items() if who != a.agent_id]
        prompt = reflection_prompt(a.config, self.topic, r, said[a.agent_id], opponents)
        text = self._ask(a.agent_id, "reflection", r, prompt)
        if text is None:
            return
        record = ReflectionRecord(r, self.topic, first_sentence(said[a.agent_id]), len(opponents), text,
                                  self.clock.now())
        self._emit("reflection", a.agent_id, r, text, {"record": record.to_dict()})
        if a.memory is None:
            return
        key = a.topics.resolve_key(self.topic)
        key_set = parse_key(key)
        prior = [x for x in a.memory.all_reflections()
                 if jaccard(_safe_key(x.topic), key_set) >= JACCARD_THRESHOLD]
        a.memory.append_reflection_log(record)
        a.memory.save_note("session", f"Reflection on '{self.topic}' round {r}: {text}", "medium",
                           tags=("reflection",))
        if not prior:
            return
        seed = derive_seed(self.cfg.seed, a.agent_id, self.topic_index, r, "consolidation")
        try:
            ct = consolidate(prior, record, self.chat, key=key, seed=seed,
                             tags={"agent": a.agent_id, "topic": self.topic_index, "round": r})
        except Exception as exc:
            self._emit("error", a.agent_id, r, str(exc), {"phase": "consolidation"})
            return
        if ct is None:
            self._emit("error", a.agent_id, r, "consolidation output could not be parsed",
                       {"phase": "consolidation", "topic_key": key})
            return
        a.topics.put(ct)
        a.memory.log_learning(f"CONSOLIDATED [{key}] {ct.consolidated_perspective}")
        ids = [a.memory.save_note("persistent", s, "high", tags=("lesson",)) for s in ct.strategic_learnings]
        ids += [a.memory.save_note("persistent", s, "medium", tags=("insight",)) for s in ct.key_insights]
        self._emit("consolidation", a.agent_id, r, ct.consolidated_perspective,
                   {"topic": ct.to_dict(), "prior_reflections": len(prior), "note_ids": ids})
        if self.flags.evolution:
            self.maybe_evolve(a, r, ct)

    def maybe_evolve(self, a: AgentState, r: int, latest) -> None:
        cfg = a.config
        D, U = a.history.debates_completed, len(a.topics)
        if not cfg.evolution_settings.enabled or not check_evolution_eligibility(
                D, U, cfg.evolution_settings.criteria):
            return
        seed = derive_seed(self.cfg.seed, a.agent_id, self.topic_index, r, "evolution")
        try:
            proposal = propose_evolution(cfg, latest, a.topics.values(), self.chat, seed=seed,
                                         tags={"agent": a.agent_id, "topic": self.topic_index, "round": r})
        except Exception as exc:
            self._emit("error", a.agent_id, r, str(exc), {"phase": "evolution"})
            return
        updated = apply_evolution(cfg, proposal, timestamp=self.clock.now(), trigger_topic=self.topic,
                                  on_learning=a.memory.log_learning)
        applied = updated is not cfg
        if applied:
            a.config = updated
            save_agent_config(updated, a.config_path)
        event = updated.evolution_history[-1] if applied else None
        self._emit("evolution", a.agent_id, r, event.summary if event else "no change", {
            "applied": applied, "debates_completed": D, "consolidated_topics": U,
            "version_before": cfg.version, "version_after": updated.version,
            "proposal": {"should_evolve": proposal.should_evolve, "intensity": proposal.intensity,
                         "field_edits": dict(proposal.field_edits), "rationale": proposal.rationale},
            "field_changes": [vars(c) for c in event.field_changes] if event else []})

    # -- session end --------------------------------------------------------------

    def session_end(self, a: AgentState, ti: int) -> None:
        mine = [x for x in self.arguments if x.agent_id == a.agent_id]
        statements = [x for x in mine if x.phase == "statement"]
        opening = next((x for x in mine if x.phase == "opening"), None)
        closing = next((x for x in mine if x.phase == "closing"), None)
        if opening and closing and word_tokens(opening.text) and word_tokens(closing.text):
            j = jaccard(word_tokens(opening.text), word_tokens(closing.text))
            verdict = "largely maintained" if j >= 0.5 else "substantially reframed"
            position = f"Opening-to-closing token overlap {j:.2f}: position {verdict}."
        else:
            position = "Opening or closing statement missing; position change not assessed."
        insights = []
        for other in self.agents:
            if other is a:
                continue
            theirs = [x for x in self.arguments if x.agent_id == other.agent_id]
            if theirs:
                insights.append(f"{other.agent_id}: {first_sentence(theirs[-1].text)}")
        tone = a.config.communication_style.tone or "analytical"
        article = "an" if tone[:1].lower() in "aeiou" else "a"
        n_evidence = sum(x.evidence_count for x in mine)
        learnings = [f"participated in {len(statements)} rounds using {article} {tone} style",
                     f"used {n_evidence} pieces of evidence"]
        session = {"topic": self.topic, "topic_index": ti, "rounds_completed": len(statements),
                   "position_change": position, "opponent_insights": insights,
                   "strategic_learnings": learnings, "config_version": a.config.version,
                   "timestamp": self.clock.now()}
        try:
            a.history.append(session)
        except OSError as exc:
            log.error("could not write debate history for %s: %s", a.agent_id, exc)
        _append_learning(a, f"SESSION '{self.topic}': " + "; ".join(learnings), self.clock)
        if a.memory is None:
            return
        ids = []
        if closing is not None:
            ids.append(a.memory.save_note("persistent", closing.text, "high", tags=("statement", "closing")))
        if statements:
            best = max(statements, key=lambda x: (x.evidence_count, -x.round))
            ids.append(a.memory.save_note("persistent", best.text, "high", tags=("statement",)))
        ids.append(a.memory.save_note("persistent", f"Strategy after '{self.topic}': " + "; ".join(learnings),
                                      "medium", tags=("strategy",)))
        self._emit("tool_call", a.agent_id, self.cfg.rounds_per_topic + 1, "memory_save",
                   {"tool": "memory_save", "ids": ids, "stage": "session_end"})

    def _snapshot(self, a: AgentState, name: str) -> Path:
        dest = self.out / "agents" / "snapshots" / a.agent_id / name
        if dest.exists():
            shutil.rmtree(dest)
        dest.mkdir(parents=True)
        save_agent_config(a.config, dest / "config.json")
        if self.flags.memory:
            shutil.copytree(a.memory_dir, dest / "memory")
        write_json(dest / "snapshot.json", {"agent_id": a.agent_id, "condition": self.cfg.condition,
                                            "label": self.cfg.condition_label, "name": name,
                                            "version": a.config.version})
        return dest


def _safe_key(topic: str) -> frozenset[str]:
    try:
        return topic_key(topic)
    except ValueError:
        return frozenset({"\x00"})


def _append_learning(a: AgentState, line: str, clock) -> None:
    if a.memory is not None:
        a.memory.log_learning(line)
        return
    with open(a.memory_dir / "learning_log.txt", "a", encoding="utf-8") as fh:
        fh.write(f"[{clock.now():.3f}] {line}\n")


def run_experiment(config: ExperimentConfig | str | Path, out_dir: str | Path, **kwargs) -> int:
    if not isinstance(config, ExperimentConfig):
        path = Path(config)
        cfg = ExperimentConfig.load(path)
        kwargs.setdefault("base_dir", path.parent)
    else:
        cfg = config
    return Orchestrator(cfg, out_dir, **kwargs).run()


__all__ = ["ExperimentConfig", "Orchestrator", "RoundContext", "ToolFlags", "condition_flags", "run_experiment"]
