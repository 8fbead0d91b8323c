"""Agent persona files: loading, validation, canonical JSON, identity rendering."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

LEVELS = ("high", "medium", "low")
INTENSITIES = ("conservative", "moderate", "radical")
FREQUENCIES = ("after_consolidation",)

# Field names addressable by evolution policies and proposals, in canonical order.
FIELD_NAMES = (
    "description",
    "perspective",
    "priorities",
    "debate_style",
    "communication_style",
    "expertise_domains",
    "preferred_evidence_types",
)
LIST_FIELDS = ("priorities", "expertise_domains", "preferred_evidence_types")

_VERSION_RE = re.compile(r"^(0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)$")
_KNOWN_KEYS = (
    "name",
    "description",
    "version",
    "enabled",
    "worldview",
    "debate_style",
    "expertise_domains",
    "preferred_evidence_types",
    "communication_style",
    "evolution_settings",
    "evolution_history",
    "metadata",
)
UNKNOWN_PREFIX = "unknown:"


class ConfigError(ValueError):
    """Raised for unparseable or schema-violating agent configs."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


def parse_version(text: str) -> tuple[int, int, int]:
    m = _VERSION_RE.match(text or "")
    if not m:
        raise ConfigError(f"not a semantic version: {text!r}", "version")
    return int(m.group(1)), int(m.group(2)), int(m.group(3))


def bump_minor(version: str) -> str:
    major, minor, _ = parse_version(version)
    return f"{major}.{minor + 1}.0"


@dataclass(frozen=True)
class CommunicationStyle:
    tone: str = "factual"
    evidence_emphasis: str = "high"
    emotional_appeal: str = "low"
    technical_depth: str = "medium"

    def render(self) -> str:
        return (
            f"tone={self.tone}; evidence_emphasis={self.evidence_emphasis}; "
            f"emotional_appeal={self.emotional_appeal}; technical_depth={self.technical_depth}"
        )

    @classmethod
    def parse(cls, text: str) -> "CommunicationStyle":
        """Inverse of :meth:`render`; raises ConfigError on bad keys or levels."""
        values: dict[str, str] = {}
        for part in text.split(";"):
            if not part.strip():
                continue
            if "=" not in part:
                raise ConfigError(f"expected key=value, got {part.strip()!r}", "communication_style")
            key, value = (s.strip() for s in part.split("=", 1))
            values[key] = value
        style = cls(**{**cls().__dict__, **_checked_style_fields(values)})
        return style


def _checked_style_fields(values: Mapping[str, Any]) -> dict[str, str]:
    out = {}
    for key, value in values.items():
        if key not in ("tone", "evidence_emphasis", "emotional_appeal", "technical_depth"):
            raise ConfigError(f"unknown key {key!r}", "communication_style")
        if not isinstance(value, str) or not value:
            raise ConfigError(f"{key} must be a nonempty string", "communication_style")
        if key != "tone" and value not in LEVELS:
            raise ConfigError(f"{key} must be one of {LEVELS}, got {value!r}", "communication_style")
        out[key] = value
    return out


@dataclass(frozen=True)
class EvolutionCriteria:
    min_debates: int = 3
    min_consolidated_topics: int = 2
    significance_threshold: str = "moderate"


@dataclass(frozen=True)
class EvolutionPolicy:
    enabled: bool = True
    frequency: str = "after_consolidation"
    intensity: str = "moderate"
    evolvable: tuple[str, ...] = (
        "description",
        "perspective",
        "priorities",
        "debate_style",
        "communication_style",
        "preferred_evidence_types",
    )
    protected: tuple[str, ...] = ("expertise_domains",)
    criteria: EvolutionCriteria = field(default_factory=EvolutionCriteria)

    def allowed(self) -> tuple[str, ...]:
        return tuple(f for f in FIELD_NAMES if f in self.evolvable and f not in self.protected)


@dataclass(frozen=True)
class FieldChange:
    field: str
    before: str
    after: str


@dataclass(frozen=True)
class EvolutionEvent:
    timestamp: float
    trigger_topic: str
    summary: str
    rationale: str
    field_changes: tuple[FieldChange, ...]
    version_after: str


@dataclass(frozen=True)
class AgentConfig:
    name: str
    description: str
    perspective: str
    priorities: tuple[str, ...]
    debate_style: str
    expertise_domains: tuple[str, ...]
    preferred_evidence_types: tuple[str, ...]
    communication_style: CommunicationStyle = field(default_factory=CommunicationStyle)
    evolution_settings: EvolutionPolicy = field(default_factory=EvolutionPolicy)
    version: str = "1.0.0"
    enabled: bool = True
    evolution_history: tuple[EvolutionEvent, ...] = ()
    metadata: tuple[tuple[str, str], ...] = ()

    @property
    def agent_id(self) -> str:
        return slugify(self.name)

    def field_text(self, name: str) -> str:
        """Human-readable value of an evolvable field (lists joined by '; ')."""
        if name not in FIELD_NAMES:
            raise KeyError(name)
        value = getattr(self, name)
        if name in LIST_FIELDS:
            return "; ".join(value)
        if name == "communication_style":
            return value.render()
        return value

    def with_field_text(self, name: str, text: str) -> "AgentConfig":
        """Return a copy with one field replaced from its text form."""
        if name not in FIELD_NAMES:
            raise ConfigError("unknown field", name)
        if name in LIST_FIELDS:
            items = _dedupe(s.strip() for s in text.split(";"))
            if not items:
                raise ConfigError("list must not be empty", name)
            return replace(self, **{name: items})
        if name == "communication_style":
            return replace(self, communication_style=CommunicationStyle.parse(text))
        if not text.strip():
            raise ConfigError("must not be empty", name)
        return replace(self, **{name: text.strip()})


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def _dedupe(items) -> tuple[str, ...]:
    seen: list[str] = []
    for item in items:
        if item and item not in seen:
            seen.append(item)
    return tuple(seen)


# -- validation / (de)serialization ---------------------------------------


def _require(data: Mapping[str, Any], key: str, kind: type, where: str = "") -> Any:
    path = f"{where}{key}"
    if key not in data:
        raise ConfigError("missing field", path)
    value = data[key]
    if kind is str and (not isinstance(value, str)):
        raise ConfigError("must be a string", path)
    if kind is list and not (isinstance(value, list) and all(isinstance(v, str) for v in value)):
        raise ConfigError("must be a list of strings", path)
    if kind is dict and not isinstance(value, dict):
        raise ConfigError("must be an object", path)
    if kind is bool and not isinstance(value, bool):
        raise ConfigError("must be a boolean", path)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int) or value < 0):
        raise ConfigError("must be a non-negative integer", path)
    return value


def _policy_from_dict(data: Mapping[str, Any]) -> EvolutionPolicy:
    w = "evolution_settings."
    enabled = _require(data, "enabled", bool, w)
    frequency = _require(data, "frequency", str, w)
    if frequency not in FREQUENCIES:
        raise ConfigError(f"must be one of {FREQUENCIES}", w + "frequency")
    intensity = _require(data, "intensity", str, w)
    if intensity not in INTENSITIES:
        raise ConfigError(f"must be one of {INTENSITIES}", w + "intensity")
    evolvable = tuple(_require(data, "evolvable", list, w))
    protected = tuple(_require(data, "protected", list, w))
    for name, values in (("evolvable", evolvable), ("protected", protected)):
        for f in values:
            if f not in FIELD_NAMES:
                raise ConfigError(f"unknown field {f!r}", w + name)
    overlap = sorted(set(evolvable) & set(protected))
    if overlap:
        raise ConfigError(f"fields both evolvable and protected: {overlap}", w + "evolvable")
    crit = data.get("criteria", {})
    if not isinstance(crit, dict):
        raise ConfigError("must be an object", w + "criteria")
    criteria = EvolutionCriteria(
        min_debates=_require(crit, "min_debates", int, w + "criteria.") if "min_debates" in crit else 3,
        min_consolidated_topics=(
            _require(crit, "min_consolidated_topics", int, w + "criteria.")
            if "min_consolidated_topics" in crit
            else 2
        ),
        significance_threshold=str(crit.get("significance_threshold", "moderate")),
    )
    return EvolutionPolicy(enabled, frequency, intensity, evolvable, protected, criteria)


def _history_from_list(items: Any, protected: tuple[str, ...]) -> tuple[EvolutionEvent, ...]:
    if not isinstance(items, list):
        raise ConfigError("must be a list", "evolution_history")
    events = []
    for k, item in enumerate(items):
        where = f"evolution_history[{k}]."
        changes = item.get("field_changes") if isinstance(item, dict) else None
        if not changes:
            raise ConfigError("field_changes must be nonempty", where + "field_changes")
        parsed = []
        for c in changes:
            if c.get("field") not in FIELD_NAMES:
                raise ConfigError(f"unknown field {c.get('field')!r}", where + "field_changes")
            if c["field"] in protected:
                raise ConfigError(f"protected field {c['field']!r} was changed", where + "field_changes")
            parsed.append(FieldChange(c["field"], str(c.get("before", "")), str(c.get("after", ""))))
        version_after = str(item.get("version_after", ""))
        parse_version(version_after)
        events.append(
            EvolutionEvent(
                timestamp=float(item.get("timestamp", 0.0)),
                trigger_topic=str(item.get("trigger_topic", "")),
                summary=str(item.get("summary", "")),
                rationale=str(item.get("rationale", "")),
                field_changes=tuple(parsed),
                version_after=version_after,
            )
        )
    return tuple(events)


def config_from_dict(data: Mapping[str, Any]) -> AgentConfig:
    """Validate a decoded JSON object and build an AgentConfig."""
    if not isinstance(data, Mapping):
        raise ConfigError("top level must be an object")
    name = _require(data, "name", str)
    if not name.strip():
        raise ConfigError("must be nonempty", "name")
    worldview = _require(data, "worldview", dict)
    priorities = _require(worldview, "priorities", list, "worldview.")
    if len(set(priorities)) != len(priorities):
        raise ConfigError("priorities must be duplicate-free", "worldview.priorities")
    version = _require(data, "version", str)
    parse_version(version)
    style = _require(data, "communication_style", dict)
    for key in ("tone", "evidence_emphasis", "emotional_appeal", "technical_depth"):
        _require(style, key, str, "communication_style.")
    policy = _policy_from_dict(_require(data, "evolution_settings", dict))

    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict) or not all(isinstance(v, str) for v in metadata.values()):
        raise ConfigError("must be a map of strings", "metadata")
    meta = dict(metadata)
    for key in data:
        if key not in _KNOWN_KEYS:
            meta[UNKNOWN_PREFIX + key] = json.dumps(data[key], sort_keys=True, ensure_ascii=False)

    return AgentConfig(
        name=name,
        description=_require(data, "description", str),
        perspective=_require(worldview, "perspective", str, "worldview."),
        priorities=tuple(priorities),
        debate_style=_require(data, "debate_style", str),
        expertise_domains=tuple(_require(data, "expertise_domains", list)),
        preferred_evidence_types=tuple(_require(data, "preferred_evidence_types", list)),
        communication_style=CommunicationStyle(**_checked_style_fields(style)),
        evolution_settings=policy,
        version=version,
        enabled=bool(data.get("enabled", True)),
        evolution_history=_history_from_list(data.get("evolution_history", []), policy.protected),
        metadata=tuple(sorted(meta.items())),
    )


def config_to_dict(cfg: AgentConfig) -> dict[str, Any]:
    """Canonical key order; this is the on-disk layout."""
    p = cfg.evolution_settings
    return {
        "name": cfg.name,
        "description": cfg.description,
        "version": cfg.version,
        "enabled": cfg.enabled,
        "worldview": {"perspective": cfg.perspective, "priorities": list(cfg.priorities)},
        "debate_style": cfg.debate_style,
        "expertise_domains": list(cfg.expertise_domains),
        "preferred_evidence_types": list(cfg.preferred_evidence_types),
        "communication_style": {
            "tone": cfg.communication_style.tone,
            "evidence_emphasis": cfg.communication_style.evidence_emphasis,
            "emotional_appeal": cfg.communication_style.emotional_appeal,
            "technical_depth": cfg.communication_style.technical_depth,
        },
        "evolution_settings": {
            "enabled": p.enabled,
            "frequency": p.frequency,
            "intensity": p.intensity,
            "evolvable": list(p.evolvable),
            "protected": list(p.protected),
            "criteria": {
                "min_debates": p.criteria.min_debates,
                "min_consolidated_topics": p.criteria.min_consolidated_topics,
                "significance_threshold": p.criteria.significance_threshold,
            },
        },
        "evolution_history": [
            {
                "timestamp": ev.timestamp,
                "trigger_topic": ev.trigger_topic,
                "summary": ev.summary,
                "rationale": ev.rationale,
                "field_changes": [
                    {"field": c.field, "before": c.before, "after": c.after} for c in ev.field_changes
                ],
                "version_after": ev.version_after,
            }
            for ev in cfg.evolution_history
        ],
        "metadata": dict(cfg.metadata),
    }


def dumps_config(cfg: AgentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, ensure_ascii=False) + "\n"


def loads_config(text: str) -> AgentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return config_from_dict(data)


def load_agent_config(path: str | Path) -> AgentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such file: {path}")
    return loads_config(path.read_text(encoding="utf-8"))


def save_agent_config(cfg: AgentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_config(cfg), encoding="utf-8")
    tmp.replace(path)
    return path


def render_identity_block(cfg: AgentConfig, include_expertise: bool = True) -> str:
    lines = [
        f"You are: {cfg.description}",
        "",
        "Your core worldview:",
        f"Perspective: {cfg.perspective}",
        f"Priorities: {', '.join(cfg.priorities)}",
        f"Debate Style: {cfg.debate_style}",
    ]
    if include_expertise:
        lines += [
            "",
            f"Your expertise areas: {', '.join(cfg.expertise_domains)}",
            f"Your preferred evidence types: {', '.join(cfg.preferred_evidence_types)}",
        ]
    return "\n".join(lines)


PERSONA_DIR = Path(__file__).parent / "data" / "personas"


def builtin_personas() -> dict[str, Path]:
    """Bundled persona files keyed by agent id."""
    return {p.stem: p for p in sorted(PERSONA_DIR.glob("*.json"))}


def resolve_agent_path(ref: str, base: Path | None = None) -> Path:
    """``builtin:<id>`` selects a bundled persona; anything else is a path."""
    if ref.startswith("builtin:"):
        key = ref.split(":", 1)[1]
        personas = builtin_personas()
        if key not in personas:
            raise ConfigError(f"unknown builtin persona {key!r}", "agents")
        return personas[key]
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    return path
