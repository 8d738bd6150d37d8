"""Benchmark data modeling: rubric QA, difficulty tiers, question taxonomy.

Each benchmark question pairs a human-annotated attribute value with six
graded rubric options on a fixed 0.0/0.2/0.4/0.6/0.8/1.0 score ladder, from
contradicting the expected value up to extending it with grounded inference.
Every benchmark instance additionally carries five general language-quality
questions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .annotation_io import Difficulty, InstanceRecord, instance_from_dict, instance_to_dict, write_jsonl
from .errors import ParseError, SchemaError
from .geometry import enclosing_aabb


class RubricLevel(Enum):
    CONTRADICTS = "contradicts"
    NOT_MENTIONED = "not_mentioned"
    VAGUE_HINT = "vague_hint"
    IMPLIED_SUPPORT = "implied_support"
    CLEAR_EVIDENCE = "clear_evidence"
    GROUNDED_EXTENSION = "grounded_extension"


# Fixed level -> score ladder; uniform spacing makes a report cell a plain
# mean of option scores times 100.
RUBRIC_SCORES = {
    RubricLevel.CONTRADICTS: 0.0,
    RubricLevel.NOT_MENTIONED: 0.2,
    RubricLevel.VAGUE_HINT: 0.4,
    RubricLevel.IMPLIED_SUPPORT: 0.6,
    RubricLevel.CLEAR_EVIDENCE: 0.8,
    RubricLevel.GROUNDED_EXTENSION: 1.0,
}

RUBRIC_ORDER = tuple(RUBRIC_SCORES)

_OPTION_TEMPLATES = {
    RubricLevel.CONTRADICTS: "The description contradicts the expected {attribute} ({value}).",
    RubricLevel.NOT_MENTIONED: "The description does not mention the {attribute} at all.",
    RubricLevel.VAGUE_HINT: "The description gives only a vague hint about the {attribute}, without committing to {value}.",
    RubricLevel.IMPLIED_SUPPORT: "The description supports {value} indirectly, through implication rather than explicit statement.",
    RubricLevel.CLEAR_EVIDENCE: "The description states clear, explicit evidence matching {value}.",
    RubricLevel.GROUNDED_EXTENSION: "The description states {value} and extends it with reasonable inference grounded in the image.",
}


class QType(Enum):
    APPEARANCE = "appearance"
    SURROUNDING = "surrounding"
    LANGUAGE = "language"
    USAGE = "usage"


@dataclass(frozen=True)
class RubricOption:
    level: RubricLevel
    text: str
    score: float


@dataclass(frozen=True)
class AttributeQA:
    attribute: str
    human_value: str
    question: str
    options: tuple[RubricOption, ...]
    qtype: QType

    def __post_init__(self):
        if len(self.options) != 6:
            raise SchemaError(f"{self.attribute}: need exactly 6 options")
        scores = [opt.score for opt in self.options]
        if any(b <= a for a, b in zip(scores, scores[1:])):
            raise SchemaError(f"{self.attribute}: option scores must strictly increase")


@dataclass
class BenchmarkInstance:
    instance: InstanceRecord
    qa_list: list[AttributeQA]
    difficulty: Difficulty

    def __post_init__(self):
        n_lang = sum(1 for qa in self.qa_list if qa.qtype is QType.LANGUAGE)
        if n_lang != len(LANGUAGE_QUALITY_ATTRS):
            raise SchemaError(
                f"{self.instance.instance_id}: expected "
                f"{len(LANGUAGE_QUALITY_ATTRS)} language questions, got {n_lang}"
            )
        if self.difficulty is Difficulty.UNSET:
            raise SchemaError(f"{self.instance.instance_id}: difficulty must be set")


def make_qa(attribute: str, human_value: str, qtype: QType) -> AttributeQA:
    """One rubric question for a human-annotated attribute-value pair."""
    if not attribute or not human_value:
        raise SchemaError("attribute and human_value must be non-empty")
    options = tuple(
        RubricOption(
            level=level,
            text=_OPTION_TEMPLATES[level].format(attribute=attribute, value=f"'{human_value}'"),
            score=RUBRIC_SCORES[level],
        )
        for level in RUBRIC_ORDER
    )
    return AttributeQA(
        attribute=attribute,
        human_value=human_value,
        question=f"How well does the description address the {attribute}?",
        options=options,
        qtype=qtype,
    )


# The five general language-quality dimensions scored for every instance.
LANGUAGE_QUALITY_ATTRS = (
    ("grammatical correctness", "grammatically correct sentences throughout"),
    ("logical flow", "a coherent, logically ordered account of the object"),
    ("factual reliability", "statements consistent with what the image shows"),
    ("inferential capability", "sound inferences that go beyond the directly visible"),
    ("conciseness", "information-dense phrasing without repetition or filler"),
)


def language_questions() -> list[AttributeQA]:
    return [make_qa(attr, value, QType.LANGUAGE) for attr, value in LANGUAGE_QUALITY_ATTRS]


@dataclass(frozen=True)
class TileStats:
    """Per-tile context used by the difficulty heuristic."""

    instance_count: int
    touches_border: bool


# Heuristic defaults: objects at least this long, in tiles at most this
# crowded, away from tile borders, count as simple.
SIMPLE_MIN_SIDE = 112
SIMPLE_MAX_DENSITY = 20


def classify_difficulty(
    instance: InstanceRecord,
    tile_stats: TileStats,
    ood_categories: Iterable[str] = (),
) -> Difficulty:
    """Difficulty tier; a manual override on the record always wins."""
    if instance.difficulty_override is not None and instance.difficulty_override is not Difficulty.UNSET:
        return instance.difficulty_override
    if instance.category in set(ood_categories):
        return Difficulty.OOD
    longer = enclosing_aabb(instance.obb).longer_side
    if (
        longer >= SIMPLE_MIN_SIDE
        and tile_stats.instance_count <= SIMPLE_MAX_DENSITY
        and not tile_stats.touches_border
    ):
        return Difficulty.SIMPLE
    return Difficulty.COMPLEX


def build_benchmark(
    instances: Sequence[InstanceRecord],
    attributes_by_id: dict[str, list[tuple[str, str, QType]]],
    ood_categories: Iterable[str] = (),
    tile_stats_by_id: Optional[dict[str, TileStats]] = None,
) -> list[BenchmarkInstance]:
    """Attach attribute QAs, the language questions, and a difficulty tier.

    Instances with no attribute entry in the manifest are skipped: every
    benchmark instance needs at least one human attribute-value pair.
    """
    ood = set(ood_categories)
    out = []
    for rec in instances:
        attrs = attributes_by_id.get(rec.instance_id)
        if not attrs:
            continue
        stats = (tile_stats_by_id or {}).get(rec.instance_id, TileStats(1, False))
        qa_list = [make_qa(a, v, q) for a, v, q in attrs] + language_questions()
        out.append(
            BenchmarkInstance(
                instance=rec,
                qa_list=qa_list,
                difficulty=classify_difficulty(rec, stats, ood),
            )
        )
    return out


# --- manifest + benchmark JSONL ----------------------------------------------


def read_attribute_manifest(path: str | Path) -> dict[str, list[tuple[str, str, QType]]]:
    """Attribute manifest JSONL: {"instance_id", "attributes": [{attribute, value, qtype}]}."""
    out: dict[str, list[tuple[str, str, QType]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc.msg}", line_no, str(path)) from None
            try:
                entries = [
                    (a["attribute"], a["value"], QType(a.get("qtype", "appearance")))
                    for a in doc["attributes"]
                ]
                out.setdefault(doc["instance_id"], []).extend(entries)
            except KeyError as exc:
                raise ParseError(f"missing field {exc.args[0]!r}", line_no, str(path)) from None
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from None
    return out


def qa_to_dict(qa: AttributeQA) -> dict:
    return {
        "attribute": qa.attribute,
        "human_value": qa.human_value,
        "question": qa.question,
        "qtype": qa.qtype.value,
        "options": [
            {"level": o.level.value, "text": o.text, "score": o.score} for o in qa.options
        ],
    }


def qa_from_dict(doc: dict) -> AttributeQA:
    try:
        return AttributeQA(
            attribute=doc["attribute"],
            human_value=doc["human_value"],
            question=doc["question"],
            qtype=QType(doc["qtype"]),
            options=tuple(
                RubricOption(RubricLevel(o["level"]), o["text"], float(o["score"]))
                for o in doc["options"]
            ),
        )
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def benchmark_to_dict(bi: BenchmarkInstance) -> dict:
    return {
        "instance": instance_to_dict(bi.instance),
        "difficulty": bi.difficulty.value,
        "qa_list": [qa_to_dict(qa) for qa in bi.qa_list],
    }


def benchmark_from_dict(doc: dict) -> BenchmarkInstance:
    try:
        return BenchmarkInstance(
            instance=instance_from_dict(doc["instance"]),
            difficulty=Difficulty(doc["difficulty"]),
            qa_list=[qa_from_dict(q) for q in doc["qa_list"]],
        )
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def write_benchmark(items: Sequence[BenchmarkInstance], path: str | Path) -> None:
    write_jsonl((benchmark_to_dict(b) for b in items), path)


def read_benchmark(path: str | Path) -> list[BenchmarkInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc.msg}", line_no, str(path)) from None
            out.append(benchmark_from_dict(doc))
    return out
