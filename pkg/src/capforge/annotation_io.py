"""Annotation format parsing and canonical JSONL persistence.

Supported external formats:
  * DOTA annotation text: 8 corner coordinates, class token, difficulty flag,
    one object per line; ``imagesource:``/``gsd:`` header lines are skipped.
  * DOTA results text: image id, score, 8 corner coordinates (category taken
    from the file name or passed explicitly).
  * Canonical JSONL schemas for instances and detections: UTF-8, LF line
    endings, one record per line, stable field order.

Category strings are normalized to lower-kebab-case at parse time; the
source label is kept verbatim in a sidecar field.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import ParseError, SchemaError
from .geometry import ObbQuad

INSTANCE_SCHEMA_VERSION = 1


class ReviewState(Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    REVISED = "revised"
    REGENERATE = "regenerate"
    DISCARDED = "discarded"


class Difficulty(Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"
    OOD = "ood"
    UNSET = "unset"


class Source(Enum):
    DIOR = "dior"
    DOTA = "dota"
    XVIEW = "xview"
    OTHER = "other"


def normalize_category(label: str) -> str:
    """Lower-kebab-case: 'Ground Track Field' / 'ground_track_field' -> 'ground-track-field'."""
    slug = re.sub(r"[\s_]+", "-", label.strip().lower())
    slug = re.sub(r"-{2,}", "-", slug)
    return slug.strip("-")


def word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class RawAnnotation:
    """One object from a source annotation file, pre-captioning."""

    obb: ObbQuad
    category: str
    difficulty_flag: int
    source_label: str = ""

    def __post_init__(self):
        if not self.category:
            raise SchemaError("empty category")


@dataclass
class InstanceRecord:
    """One annotated object instance; the canonical unit of the dataset.

    word_count is derived from description and recomputed on construction,
    so the invariant word_count == len(description.split()) always holds.
    """

    instance_id: str
    image_ref: str
    image_w: int
    image_h: int
    category: str
    obb: ObbQuad
    description: str = ""
    word_count: int = 0
    review_state: ReviewState = ReviewState.PENDING
    difficulty: Difficulty = Difficulty.UNSET
    difficulty_override: Optional[Difficulty] = None
    source: Source = Source.OTHER
    source_label: str = ""

    def __post_init__(self):
        self.word_count = word_count(self.description)
        if self.image_w <= 0 or self.image_h <= 0:
            raise SchemaError(f"{self.instance_id}: non-positive image size")
        for x, y in self.obb.corners:
            if not (0 <= x <= self.image_w and 0 <= y <= self.image_h):
                raise SchemaError(
                    f"{self.instance_id}: corner ({x}, {y}) outside "
                    f"{self.image_w}x{self.image_h} image"
                )

    def with_description(self, text: str) -> "InstanceRecord":
        return replace(self, description=text)


@dataclass(frozen=True)
class Detection:
    """One detector output: where something is, what it is, how sure."""

    image_ref: str
    obb: ObbQuad
    category: str
    score: float
    image_w: int = 0
    image_h: int = 0

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise SchemaError(f"score {self.score} outside [0, 1]")


def _parse_floats(fields: Sequence[str], line_no: int, path: str | None) -> list[float]:
    out = []
    for tok in fields:
        try:
            val = float(tok)
        except ValueError:
            raise ParseError(f"non-numeric coordinate {tok!r}", line_no, path) from None
        if not math.isfinite(val):
            raise ParseError(f"non-finite coordinate {tok!r}", line_no, path)
        out.append(val)
    return out


def parse_dota_line(line: str, line_no: int = 0, path: str | None = None) -> RawAnnotation:
    """Parse one DOTA object line: 8 coords, category token, difficulty flag."""
    fields = line.split()
    if len(fields) != 10:
        raise ParseError(f"expected 10 fields, got {len(fields)}", line_no, path)
    coords = _parse_floats(fields[:8], line_no, path)
    try:
        difficulty_flag = int(fields[9])
    except ValueError:
        raise ParseError(f"non-integer difficulty flag {fields[9]!r}", line_no, path) from None
    try:
        return RawAnnotation(
            obb=ObbQuad.from_flat(coords),
            category=normalize_category(fields[8]),
            difficulty_flag=difficulty_flag,
            source_label=fields[8],
        )
    except (SchemaError, ValueError) as exc:
        raise ParseError(str(exc), line_no, path) from None


def serialize_dota_line(ann: RawAnnotation) -> str:
    coords = " ".join(_fmt_num(v) for v in ann.obb.to_flat())
    return f"{coords} {ann.category} {ann.difficulty_flag}"


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


_DOTA_HEADER = re.compile(r"^(imagesource|gsd)\s*:", re.IGNORECASE)


def parse_dota_file(path: str | Path) -> list[RawAnnotation]:
    """All objects in one DOTA annotation file; headers and blanks skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#") or _DOTA_HEADER.match(line):
                continue
            out.append(parse_dota_line(line, line_no, str(path)))
    return out


# --- canonical JSONL ---------------------------------------------------------

_INSTANCE_FIELDS = (
    "instance_id",
    "image_ref",
    "image_w",
    "image_h",
    "category",
    "source_label",
    "obb",
    "description",
    "word_count",
    "review_state",
    "difficulty",
    "difficulty_override",
    "source",
)


def instance_to_dict(rec: InstanceRecord) -> dict:
    return {
        "instance_id": rec.instance_id,
        "image_ref": rec.image_ref,
        "image_w": rec.image_w,
        "image_h": rec.image_h,
        "category": rec.category,
        "source_label": rec.source_label,
        "obb": rec.obb.to_flat(),
        "description": rec.description,
        "word_count": rec.word_count,
        "review_state": rec.review_state.value,
        "difficulty": rec.difficulty.value,
        "difficulty_override": (
            rec.difficulty_override.value if rec.difficulty_override else None
        ),
        "source": rec.source.value,
    }


def _enum_value(enum_cls, raw, field_name):
    try:
        return enum_cls(raw)
    except ValueError:
        raise SchemaError(f"unknown {field_name} value {raw!r}") from None


def instance_from_dict(doc: dict) -> InstanceRecord:
    try:
        return InstanceRecord(
            instance_id=doc["instance_id"],
            image_ref=doc["image_ref"],
            image_w=int(doc["image_w"]),
            image_h=int(doc["image_h"]),
            category=doc["category"],
            obb=ObbQuad.from_flat(doc["obb"]),
            description=doc.get("description", ""),
            review_state=_enum_value(ReviewState, doc.get("review_state", "pending"), "review_state"),
            difficulty=_enum_value(Difficulty, doc.get("difficulty", "unset"), "difficulty"),
            difficulty_override=(
                _enum_value(Difficulty, doc["difficulty_override"], "difficulty_override")
                if doc.get("difficulty_override")
                else None
            ),
            source=_enum_value(Source, doc.get("source", "other"), "source"),
            source_label=doc.get("source_label", ""),
        )
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}") from None


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc.msg}", line_no, str(path)) from None
            if not isinstance(doc, dict):
                raise ParseError("line is not a JSON object", line_no, str(path))
            yield line_no, doc


def read_instances(path: str | Path) -> list[InstanceRecord]:
    out = []
    for line_no, doc in _read_jsonl(path):
        try:
            out.append(instance_from_dict(doc))
        except SchemaError:
            raise
        except (ValueError, TypeError) as exc:
            raise ParseError(str(exc), line_no, str(path)) from None
    return out


def write_jsonl(docs: Iterable[dict], path: str | Path) -> None:
    """UTF-8, LF endings, compact separators, stable key order as given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def write_instances(records: Iterable[InstanceRecord], path: str | Path) -> None:
    write_jsonl((instance_to_dict(r) for r in records), path)


def detection_to_dict(det: Detection) -> dict:
    return {
        "image_ref": det.image_ref,
        "image_w": det.image_w,
        "image_h": det.image_h,
        "category": det.category,
        "obb": det.obb.to_flat(),
        "score": det.score,
    }


def detection_from_dict(doc: dict) -> Detection:
    try:
        return Detection(
            image_ref=doc["image_ref"],
            obb=ObbQuad.from_flat(doc["obb"]),
            category=doc["category"],
            score=float(doc["score"]),
            image_w=int(doc.get("image_w", 0)),
            image_h=int(doc.get("image_h", 0)),
        )
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}") from None


_RESULT_FILE_CATEGORY = re.compile(r"^(?:Task[12]_)?(?P<cat>.+?)(?:\.txt)?$")


def category_from_results_filename(name: str) -> str:
    match = _RESULT_FILE_CATEGORY.match(Path(name).name)
    return normalize_category(match.group("cat")) if match else ""


def parse_detector_results(
    path: str | Path,
    score_threshold: float = 0.0,
    category: str | None = None,
) -> list[Detection]:
    """Load detections from DOTA-results text or canonical detections JSONL.

    Detections scoring below score_threshold are dropped. For text files the
    category comes from the file name (``Task1_plane.txt`` -> ``plane``)
    unless given explicitly.
    """
    path = Path(path)
    if path.suffix == ".jsonl":
        dets = []
        for line_no, doc in _read_jsonl(path):
            try:
                dets.append(detection_from_dict(doc))
            except (ValueError, TypeError) as exc:
                raise ParseError(str(exc), line_no, str(path)) from None
    else:
        cat = category if category is not None else category_from_results_filename(path.name)
        if not cat:
            raise ParseError("cannot infer category from file name", path=str(path))
        dets = []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                fields = line.split()
                if len(fields) != 10:
                    raise ParseError(
                        f"expected 10 fields (image id, score, 8 coords), got {len(fields)}",
                        line_no,
                        str(path),
                    )
                score = _parse_floats(fields[1:2], line_no, str(path))[0]
                coords = _parse_floats(fields[2:], line_no, str(path))
                dets.append(
                    Detection(
                        image_ref=fields[0],
                        obb=ObbQuad.from_flat(coords),
                        category=cat,
                        score=score,
                    )
                )
    return [d for d in dets if d.score >= score_threshold]


def write_detections(dets: Iterable[Detection], path: str | Path) -> None:
    write_jsonl((detection_to_dict(d) for d in dets), path)
