"""Annotator prompting, caption generation over HTTP, and output validation.

Prompts always carry the target's class name and its oriented box as eight
integers in the text; the box is never painted into the image. Generated
captions are checked against a minimum word count and a speculation denylist,
with failed generations retried up to the endpoint's attempt budget.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from concurrent.futures import ThreadPoolExecutor

from .annotation_io import InstanceRecord, word_count
from .client import ChatClient, build_messages
from .errors import ConfigError, EmptyCaption, EndpointError
from .geometry import ObbQuad, round_flat

DEFAULT_MIN_WORDS = 60

# Configurable lexicon for the no-speculation rule; matched case-insensitively
# as whole words (phrases allow any whitespace between words).
DEFAULT_DENYLIST = (
    "maybe",
    "possibly",
    "might",
    "perhaps",
    "likely",
    "seems",
    "appears to be",
)

ASPECT_INSTRUCTIONS = {
    "intrinsic": (
        "Cover the object's own visual properties: shape, color, build, "
        "and notable parts."
    ),
    "spatial": (
        "Cover how the object is oriented and where it sits within the image."
    ),
    "contextual": (
        "Cover the surrounding environment and any visible signs of human "
        "or social activity."
    ),
}

DEFAULT_CONSTRAINTS = (
    "Write one detailed paragraph. State only what is clearly visible in the "
    "image. Do not use speculative or uncertain wording (for example: maybe, "
    "possibly, might, perhaps, likely, seems, appears to be). Keep the "
    "description orderly, internally consistent, and tied to visible evidence."
)

_TEMPLATE_HEADERS = {
    "annotate": (
        "You are annotating a remote sensing image. Describe in detail the "
        "{category} inside the oriented bounding box {obb}."
    ),
    "describe": (
        "Describe in detail the object inside the oriented bounding box {obb}. "
        "Category hint: {category}."
    ),
}


@dataclass(frozen=True)
class PromptSpec:
    """Everything needed to render one deterministic annotator prompt."""

    category: str
    obb: ObbQuad
    template_id: str = "annotate"
    intrinsic: bool = True
    spatial: bool = True
    contextual: bool = True
    constraint_text: str = DEFAULT_CONSTRAINTS


@dataclass
class Violation:
    rule: str
    matched_text: str


@dataclass
class ValidationReport:
    passed: bool
    word_count: int
    violations: list[Violation] = field(default_factory=list)


@dataclass
class CaptionOutcome:
    text: str
    report: ValidationReport
    attempts: int


def render_prompt(spec: PromptSpec) -> str:
    """Deterministic prompt text for a PromptSpec.

    Contains the category, the 8 box coordinates as integers, one
    instruction line per enabled aspect, and the constraint block.
    """
    header = _TEMPLATE_HEADERS.get(spec.template_id)
    if header is None:
        raise ConfigError(f"unknown prompt template {spec.template_id!r}")
    flags = [
        ("intrinsic", spec.intrinsic),
        ("spatial", spec.spatial),
        ("contextual", spec.contextual),
    ]
    if not any(on for _, on in flags):
        raise ConfigError("at least one aspect must be enabled")
    obb_text = "[" + ",".join(str(v) for v in round_flat(spec.obb.to_flat())) + "]"
    lines = [header.format(category=spec.category or "unknown", obb=obb_text)]
    lines.extend(ASPECT_INSTRUCTIONS[name] for name, on in flags if on)
    lines.append(spec.constraint_text)
    return "\n".join(lines)


def _denylist_patterns(denylist: Sequence[str]) -> list[tuple[str, re.Pattern]]:
    pats = []
    for term in denylist:
        words = [re.escape(w) for w in term.split()]
        pats.append((term, re.compile(r"\b" + r"\s+".join(words) + r"\b", re.IGNORECASE)))
    return pats


def validate_caption(
    text: str,
    min_words: int = DEFAULT_MIN_WORDS,
    denylist: Sequence[str] = DEFAULT_DENYLIST,
) -> ValidationReport:
    """Check length and the no-speculation rule; passed iff no violations."""
    violations = []
    wc = word_count(text)
    if wc < min_words:
        violations.append(Violation("min_words", f"{wc} < {min_words}"))
    for term, pat in _denylist_patterns(denylist):
        hit = pat.search(text)
        if hit:
            violations.append(Violation("speculation", hit.group(0)))
    return ValidationReport(passed=not violations, word_count=wc, violations=violations)


def generate_caption(
    instance: InstanceRecord,
    image_bytes: bytes,
    client: ChatClient,
    template_id: str = "annotate",
    min_words: int = DEFAULT_MIN_WORDS,
    denylist: Sequence[str] = DEFAULT_DENYLIST,
) -> CaptionOutcome:
    """Call the annotator until a caption validates or attempts run out.

    Every attempt counts against the endpoint's max_retries budget, whether
    it failed in transport, came back empty, or failed validation. With the
    budget exhausted, the last caption is returned flagged as failed;
    all-transport-failure runs raise EndpointError and all-empty runs raise
    EmptyCaption.
    """
    spec = PromptSpec(category=instance.category, obb=instance.obb, template_id=template_id)
    messages = build_messages(render_prompt(spec), image_bytes)
    budget = max(1, client.cfg.max_retries)
    last_text: Optional[str] = None
    last_report: Optional[ValidationReport] = None
    transport_err: Optional[EndpointError] = None
    for attempt in range(1, budget + 1):
        try:
            result = client.complete(messages, attempts=1)
        except EndpointError as exc:
            transport_err = exc
            continue
        if not result.text.strip():
            continue
        report = validate_caption(result.text, min_words, denylist)
        last_text, last_report = result.text, report
        if report.passed:
            return CaptionOutcome(result.text, report, attempt)
    if last_report is not None:
        return CaptionOutcome(last_text or "", last_report, budget)
    if transport_err is not None:
        raise EndpointError(f"no caption after {budget} attempts: {transport_err}")
    raise EmptyCaption(f"annotator returned empty output for {instance.instance_id}")


def caption_batch(
    items: Sequence[tuple[InstanceRecord, bytes]],
    client: ChatClient,
    template_id: str = "annotate",
    min_words: int = DEFAULT_MIN_WORDS,
    denylist: Sequence[str] = DEFAULT_DENYLIST,
    parallel: Optional[int] = None,
) -> list[CaptionOutcome]:
    """Caption many instances with bounded concurrency, preserving order."""
    workers = max(1, parallel if parallel is not None else client.cfg.parallel)

    def one(item: tuple[InstanceRecord, bytes]) -> CaptionOutcome:
        rec, img = item
        return generate_caption(rec, img, client, template_id, min_words, denylist)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))
