"""Judge orchestration, score aggregation, and report emission.

A judge (any chat endpoint, or the deterministic stub) sees the generated
caption, one rubric question, and the six options labeled A-F, and must
answer with a single letter. Scores aggregate into per-category,
per-difficulty, and per-question-type cells reported as percentages.

Aggregation is a flat question-level mean: every scored question weighs the
same within its cell, regardless of which instance it belongs to.
"""

from __future__ import annotations

import csv
import io
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from .benchmark_kit import AttributeQA, BenchmarkInstance, RubricLevel
from .client import ChatClient, build_messages
from .errors import EmptyReport, JudgeParseError

REPORT_SCHEMA_VERSION = 1

_LETTERS = "ABCDEF"
# First standalone capital A-F; letter-adjacency guard keeps words like
# "Answer" from matching while still accepting "C." or "(B)".
_LETTER_PAT = re.compile(r"(?<![A-Za-z])([A-F])(?![A-Za-z])")

JUDGE_INSTRUCTIONS = (
    "You are grading how well a generated description covers one attribute. "
    "Read the description, then pick the option that best matches it. "
    "Answer with the single capital letter of that option and nothing else."
)

_REASK = "Your previous reply was not a single option letter. Answer with exactly one letter A-F."


@dataclass(frozen=True)
class Verdict:
    question_ref: str
    selected_level: RubricLevel
    score: float
    judge_raw: str


@dataclass(frozen=True)
class ScoredQuestion:
    instance: BenchmarkInstance
    qa: AttributeQA
    verdict: Verdict


def judge_prompt(caption: str, qa: AttributeQA) -> str:
    lines = [JUDGE_INSTRUCTIONS, "", "Description:", caption, "", f"Question: {qa.question}", "Options:"]
    for letter, opt in zip(_LETTERS, qa.options):
        lines.append(f"{letter}. {opt.text}")
    return "\n".join(lines)


def parse_option_letter(text: str) -> Optional[int]:
    match = _LETTER_PAT.search(text)
    return _LETTERS.index(match.group(1)) if match else None


def judge_one(
    caption: str,
    qa: AttributeQA,
    judge: ChatClient,
    question_ref: str = "",
    reasks: int = 2,
) -> Verdict:
    """Score one question; unparseable judge output after the re-asks fails."""
    if not caption.strip():
        raise ValueError("caption must be non-empty")
    messages = build_messages(judge_prompt(caption, qa))
    replies = []
    for _ in range(1 + reasks):
        result = judge.complete(messages)
        replies.append(result.text)
        idx = parse_option_letter(result.text)
        if idx is not None:
            opt = qa.options[idx]
            return Verdict(
                question_ref=question_ref or qa.attribute,
                selected_level=opt.level,
                score=opt.score,
                judge_raw=result.text,
            )
        messages = messages + [
            {"role": "assistant", "content": result.text},
            {"role": "user", "content": _REASK},
        ]
    raise JudgeParseError(f"no option letter in judge replies: {replies!r}")


@dataclass
class JudgingRun:
    scored: list[ScoredQuestion]
    unscored: int = 0


def run_judging(
    bench: Sequence[BenchmarkInstance],
    captions_by_id: dict[str, str],
    judge: ChatClient,
    parallel: Optional[int] = None,
) -> JudgingRun:
    """Judge every question of every instance that has a caption.

    Parse failures are tallied as unscored rather than imputed as zero, so
    judge failures never masquerade as model failures.
    """
    jobs = []
    for bi in bench:
        caption = captions_by_id.get(bi.instance.instance_id, "")
        if not caption.strip():
            continue
        for qa in bi.qa_list:
            jobs.append((bi, qa, caption))

    def one(job):
        bi, qa, caption = job
        ref = f"{bi.instance.instance_id}:{qa.attribute}"
        try:
            return ScoredQuestion(bi, qa, judge_one(caption, qa, judge, question_ref=ref))
        except JudgeParseError:
            return None

    workers = max(1, parallel if parallel is not None else judge.cfg.parallel)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, jobs))
    scored = [r for r in results if r is not None]
    return JudgingRun(scored=scored, unscored=len(results) - len(scored))


@dataclass(frozen=True)
class Cell:
    mean_pct: float
    n: int


@dataclass
class EvalReport:
    per_category: dict[str, Cell]
    per_difficulty: dict[str, Cell]
    per_qtype: dict[str, Cell]
    overall: Cell
    model_name: str = ""
    judge_name: str = ""
    unscored: int = 0


def _cell(scores: list[float]) -> Cell:
    return Cell(mean_pct=100.0 * sum(scores) / len(scores), n=len(scores))


def aggregate(scored: Sequence[ScoredQuestion], model_name: str = "", judge_name: str = "", unscored: int = 0) -> EvalReport:
    """Per-cell question-level means, deterministic under input permutation."""
    if not scored:
        raise EmptyReport("no verdicts to aggregate")
    items = sorted(
        scored,
        key=lambda s: (
            s.instance.instance.instance_id,
            s.qa.qtype.value,
            s.qa.attribute,
            s.verdict.score,
        ),
    )
    by_cat: dict[str, list[float]] = {}
    by_diff: dict[str, list[float]] = {}
    by_qtype: dict[str, list[float]] = {}
    all_scores: list[float] = []
    for sq in items:
        score = sq.verdict.score
        by_cat.setdefault(sq.instance.instance.category, []).append(score)
        by_diff.setdefault(sq.instance.difficulty.value, []).append(score)
        by_qtype.setdefault(sq.qa.qtype.value, []).append(score)
        all_scores.append(score)
    return EvalReport(
        per_category={k: _cell(v) for k, v in sorted(by_cat.items())},
        per_difficulty={k: _cell(v) for k, v in by_diff.items()},
        per_qtype={k: _cell(v) for k, v in by_qtype.items()},
        overall=_cell(all_scores),
        model_name=model_name,
        judge_name=judge_name,
        unscored=unscored,
    )


_DIFF_LABELS = (("simple", "Simple"), ("complex", "Complex"), ("ood", "OOD"))
_QTYPE_LABELS = (
    ("appearance", "Appearance"),
    ("surrounding", "Surrounding"),
    ("language", "Language"),
    ("usage", "Usage"),
)


def report_to_dict(report: EvalReport) -> dict:
    def cells(d: dict[str, Cell]) -> dict:
        return {k: {"mean_pct": c.mean_pct, "n": c.n} for k, c in sorted(d.items())}

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "model_name": report.model_name,
        "judge_name": report.judge_name,
        "aggregation": "question-level mean",
        "overall": {"mean_pct": report.overall.mean_pct, "n": report.overall.n},
        "per_category": cells(report.per_category),
        "per_difficulty": cells(report.per_difficulty),
        "per_qtype": cells(report.per_qtype),
        "unscored": report.unscored,
    }


def report_from_dict(doc: dict) -> EvalReport:
    def cells(d: dict) -> dict[str, Cell]:
        return {k: Cell(v["mean_pct"], v["n"]) for k, v in d.items()}

    return EvalReport(
        per_category=cells(doc["per_category"]),
        per_difficulty=cells(doc["per_difficulty"]),
        per_qtype=cells(doc["per_qtype"]),
        overall=Cell(doc["overall"]["mean_pct"], doc["overall"]["n"]),
        model_name=doc.get("model_name", ""),
        judge_name=doc.get("judge_name", ""),
        unscored=doc.get("unscored", 0),
    )


def _table_rows(report: EvalReport) -> list[tuple[str, str, Cell]]:
    rows = [("Category", k, c) for k, c in sorted(report.per_category.items())]
    for key, label in _DIFF_LABELS:
        if key in report.per_difficulty:
            rows.append(("Difficulty Level", label, report.per_difficulty[key]))
    for key, label in _QTYPE_LABELS:
        if key in report.per_qtype:
            rows.append(("Question Type", label, report.per_qtype[key]))
    return rows


def emit_report(report: EvalReport, fmt: str = "table") -> bytes:
    """Render the report; table mirrors the three benchmark row groups."""
    if fmt == "json":
        return (json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["group", "key", "mean_pct", "n"])
        writer.writerow(["Overall", "All", f"{report.overall.mean_pct:.2f}", report.overall.n])
        for group, key, cell in _table_rows(report):
            writer.writerow([group, key, f"{cell.mean_pct:.2f}", cell.n])
        return buf.getvalue().encode("utf-8")
    if fmt == "table":
        lines = [
            f"Model: {report.model_name or '-'}    Judge: {report.judge_name or '-'}",
            "Aggregation: question-level mean (in %)",
            f"Overall: {report.overall.mean_pct:.2f} (n={report.overall.n})"
            + (f"    unscored: {report.unscored}" if report.unscored else ""),
            "",
            f"{'Group':<18} {'Key':<28} {'Mean %':>8} {'n':>6}",
            "-" * 62,
        ]
        last_group = None
        for group, key, cell in _table_rows(report):
            shown = group if group != last_group else ""
            lines.append(f"{shown:<18} {key:<28} {cell.mean_pct:>8.2f} {cell.n:>6}")
            last_group = group
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")
