import json
import random
import statistics

import pytest

from capforge.annotation_io import Difficulty
from capforge.benchmark_kit import BenchmarkInstance, QType, RubricLevel, language_questions, make_qa
from capforge.client import ChatClient, EndpointConfig
from capforge.errors import EmptyReport, JudgeParseError
from capforge.evaluator import (
    ScoredQuestion,
    aggregate,
    emit_report,
    judge_one,
    judge_prompt,
    parse_option_letter,
    report_from_dict,
    report_to_dict,
    run_judging,
)
from capforge.stubs import ScriptedTransport, stub_judge_transport
from conftest import axis_rect, make_record


def judge_client(script=None, seed=0):
    cfg = EndpointConfig(kind="stub-judge", model="stub-judge", retry_backoff=0.0, seed=seed)
    transport = ScriptedTransport(script) if script is not None else stub_judge_transport(seed)
    return ChatClient(cfg, transport=transport)


def bench_instance(instance_id="a", category="plane", difficulty=Difficulty.SIMPLE, extra_qa=()):
    qa = [make_qa("color", "white", QType.APPEARANCE), *extra_qa] + language_questions()
    rec = make_record(instance_id=instance_id, category=category, obb=axis_rect(10, 10, 200, 160))
    return BenchmarkInstance(instance=rec, qa_list=qa, difficulty=difficulty)


CAPTION = "A white aircraft parked on a pale apron with clear markings around it."


class TestLetterParsing:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("E", 4),
            ("The answer is C.", 2),
            ("(B)", 1),
            ("F because the description extends it", 5),
            ("Answer: A", 0),
            ("no idea", None),
            ("bcdef", None),  # lowercase words are not options
        ],
    )
    def test_first_standalone_letter(self, text, expected):
        assert parse_option_letter(text) == expected


class TestJudgeOne:
    def test_option_letter_maps_to_level_and_score(self):
        qa = make_qa("color", "white", QType.APPEARANCE)
        verdict = judge_one(CAPTION, qa, judge_client(["E"]))
        assert verdict.selected_level is RubricLevel.CLEAR_EVIDENCE
        assert verdict.score == 0.8

    def test_sentence_answer_parsed(self):
        qa = make_qa("color", "white", QType.APPEARANCE)
        verdict = judge_one(CAPTION, qa, judge_client(["The answer is C."]))
        assert verdict.selected_level is RubricLevel.VAGUE_HINT
        assert verdict.score == 0.4

    def test_reasks_then_fails(self):
        qa = make_qa("color", "white", QType.APPEARANCE)
        script = ["no idea", "still no idea", "nope"]
        with pytest.raises(JudgeParseError):
            judge_one(CAPTION, qa, judge_client(script))

    def test_reask_recovers(self):
        qa = make_qa("color", "white", QType.APPEARANCE)
        verdict = judge_one(CAPTION, qa, judge_client(["hmm", "D"]))
        assert verdict.selected_level is RubricLevel.IMPLIED_SUPPORT

    def test_empty_caption_rejected(self):
        qa = make_qa("color", "white", QType.APPEARANCE)
        with pytest.raises(ValueError):
            judge_one("   ", qa, judge_client(["A"]))

    def test_prompt_contains_all_options(self):
        qa = make_qa("color", "white", QType.APPEARANCE)
        prompt = judge_prompt(CAPTION, qa)
        assert CAPTION in prompt
        assert qa.question in prompt
        for letter in "ABCDEF":
            assert f"{letter}. " in prompt

    def test_verdict_score_is_a_rubric_score(self):
        qa = make_qa("color", "white", QType.APPEARANCE)
        for reply in ("A", "B", "C", "D", "E", "F"):
            verdict = judge_one(CAPTION, qa, judge_client([reply]))
            assert verdict.score in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def scored_fixture():
    """30 verdicts across 3 categories, 3 difficulties, mixed qtypes."""
    rng = random.Random(17)
    scores = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    out = []
    spec = [
        ("plane", Difficulty.SIMPLE),
        ("ship", Difficulty.COMPLEX),
        ("locomotive", Difficulty.OOD),
    ]
    for cat, diff in spec:
        bi = bench_instance(instance_id=f"{cat}-1", category=cat, difficulty=diff)
        qas = (bi.qa_list * 2)[:10]
        for k, qa in enumerate(qas):
            score = rng.choice(scores)
            level = list(RubricLevel)[scores.index(score)]
            from capforge.evaluator import Verdict

            out.append(
                ScoredQuestion(
                    bi, qa, Verdict(f"{cat}:{k}", level, score, judge_raw="X")
                )
            )
    return out


class TestAggregate:
    def test_simple_mean(self):
        bi = bench_instance()
        from capforge.evaluator import Verdict

        scored = [
            ScoredQuestion(bi, bi.qa_list[0], Verdict("r", RubricLevel.CLEAR_EVIDENCE, s, ""))
            for s in (0.8, 0.6, 1.0)
        ]
        report = aggregate(scored)
        assert report.per_category["plane"].mean_pct == pytest.approx(80.0)

    def test_single_verdict(self):
        bi = bench_instance()
        from capforge.evaluator import Verdict

        report = aggregate([ScoredQuestion(bi, bi.qa_list[0], Verdict("r", RubricLevel.GROUNDED_EXTENSION, 1.0, ""))])
        assert report.overall.mean_pct == 100.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyReport):
            aggregate([])

    def test_matches_brute_force_recomputation(self):
        scored = scored_fixture()
        report = aggregate(scored)
        # independent recomputation with statistics.mean over dict-of-lists
        cells = {}
        for sq in scored:
            cells.setdefault(("cat", sq.instance.instance.category), []).append(sq.verdict.score)
            cells.setdefault(("diff", sq.instance.difficulty.value), []).append(sq.verdict.score)
            cells.setdefault(("qtype", sq.qa.qtype.value), []).append(sq.verdict.score)
        for (kind, key), vals in cells.items():
            expected = 100.0 * statistics.mean(vals)
            got = {
                "cat": report.per_category,
                "diff": report.per_difficulty,
                "qtype": report.per_qtype,
            }[kind][key]
            assert got.mean_pct == pytest.approx(expected, abs=1e-12)
            assert got.n == len(vals)

    def test_permutation_invariant(self):
        scored = scored_fixture()
        report_a = aggregate(scored)
        shuffled = list(scored)
        random.Random(3).shuffle(shuffled)
        report_b = aggregate(shuffled)
        assert report_a == report_b

    def test_overall_is_weighted_mean_of_difficulty_cells(self):
        report = aggregate(scored_fixture())
        total_n = sum(c.n for c in report.per_difficulty.values())
        weighted = sum(c.mean_pct * c.n for c in report.per_difficulty.values()) / total_n
        assert report.overall.mean_pct == pytest.approx(weighted, abs=1e-9)
        assert report.overall.n == total_n


class TestEmitReport:
    def test_table_contains_difficulty_rows(self):
        table = emit_report(aggregate(scored_fixture()), "table").decode("utf-8")
        for row in ("Simple", "Complex", "OOD"):
            assert row in table
        for group in ("Category", "Difficulty Level", "Question Type"):
            assert group in table

    def test_deterministic_bytes(self):
        report = aggregate(scored_fixture())
        assert emit_report(report, "table") == emit_report(report, "table")
        assert emit_report(report, "json") == emit_report(report, "json")
        assert emit_report(report, "csv") == emit_report(report, "csv")

    def test_json_round_trip_identical(self):
        report = aggregate(scored_fixture())
        blob = emit_report(report, "json")
        parsed = report_from_dict(json.loads(blob.decode("utf-8")))
        assert emit_report(parsed, "json") == blob

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            emit_report(aggregate(scored_fixture()), "xml")

    def test_csv_has_header_and_rows(self):
        blob = emit_report(aggregate(scored_fixture()), "csv").decode("utf-8")
        lines = blob.strip().split("\n")
        assert lines[0] == "group,key,mean_pct,n"
        assert any(line.startswith("Difficulty Level,Simple") for line in lines)


class TestRunJudging:
    def test_judges_every_question_with_stub(self):
        bench = [bench_instance(instance_id="a"), bench_instance(instance_id="b", category="ship")]
        captions = {"a": CAPTION, "b": CAPTION}
        run = run_judging(bench, captions, judge_client(), parallel=2)
        assert len(run.scored) == sum(len(b.qa_list) for b in bench)
        assert run.unscored == 0

    def test_unscored_tally_on_parse_failures(self):
        bench = [bench_instance(instance_id="a")]
        # 6 questions x 3 attempts each, all unparseable
        script = ["?"] * (6 * 3)
        run = run_judging(bench, {"a": CAPTION}, judge_client(script), parallel=1)
        assert run.scored == []
        assert run.unscored == 6

    def test_instances_without_captions_skipped(self):
        bench = [bench_instance(instance_id="a")]
        run = run_judging(bench, {}, judge_client(), parallel=1)
        assert run.scored == [] and run.unscored == 0

    def test_deterministic_stub_judging(self):
        bench = [bench_instance(instance_id="a")]
        run1 = run_judging(bench, {"a": CAPTION}, judge_client(seed=5), parallel=4)
        run2 = run_judging(bench, {"a": CAPTION}, judge_client(seed=5), parallel=4)
        scores1 = sorted(s.verdict.score for s in run1.scored)
        scores2 = sorted(s.verdict.score for s in run2.scored)
        assert scores1 == scores2
