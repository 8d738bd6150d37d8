#!/usr/bin/env python3
"""End-to-end offline demo: build a dataset with the stub annotator, attach a
benchmark, judge it with the stub judge, and print the report.

Usage: python scripts/run_stub_pipeline.py [work_dir]
"""

import json
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent

ANNOTATOR_TOML = """[endpoint]
kind = "stub-annotator"
model = "stub-annotator"
seed = 7
retry_backoff = 0.0
"""

JUDGE_TOML = """[endpoint]
kind = "stub-judge"
model = "stub-judge"
seed = 11
retry_backoff = 0.0
"""


def run(*argv):
    print("+", " ".join(str(a) for a in argv))
    subprocess.run([str(a) for a in argv], check=True)


def main():
    work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run")
    work.mkdir(parents=True, exist_ok=True)
    annotator = work / "annotator.toml"
    judge = work / "judge.toml"
    annotator.write_text(ANNOTATOR_TOML, encoding="utf-8")
    judge.write_text(JUDGE_TOML, encoding="utf-8")

    run(sys.executable, HERE / "make_demo_data.py", work / "raw", "--images", "3")
    run(
        "forge", "build-dataset",
        "--annotations", work / "raw" / "annotations",
        "--images", work / "raw" / "images",
        "--endpoint", annotator,
        "--out-dir", work / "dataset",
    )

    instances = work / "dataset" / "instances.jsonl"
    manifest = work / "attrs.jsonl"
    with open(instances, encoding="utf-8") as fh, open(manifest, "w", encoding="utf-8") as out:
        for line in fh:
            doc = json.loads(line)
            out.write(
                json.dumps(
                    {
                        "instance_id": doc["instance_id"],
                        "attributes": [
                            {"attribute": "color", "value": "uniform tone", "qtype": "appearance"},
                            {"attribute": "surrounding area", "value": "open ground", "qtype": "surrounding"},
                        ],
                    }
                )
                + "\n"
            )
    (work / "ood.txt").write_text("vehicle-lot\n", encoding="utf-8")

    run(
        "forge", "bench-build",
        "--in", instances,
        "--attrs", manifest,
        "--ood", work / "ood.txt",
        "--out", work / "bench.jsonl",
    )
    run(
        "forge", "evaluate",
        "--bench", work / "bench.jsonl",
        "--captions", instances,
        "--judge", judge,
        "--out", work / "report.json",
        "--model-name", "stub-annotator",
    )
    run("forge", "stats", "--in", instances)
    print(f"\nartifacts under {work}/: dataset/, bench.jsonl, report.json")


if __name__ == "__main__":
    main()
