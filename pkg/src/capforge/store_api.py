"""Dataset persistence, the human-verification state machine, and its HTTP API.

Storage is JSONL plus an append-only decision log; replaying the log over the
same sampled queue reconstructs the review state exactly. Discarding is a
state, never a deletion. Decision writes are serialized through one lock;
reads see the last committed state.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import random

from .annotation_io import (
    InstanceRecord,
    ReviewState,
    read_instances,
    write_instances,
)
from .caption_engine import DEFAULT_MIN_WORDS, generate_caption
from .client import ChatClient
from .errors import EmptyDataset, InvalidTransition, NotFound, SchemaError

LOG_SCHEMA_VERSION = 1


class Action(Enum):
    ACCEPT = "accept"
    REVISE = "revise"
    REGENERATE = "regenerate"
    DISCARD = "discard"


# Internal event written when a regeneration job finishes; not a reviewer action.
REGEN_COMPLETE = "regen_complete"


@dataclass(frozen=True)
class ReviewDecision:
    instance_id: str
    action: Action
    reviewer: str
    new_text: str = ""
    timestamp: float = 0.0

    def __post_init__(self):
        if self.action is Action.REVISE and not self.new_text.strip():
            raise SchemaError("revise needs non-empty replacement text")


@dataclass
class ReviewQueue:
    """Id sets for each review stage; pending keeps service order."""

    pending: list[str] = field(default_factory=list)
    accepted: set[str] = field(default_factory=set)
    discarded: set[str] = field(default_factory=set)
    regenerate: set[str] = field(default_factory=set)
    sampling_fraction: float = 1.0

    def state_of(self, instance_id: str) -> Optional[str]:
        if instance_id in self.pending:
            return "pending"
        for name in ("accepted", "discarded", "regenerate"):
            if instance_id in getattr(self, name):
                return name
        return None

    def as_dict(self) -> dict:
        return {
            "pending": list(self.pending),
            "accepted": sorted(self.accepted),
            "discarded": sorted(self.discarded),
            "regenerate": sorted(self.regenerate),
        }


def sample_for_review(
    records: Sequence[InstanceRecord], fraction: float, seed: int = 0
) -> ReviewQueue:
    """Stratified sample: ceil(fraction * n) per category, reproducible by seed."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if not records:
        raise EmptyDataset("no records to sample")
    rng = random.Random(seed)
    by_cat: dict[str, list[str]] = {}
    for rec in records:
        by_cat.setdefault(rec.category, []).append(rec.instance_id)
    sampled: list[str] = []
    for cat in sorted(by_cat):
        ids = sorted(by_cat[cat])
        take = math.ceil(fraction * len(ids))
        sampled.extend(rng.sample(ids, take))
    sampled.sort()
    return ReviewQueue(pending=sampled, sampling_fraction=fraction)


class ReviewStore:
    """In-memory records + review queue with an append-only decision log."""

    def __init__(
        self,
        records: Sequence[InstanceRecord],
        queue: ReviewQueue,
        log_path: str | Path | None = None,
        annotator: Optional[ChatClient] = None,
        images_root: str | Path | None = None,
        min_words: int = DEFAULT_MIN_WORDS,
    ):
        self.records = {r.instance_id: r for r in records}
        self.queue = queue
        self.log_path = Path(log_path) if log_path else None
        self.annotator = annotator
        self.images_root = Path(images_root) if images_root else None
        self.min_words = min_words
        self.lock = threading.Lock()
        self._seq = 0

    # -- log ------------------------------------------------------------

    def _append_log(self, action: str, instance_id: str, reviewer: str, new_text: str) -> None:
        self._seq += 1
        if self.log_path is None:
            return
        entry = {
            "seq": self._seq,
            "instance_id": instance_id,
            "action": action,
            "new_text": new_text,
            "reviewer": reviewer,
            "ts": time.time(),
        }
        with open(self.log_path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")

    # -- state machine ----------------------------------------------------

    def _require_actionable(self, instance_id: str) -> None:
        if instance_id not in self.records:
            raise NotFound(f"unknown instance {instance_id!r}")
        state = self.queue.state_of(instance_id)
        if state not in ("pending", "regenerate"):
            raise InvalidTransition(f"{instance_id} is {state}, not pending/regenerate")

    def _remove_from_current(self, instance_id: str) -> None:
        if instance_id in self.queue.pending:
            self.queue.pending.remove(instance_id)
        self.queue.regenerate.discard(instance_id)

    def apply_decision(self, decision: ReviewDecision, _log: bool = True) -> None:
        """Run one reviewer decision through the state machine."""
        with self.lock:
            self._require_actionable(decision.instance_id)
            rec = self.records[decision.instance_id]
            self._remove_from_current(decision.instance_id)
            if decision.action is Action.ACCEPT:
                rec.review_state = ReviewState.ACCEPTED
                self.queue.accepted.add(decision.instance_id)
            elif decision.action is Action.DISCARD:
                rec.review_state = ReviewState.DISCARDED
                self.queue.discarded.add(decision.instance_id)
            elif decision.action is Action.REVISE:
                self.records[decision.instance_id] = rec = rec.with_description(decision.new_text)
                rec.review_state = ReviewState.REVISED
                self.queue.accepted.add(decision.instance_id)
            elif decision.action is Action.REGENERATE:
                rec.review_state = ReviewState.REGENERATE
                self.queue.regenerate.add(decision.instance_id)
            if _log:
                self._append_log(
                    decision.action.value, decision.instance_id, decision.reviewer, decision.new_text
                )
        # Outside the lock: the captioning job re-enters via complete_regeneration.
        if decision.action is Action.REGENERATE and _log:
            self._run_regeneration(decision.instance_id)

    def _run_regeneration(self, instance_id: str) -> None:
        """Fire the captioning job for a regenerate decision, if an annotator is wired."""
        if self.annotator is None:
            return
        rec = self.records[instance_id]
        image_bytes = b""
        if self.images_root is not None:
            path = self.images_root / rec.image_ref
            if path.exists():
                image_bytes = path.read_bytes()
        outcome = generate_caption(rec, image_bytes, self.annotator, min_words=self.min_words)
        self.complete_regeneration(instance_id, outcome.text)

    def complete_regeneration(self, instance_id: str, caption: str, _log: bool = True) -> None:
        """A finished caption job returns the instance to pending."""
        with self.lock:
            if instance_id not in self.records:
                raise NotFound(f"unknown instance {instance_id!r}")
            if instance_id not in self.queue.regenerate:
                raise InvalidTransition(f"{instance_id} has no regeneration in flight")
            self.queue.regenerate.discard(instance_id)
            rec = self.records[instance_id].with_description(caption)
            rec.review_state = ReviewState.PENDING
            self.records[instance_id] = rec
            self.queue.pending.append(instance_id)
            if _log:
                self._append_log(REGEN_COMPLETE, instance_id, "system", caption)

    # -- replay ----------------------------------------------------------

    def replay_log(self, entries: Iterable[dict]) -> None:
        """Re-apply logged events (oldest first) without re-logging them."""
        for entry in sorted(entries, key=lambda e: e["seq"]):
            action = entry["action"]
            if action == REGEN_COMPLETE:
                self.complete_regeneration(entry["instance_id"], entry["new_text"], _log=False)
            else:
                self.apply_decision(
                    ReviewDecision(
                        instance_id=entry["instance_id"],
                        action=Action(action),
                        reviewer=entry.get("reviewer", ""),
                        new_text=entry.get("new_text", ""),
                    ),
                    _log=False,
                )
            self._seq = max(self._seq, entry["seq"])

    def save_records(self, path: str | Path) -> None:
        write_instances(
            [self.records[k] for k in sorted(self.records)], path
        )


def read_decision_log(path: str | Path) -> list[dict]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def dataset_stats(records: Sequence[InstanceRecord]) -> dict:
    """Exact counts and means over non-discarded records."""
    live = [r for r in records if r.review_state is not ReviewState.DISCARDED]
    images = {r.image_ref for r in live}
    per_cat: dict[str, int] = {}
    for r in live:
        per_cat[r.category] = per_cat.get(r.category, 0) + 1
    n = len(live)
    return {
        "n_images": len(images),
        "n_instances": n,
        "instances_per_image_mean": (n / len(images)) if images else 0.0,
        "words_per_description_mean": (sum(r.word_count for r in live) / n) if n else 0.0,
        "n_categories": len(per_cat),
        "per_category_counts": dict(sorted(per_cat.items())),
    }


# --- HTTP service ------------------------------------------------------------


def create_app(store: ReviewStore, static_dir: str | Path | None = None):
    """FastAPI app exposing the review endpoints (and the UI bundle, if built)."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse, JSONResponse
    from fastapi.staticfiles import StaticFiles

    from .annotation_io import instance_to_dict
    from .caption_engine import validate_caption

    app = FastAPI(title="capforge review service")

    def record_doc(instance_id: str) -> dict:
        rec = store.records[instance_id]
        doc = instance_to_dict(rec)
        doc["state"] = store.queue.state_of(instance_id)
        report = validate_caption(rec.description, min_words=store.min_words)
        doc["validation"] = {
            "passed": report.passed,
            "violations": [{"rule": v.rule, "matched_text": v.matched_text} for v in report.violations],
        }
        return doc

    @app.get("/api/instances")
    def list_instances(state: str = "pending", limit: int = 20):
        if state == "pending":
            ids = store.queue.pending[: max(0, limit)]
        elif state in ("accepted", "discarded", "regenerate"):
            ids = sorted(getattr(store.queue, state))[: max(0, limit)]
        else:
            raise HTTPException(status_code=400, detail=f"unknown state {state!r}")
        return {"state": state, "instances": [record_doc(i) for i in ids]}

    @app.get("/api/instances/{instance_id}")
    def get_instance(instance_id: str):
        if instance_id not in store.records:
            raise HTTPException(status_code=404, detail="not found")
        return record_doc(instance_id)

    @app.get("/api/images/{instance_id}")
    def get_image(instance_id: str):
        if instance_id not in store.records or store.images_root is None:
            raise HTTPException(status_code=404, detail="not found")
        root = store.images_root.resolve()
        path = (root / store.records[instance_id].image_ref).resolve()
        if not str(path).startswith(str(root)) or not path.exists():
            raise HTTPException(status_code=404, detail="image missing")
        return FileResponse(path, media_type="image/png")

    @app.post("/api/instances/{instance_id}/decision")
    def post_decision(instance_id: str, body: dict):
        try:
            action = Action(body.get("action", ""))
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown action {body.get('action')!r}")
        try:
            decision = ReviewDecision(
                instance_id=instance_id,
                action=action,
                reviewer=body.get("reviewer", ""),
                new_text=body.get("new_text", "") or "",
                timestamp=time.time(),
            )
        except SchemaError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            store.apply_decision(decision)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except InvalidTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"ok": True, "instance": record_doc(instance_id)}

    @app.get("/api/stats")
    def get_stats():
        return dataset_stats(list(store.records.values()))

    @app.get("/api/queue")
    def get_queue():
        return store.queue.as_dict()

    @app.get("/api/log")
    def get_log():
        if store.log_path is None or not store.log_path.exists():
            return JSONResponse([])
        return JSONResponse(read_decision_log(store.log_path))

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def open_store(
    data_dir: str | Path,
    fraction: float = 0.05,
    seed: int = 7,
    annotator: Optional[ChatClient] = None,
    instances_name: str = "instances.jsonl",
    log_name: str = "decisions.log.jsonl",
) -> ReviewStore:
    """Load instances, sample the review queue, and resume any decision log."""
    data_dir = Path(data_dir)
    records = read_instances(data_dir / instances_name)
    queue = sample_for_review(records, fraction, seed)
    log_path = data_dir / log_name
    images_root = data_dir
    for candidate in ("images", "tiles"):
        if (data_dir / candidate).is_dir():
            images_root = data_dir / candidate
            break
    store = ReviewStore(
        records,
        queue,
        log_path=log_path,
        annotator=annotator,
        images_root=images_root,
    )
    if log_path.exists():
        store.replay_log(read_decision_log(log_path))
    return store
