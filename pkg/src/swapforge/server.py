"""HTTP service for the hidden test set and the human rating study.

Endpoints:
  GET  /hidden/clips                 -> clip id list (no labels)
  POST /hidden/submit                -> accuracy for a complete score set
  POST /ratings                      -> RatingRecord batches, deduplicated
  GET  /ratings/summary/{clip_id}    -> per-clip aggregate
  GET  /ratings/summary              -> all aggregates (dashboard polling)
  GET  /study/session/{participant}  -> seeded per-participant clip queue

Ground-truth labels live only in the server-side vault; no response ever
contains them. Rating uniqueness per (clip, participant) is enforced
atomically, and replayed submissions are idempotent (reported as duplicates,
never stored twice).
"""

from __future__ import annotations

import json
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .bench import HiddenVault, RatingRecord, aggregate_ratings
from .errors import SubmissionError


class ScoreItem(BaseModel):
    clip_id: str
    score: float


class Submission(BaseModel):
    scores: list[ScoreItem]


class RatingIn(BaseModel):
    clip_id: str
    participant_id: str
    score: int = Field(ge=1, le=5)
    timestamp: str = ""


class RatingStore:
    """In-memory rating store with atomic (clip, participant) uniqueness."""

    def __init__(self, persist_path: str | None = None):
        self._records: dict[tuple, RatingRecord] = {}
        self._lock = threading.Lock()
        self._persist_path = persist_path

    def add(self, record: RatingRecord) -> bool:
        """True if stored, False if a duplicate (idempotent replay)."""
        key = (record.clip_id, record.participant_id)
        with self._lock:
            if key in self._records:
                return False
            self._records[key] = record
            if self._persist_path:
                with open(self._persist_path, "a") as fh:
                    fh.write(json.dumps({
                        "clip_id": record.clip_id,
                        "participant_id": record.participant_id,
                        "score": record.score,
                        "timestamp": record.timestamp,
                    }) + "\n")
        return True

    def for_clip(self, clip_id: str):
        with self._lock:
            return [r for r in self._records.values() if r.clip_id == clip_id]

    def all_records(self):
        with self._lock:
            return list(self._records.values())

    def clip_ids(self):
        with self._lock:
            return sorted({r.clip_id for r in self._records.values()})


def _summary(store: RatingStore, clip_id: str) -> dict:
    agg = aggregate_ratings(store.for_clip(clip_id))
    fooled = agg["histogram"][4] + agg["histogram"][5]
    return {
        "clip_id": clip_id,
        "n": agg["n"],
        "histogram": {str(k): v for k, v in agg["histogram"].items()},
        "real_fraction": agg["real_fraction"],
        "fooled_count": fooled,
    }


def create_app(vault: HiddenVault, store: RatingStore | None = None,
               study_clip_count: int = 30, study_seed: int = 0) -> FastAPI:
    app = FastAPI(title="swapforge benchmark service")
    store = store if store is not None else RatingStore()
    app.state.vault = vault
    app.state.store = store

    @app.get("/hidden/clips")
    def hidden_clips():
        return {"clip_ids": vault.clip_ids()}

    @app.post("/hidden/submit")
    def hidden_submit(submission: Submission):
        try:
            accuracy = vault.score([(s.clip_id, s.score) for s in submission.scores])
        except SubmissionError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"accuracy": accuracy, "n": len(submission.scores)}

    @app.post("/ratings")
    def post_ratings(ratings: list[RatingIn]):
        accepted, duplicates = [], []
        for r in ratings:
            record = RatingRecord(clip_id=r.clip_id, participant_id=r.participant_id,
                                  score=r.score, timestamp=r.timestamp)
            if store.add(record):
                accepted.append(r.clip_id)
            else:
                duplicates.append(r.clip_id)
        return {"accepted": accepted, "duplicates": duplicates}

    @app.get("/ratings/summary/{clip_id}")
    def rating_summary(clip_id: str):
        return _summary(store, clip_id)

    @app.get("/ratings/summary")
    def rating_summaries():
        ids = sorted(set(store.clip_ids()) | set(vault.clip_ids()))
        return {"summaries": [_summary(store, cid) for cid in ids]}

    @app.get("/study/session/{participant_id}")
    def study_session(participant_id: str):
        ids = vault.clip_ids()
        if not ids:
            raise HTTPException(status_code=404, detail="no study clips configured")
        # deterministic per-participant shuffle to avoid ordering bias
        rng = np.random.default_rng(
            np.frombuffer(f"{study_seed}:{participant_id}".encode().ljust(16, b"\0")[:16],
                          dtype=np.uint32)
        )
        order = list(rng.permutation(len(ids)))
        queue = [ids[i] for i in order][:study_clip_count]
        return {"participant_id": participant_id, "clip_ids": queue}

    return app
