"""Regenerate curation.json, the shared backend/frontend curation fixture.

Run from this directory:  python3 generate_fixture.py

The fixture carries raw study ratings plus the backend's curation report in
canonical JSON (sorted keys, no whitespace). The frontend test recomputes the
report independently and must match the canonical string byte for byte.
"""

import json
import math
import pathlib

import numpy as np

from swapforge.bench import RatingRecord, curate_hidden


def main():
    rng = np.random.default_rng(20260825)
    n_raters = 100
    # fooled counts straddling the ceil(n/2) boundary, plus extremes
    scenario = {
        "clip_alpha": 83,
        "clip_bravo": 50,   # exactly at the boundary: kept
        "clip_charlie": 49, # one below: dropped
        "clip_delta": 12,
        "clip_echo": 100,
        "clip_foxtrot": 0,
        "clip_golf": 51,
        "clip_hotel": 66,
    }
    candidates = sorted(scenario)

    ratings = []
    for cid, fooled in scenario.items():
        fooled_scores = rng.integers(4, 6, size=fooled)
        honest_scores = rng.integers(1, 4, size=n_raters - fooled)
        scores = np.concatenate([fooled_scores, honest_scores])
        rng.shuffle(scores)
        for i, score in enumerate(scores):
            ratings.append(RatingRecord(clip_id=cid, participant_id=f"p{i:03d}",
                                        score=int(score)))

    kept = curate_hidden(candidates, ratings, n_raters=n_raters)
    threshold = math.ceil(n_raters / 2)
    decisions = []
    for cid in candidates:
        clip_ratings = [r for r in ratings if r.clip_id == cid]
        fooled = sum(1 for r in clip_ratings if r.score >= 4)
        decisions.append({
            "clip_id": cid,
            "fooled_count": fooled,
            "n": len(clip_ratings),
            "passed": cid in kept,
            "threshold": threshold,
        })
    report = {"decisions": decisions, "kept": kept, "n_raters": n_raters}

    fixture = {
        "candidates": candidates,
        "n_raters": n_raters,
        "ratings": [
            {"clip_id": r.clip_id, "participant_id": r.participant_id,
             "score": r.score}
            for r in ratings
        ],
        "canonical_report": json.dumps(report, sort_keys=True,
                                       separators=(",", ":")),
    }
    out = pathlib.Path(__file__).parent / "curation.json"
    out.write_text(json.dumps(fixture, indent=2) + "\n")
    print(f"wrote {out} ({len(ratings)} ratings, kept={kept})")


if __name__ == "__main__":
    main()
