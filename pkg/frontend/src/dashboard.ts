/**
 * Curation dashboard: turns per-clip rating summaries into pass/fail
 * decisions for the hidden test set.
 *
 * The decision rule is the server's: a clip passes when it fooled at least
 * ceil(nRaters / 2) participants, where a score of 4 or 5 counts as fooled,
 * and every candidate must carry at least nRaters ratings. The canonical
 * JSON form of a decision report is byte-compatible with the backend's
 * serialization so the two sides can be diffed directly.
 */

import { BenchmarkApi, ClipSummary } from "./api.js";

export interface RatingInput {
  clip_id: string;
  participant_id: string;
  score: number;
}

export interface ClipDecision {
  clip_id: string;
  fooled_count: number;
  n: number;
  passed: boolean;
  threshold: number;
}

export interface CurationReport {
  decisions: ClipDecision[];
  kept: string[];
  n_raters: number;
}

export class CoverageError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CoverageError";
  }
}

export function curationThreshold(nRaters: number): number {
  return Math.ceil(nRaters / 2);
}

/** Mirror of the backend curation rule, computed from raw ratings. */
export function curateCandidates(
  candidates: string[],
  ratings: RatingInput[],
  nRaters: number,
): CurationReport {
  const byClip = new Map<string, RatingInput[]>();
  for (const r of ratings) {
    const bucket = byClip.get(r.clip_id);
    if (bucket) bucket.push(r);
    else byClip.set(r.clip_id, [r]);
  }
  const threshold = curationThreshold(nRaters);
  const decisions: ClipDecision[] = [];
  const kept: string[] = [];
  for (const clipId of candidates) {
    const clipRatings = byClip.get(clipId) ?? [];
    if (clipRatings.length < nRaters) {
      throw new CoverageError(
        `clip ${clipId} has ${clipRatings.length} ratings; study requires ${nRaters}`,
      );
    }
    const fooled = clipRatings.filter((r) => r.score >= 4).length;
    const passed = fooled >= threshold;
    decisions.push({
      clip_id: clipId,
      fooled_count: fooled,
      n: clipRatings.length,
      passed,
      threshold,
    });
    if (passed) kept.push(clipId);
  }
  return { decisions, kept, n_raters: nRaters };
}

/** Same rule applied to live server summaries instead of raw ratings. */
export function decideFromSummaries(
  summaries: ClipSummary[],
  nRaters: number,
): CurationReport {
  const threshold = curationThreshold(nRaters);
  const decisions: ClipDecision[] = [];
  const kept: string[] = [];
  for (const s of summaries) {
    if (s.n < nRaters) {
      throw new CoverageError(
        `clip ${s.clip_id} has ${s.n} ratings; study requires ${nRaters}`,
      );
    }
    const passed = s.fooled_count >= threshold;
    decisions.push({
      clip_id: s.clip_id,
      fooled_count: s.fooled_count,
      n: s.n,
      passed,
      threshold,
    });
    if (passed) kept.push(s.clip_id);
  }
  return { decisions, kept, n_raters: nRaters };
}

export async function fetchCuration(
  api: BenchmarkApi,
  nRaters: number,
): Promise<CurationReport> {
  return decideFromSummaries(await api.summaries(), nRaters);
}

/**
 * Deterministic JSON: object keys sorted recursively, no whitespace.
 * Matches python json.dumps(obj, sort_keys=True, separators=(",", ":"))
 * for the integer/boolean/string payloads used in curation reports.
 */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
  return `{${entries.join(",")}}`;
}
