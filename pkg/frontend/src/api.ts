/**
 * Typed HTTP client for the benchmark service.
 *
 * Every response is validated with zod before use, so schema drift on the
 * server surfaces as a loud error here rather than as silent bad state.
 * The fetch implementation is injectable for testing and for non-browser
 * runtimes.
 */

import { z } from "zod";

export const StudySessionSchema = z.object({
  participant_id: z.string(),
  clip_ids: z.array(z.string()),
});
export type StudySession = z.infer<typeof StudySessionSchema>;

export const RatingAckSchema = z.object({
  accepted: z.array(z.string()),
  duplicates: z.array(z.string()),
});
export type RatingAck = z.infer<typeof RatingAckSchema>;

export const ClipSummarySchema = z.object({
  clip_id: z.string(),
  n: z.number().int(),
  histogram: z.record(z.string(), z.number().int()),
  real_fraction: z.number(),
  fooled_count: z.number().int(),
});
export type ClipSummary = z.infer<typeof ClipSummarySchema>;

export const SummariesSchema = z.object({
  summaries: z.array(ClipSummarySchema),
});

export interface RatingPayload {
  clip_id: string;
  participant_id: string;
  score: number;
  timestamp: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, public readonly status?: number) {
    super(message);
    this.name = "ApiError";
  }
}

export class BenchmarkApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async getJson(path: string): Promise<unknown> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      throw new ApiError(`GET ${path} failed: ${resp.status}`, resp.status);
    }
    return resp.json();
  }

  async studySession(participantId: string): Promise<StudySession> {
    const body = await this.getJson(
      `/study/session/${encodeURIComponent(participantId)}`,
    );
    return StudySessionSchema.parse(body);
  }

  async submitRatings(ratings: RatingPayload[]): Promise<RatingAck> {
    const resp = await this.fetchImpl(`${this.baseUrl}/ratings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(ratings),
    });
    if (!resp.ok) {
      throw new ApiError(`POST /ratings failed: ${resp.status}`, resp.status);
    }
    return RatingAckSchema.parse(await resp.json());
  }

  async summaries(): Promise<ClipSummary[]> {
    const body = await this.getJson("/ratings/summary");
    return SummariesSchema.parse(body).summaries;
  }

  async clipSummary(clipId: string): Promise<ClipSummary> {
    const body = await this.getJson(
      `/ratings/summary/${encodeURIComponent(clipId)}`,
    );
    return ClipSummarySchema.parse(body);
  }
}
