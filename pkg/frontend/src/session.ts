/**
 * Rating study session: a participant works through a server-assigned clip
 * queue, producing exactly one rating per clip.
 *
 * Ratings are collected locally first (so the study keeps working when the
 * network drops) and flushed to the server in batches. The flush queue is
 * idempotent end to end: the client never enqueues a clip twice, and replays
 * after a failed flush lean on the server's (clip, participant) uniqueness,
 * so a rating that already landed is acknowledged as a duplicate rather
 * than stored again.
 */

import { BenchmarkApi, RatingPayload } from "./api.js";

export interface SessionRating {
  clip_id: string;
  score: number;
  timestamp: string;
}

export class SessionError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SessionError";
  }
}

export class RatingSession {
  private queue: string[] = [];
  private ratings = new Map<string, SessionRating>();
  private pendingFlush = new Map<string, SessionRating>();
  private loaded = false;

  constructor(
    private readonly api: BenchmarkApi,
    readonly participantId: string,
    private readonly clock: () => string = () => new Date().toISOString(),
  ) {}

  /** Fetch the server-assigned clip queue for this participant. */
  async load(): Promise<string[]> {
    const session = await this.api.studySession(this.participantId);
    this.queue = [...session.clip_ids];
    this.loaded = true;
    return [...this.queue];
  }

  get clipQueue(): string[] {
    return [...this.queue];
  }

  /** The next clip still awaiting a rating, or null when done. */
  nextClip(): string | null {
    for (const clipId of this.queue) {
      if (!this.ratings.has(clipId)) return clipId;
    }
    return null;
  }

  /**
   * Record a 1-5 realness score for a clip in the queue. Re-rating a clip is
   * rejected: one record per (clip, participant), always.
   */
  rate(clipId: string, score: number): SessionRating {
    if (!this.loaded) {
      throw new SessionError("session not loaded; call load() first");
    }
    if (!Number.isInteger(score) || score < 1 || score > 5) {
      throw new SessionError(`score must be an integer in 1..5, got ${score}`);
    }
    if (!this.queue.includes(clipId)) {
      throw new SessionError(`clip ${clipId} is not in this session`);
    }
    if (this.ratings.has(clipId)) {
      throw new SessionError(`clip ${clipId} is already rated`);
    }
    const rating: SessionRating = {
      clip_id: clipId,
      score,
      timestamp: this.clock(),
    };
    this.ratings.set(clipId, rating);
    this.pendingFlush.set(clipId, rating);
    return rating;
  }

  get complete(): boolean {
    return this.loaded && this.queue.every((c) => this.ratings.has(c));
  }

  /** All ratings recorded so far, in queue order. */
  records(): SessionRating[] {
    return this.queue
      .filter((c) => this.ratings.has(c))
      .map((c) => this.ratings.get(c)!);
  }

  get pendingCount(): number {
    return this.pendingFlush.size;
  }

  /**
   * Push unflushed ratings to the server. On network failure everything
   * stays queued; on success (including server-side "duplicate" acks from an
   * earlier flush that the client never saw confirmed) the entries leave the
   * queue. Returns the number of ratings the server newly accepted.
   */
  async flush(): Promise<number> {
    if (this.pendingFlush.size === 0) return 0;
    const batch: RatingPayload[] = [...this.pendingFlush.values()].map((r) => ({
      ...r,
      participant_id: this.participantId,
    }));
    const ack = await this.api.submitRatings(batch);
    for (const clipId of [...ack.accepted, ...ack.duplicates]) {
      this.pendingFlush.delete(clipId);
    }
    return ack.accepted.length;
  }
}
