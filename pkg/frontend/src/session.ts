/** Session flow: practice items first, then the server-ordered main
 * sequence. One submission may be in flight at a time; rapid repeated
 * ratings are dropped until the acknowledgment arrives. Submissions that
 * fail to reach the server queue locally and replay on reconnect. */

import {
  ApiError,
  NetworkError,
  NextImage,
  RatingSubmission,
  StudyApi,
} from "./api.js";

/** The five impairment categories, highest quality first. */
export const SCORE_LABELS: ReadonlyArray<{ score: number; label: string }> = [
  { score: 5, label: "Excellent" },
  { score: 4, label: "Good" },
  { score: 3, label: "Fair" },
  { score: 2, label: "Poor" },
  { score: 1, label: "Bad" },
];

export function scoreForLabel(label: string): number {
  const entry = SCORE_LABELS.find((e) => e.label === label);
  if (!entry) throw new Error(`unknown impairment label: ${label}`);
  return entry.score;
}

/** Keyboard shortcuts: digits 1..5 submit the matching score. */
export function scoreForKey(key: string): number | null {
  if (/^[1-5]$/.test(key)) return Number(key);
  return null;
}

export type Phase = "loading" | "practice" | "main" | "done" | "offline" | "error";

export interface ViewState {
  phase: Phase;
  imageId: string | null;
  imageUrl: string | null;
  practice: boolean;
  index: number;
  total: number;
  ratedMain: number;
  totalMain: number;
  message: string | null;
  pending: number; // queued offline submissions
}

export class SessionController {
  private state: ViewState = {
    phase: "loading",
    imageId: null,
    imageUrl: null,
    practice: false,
    index: 0,
    total: 0,
    ratedMain: 0,
    totalMain: 0,
    message: null,
    pending: 0,
  };
  private submitting = false;
  private queue: RatingSubmission[] = [];
  private listeners: Array<(s: ViewState) => void> = [];
  /** hook for the UI layer to warm the browser cache before display */
  preload: (url: string) => Promise<void> = async () => {};

  constructor(
    private api: StudyApi,
    private sessionId: number,
    private subjectId: string,
  ) {}

  getState(): ViewState {
    return { ...this.state };
  }

  onChange(listener: (s: ViewState) => void): void {
    this.listeners.push(listener);
  }

  private update(partial: Partial<ViewState>): ViewState {
    this.state = { ...this.state, ...partial, pending: this.queue.length };
    for (const listener of this.listeners) listener(this.getState());
    return this.getState();
  }

  async start(): Promise<ViewState> {
    return this.advance();
  }

  private async advance(): Promise<ViewState> {
    let next: NextImage;
    try {
      next = await this.api.nextImage(this.sessionId, this.subjectId);
    } catch (err) {
      if (err instanceof NetworkError) {
        return this.update({ phase: "offline", message: "connection lost" });
      }
      return this.update({ phase: "error", message: String(err) });
    }
    if (next.done) {
      return this.update({
        phase: "done",
        imageId: null,
        imageUrl: null,
        ratedMain: next.rated ?? this.state.ratedMain,
        totalMain: next.total ?? this.state.totalMain,
        message: null,
      });
    }
    const imageUrl = this.api.imageUrl(next.image_id!);
    await this.preload(imageUrl);
    return this.update({
      phase: next.practice ? "practice" : "main",
      imageId: next.image_id!,
      imageUrl,
      practice: Boolean(next.practice),
      index: next.index ?? 0,
      total: next.total ?? 0,
      ratedMain: next.rated ?? this.state.ratedMain,
      totalMain: next.practice ? this.state.totalMain : next.total ?? 0,
      message: null,
    });
  }

  /** Submit a score for the displayed image. Calls while a submission is in
   * flight are ignored (double-click guard). */
  async rate(score: number): Promise<ViewState> {
    if (this.submitting || this.state.imageId === null) {
      return this.getState();
    }
    if (!Number.isInteger(score) || score < 1 || score > 5) {
      return this.update({ message: `score ${score} outside the 1..5 scale` });
    }
    const submission: RatingSubmission = {
      session_id: this.sessionId,
      subject_id: this.subjectId,
      image_id: this.state.imageId,
      score,
      client_ts: Date.now(),
    };
    this.submitting = true;
    try {
      await this.api.submitRating(submission);
    } catch (err) {
      if (err instanceof NetworkError) {
        this.queue.push(submission);
        return this.update({ phase: "offline", message: "connection lost; rating queued" });
      }
      // server rejection: re-enable scoring on the same image with a message
      const detail = err instanceof ApiError ? err.detail : String(err);
      return this.update({ message: detail });
    } finally {
      this.submitting = false;
    }
    return this.advance();
  }

  /** Resubmit queued ratings (oldest first), then resume the sequence. */
  async replay(): Promise<ViewState> {
    while (this.queue.length > 0) {
      const submission = this.queue[0];
      try {
        await this.api.submitRating(submission);
      } catch (err) {
        if (err instanceof NetworkError) {
          return this.update({ phase: "offline", message: "still offline" });
        }
        // rejected by the server: drop it and surface why
        this.queue.shift();
        const detail = err instanceof ApiError ? err.detail : String(err);
        this.update({ message: detail });
        continue;
      }
      this.queue.shift();
    }
    return this.advance();
  }
}
