/** Typed client for the subjective-study HTTP service. */

export interface RatingSubmission {
  session_id: number;
  subject_id: string;
  image_id: string;
  score: number; // 1..5
  client_ts: number; // kept locally; the service stamps its own time
}

export interface NextImage {
  done: boolean;
  image_id?: string;
  practice?: boolean;
  index?: number;
  total?: number;
  rated?: number;
  scale?: Record<string, string>;
}

export interface EnrollResult {
  session: number;
  n_images: number;
  practice: string[];
}

export interface RatingAck {
  accepted: boolean;
  duplicate: boolean;
  practice: boolean;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Thrown when the request never reached the server (offline, refused). */
export class NetworkError extends Error {}

export class StudyApi {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  enroll(studyId: string, subjectId: string): Promise<EnrollResult> {
    return this.request(`/studies/${encodeURIComponent(studyId)}/subjects`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ subject_id: subjectId }),
    });
  }

  nextImage(sessionId: number, subjectId: string): Promise<NextImage> {
    return this.request(
      `/sessions/${sessionId}/next?subject=${encodeURIComponent(subjectId)}`,
    );
  }

  submitRating(submission: RatingSubmission): Promise<RatingAck> {
    // the wire contract carries exactly these four fields
    return this.request("/ratings", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        session: submission.session_id,
        subject: submission.subject_id,
        image: submission.image_id,
        score: submission.score,
      }),
    });
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/images/${encodeURIComponent(imageId)}`;
  }
}
