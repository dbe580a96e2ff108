// Typed client for the review-service HTTP contract (see docs/formats.md
// in the repository root). The service blinds items server-side: the views
// served here never include the A/B mapping or model identities.

export interface ReviewItemView {
  item_id: string;
  history: string;
  latest_message: string;
  candidate_a: string;
  candidate_b: string;
}

export type Choice = "A" | "B" | "tie";

export interface VerdictPayload {
  item_id: string;
  reviewer: string;
  choice: Choice;
  relevance_pass_a: boolean;
  relevance_pass_b: boolean;
}

export interface Aggregate {
  baseline_model_id: string;
  wins: number;
  losses: number;
  ties: number;
  win_rate_excluding_ties: number;
  win_rate_including_ties: number;
  items_fully_reviewed: number;
}

/** What the app needs from a service client; the HTTP client implements it. */
export interface ReviewClient {
  fetchNext(token: string): Promise<ReviewItemView>;
  submitVerdict(payload: VerdictPayload): Promise<void>;
}

export class NoItemsRemaining extends Error {
  constructor() {
    super("no items remaining for this reviewer");
  }
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

export class ReviewApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async registerReviewer(name: string): Promise<string> {
    const response = await fetch(this.url("/reviewers"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ name }),
    });
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    const body = await response.json();
    return body.token as string;
  }

  /** Claims (or resumes) the reviewer's next item; throws NoItemsRemaining at the end. */
  async fetchNext(token: string): Promise<ReviewItemView> {
    const response = await fetch(
      this.url(`/next?reviewer=${encodeURIComponent(token)}`),
    );
    if (response.status === 404) throw new NoItemsRemaining();
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return (await response.json()) as ReviewItemView;
  }

  async submitVerdict(payload: VerdictPayload): Promise<void> {
    const response = await fetch(this.url("/verdicts"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
  }

  async aggregate(baseline: string): Promise<Aggregate> {
    const response = await fetch(
      this.url(`/aggregate?baseline=${encodeURIComponent(baseline)}`),
    );
    if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
    return (await response.json()) as Aggregate;
  }
}
