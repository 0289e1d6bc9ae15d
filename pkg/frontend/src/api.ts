/** Typed client for the /api/v1 session service. */

export interface SourceRef {
  title: string;
  page: number;
}

export interface StandaloneQueries {
  base: string;
  filtered: string;
  versionless: string;
}

export interface MessageResponse {
  answer: string;
  abstained: boolean;
  sources: SourceRef[];
  standalone_queries: StandaloneQueries | null;
  timings: Record<string, number>;
  total_ms: number;
  release: string | null;
  error: string | null;
}

export interface HistoryTurn {
  role: "user" | "assistant";
  text: string;
}

export interface SessionInfo {
  session_id: string;
  history: HistoryTurn[];
  pinned_release: string | null;
  created_at: number;
  last_active: number;
}

export interface ReleaseInfo {
  canonical: string;
  raw: string;
  key: number[];
}

export interface ReleasesResponse {
  releases: ReleaseInfo[];
  latest: string | null;
}

export interface ComparisonMetric {
  metric: string;
  p_value: number;
  a12: number;
  magnitude: string;
  significant: boolean;
}

export interface Comparison {
  reference: string;
  candidate: string;
  metrics: ComparisonMetric[];
}

export interface SystemReport {
  flags: Record<string, boolean>;
  metric_means: Record<string, number | null>;
  per_run_means: Record<string, Array<number | null>>;
  errors: number;
  timings_ms: Record<string, number>;
}

export interface BenchmarkReport {
  generated_at: number;
  dataset_size: number;
  runs: number;
  systems: Record<string, SystemReport>;
  comparisons: Comparison[];
  label_correlations?: Record<string, number | null>;
}

/** Metric column order used by report tables. */
export const METRIC_NAMES = [
  "answer_correctness",
  "answer_relevancy",
  "answer_faithfulness",
  "contextual_precision",
  "contextual_recall",
  "contextual_relevancy",
] as const;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorMessage(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { error?: string };
    if (body && typeof body.error === "string") {
      return body.error;
    }
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `HTTP ${res.status}`;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(`${this.baseUrl}/api/v1${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!res.ok) {
      throw new ApiError(res.status, await errorMessage(res));
    }
    return (await res.json()) as T;
  }

  async createSession(release?: string): Promise<string> {
    const body = release ? JSON.stringify({ release }) : "{}";
    const data = await this.request<{ session_id: string }>("/sessions", {
      method: "POST",
      body,
    });
    return data.session_id;
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.request(`/sessions/${sessionId}`);
  }

  async deleteSession(sessionId: string): Promise<void> {
    await this.request(`/sessions/${sessionId}`, { method: "DELETE" });
  }

  sendMessage(sessionId: string, query: string, release?: string): Promise<MessageResponse> {
    const body: { query: string; release?: string } = { query };
    if (release) {
      body.release = release;
    }
    return this.request(`/sessions/${sessionId}/messages`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  releases(): Promise<ReleasesResponse> {
    return this.request("/releases");
  }

  async listReports(): Promise<string[]> {
    const data = await this.request<{ reports: string[] }>("/reports");
    return data.reports;
  }

  getReport(reportId: string): Promise<BenchmarkReport> {
    return this.request(`/reports/${encodeURIComponent(reportId)}`);
  }
}
