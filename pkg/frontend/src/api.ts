/** Typed client for the diagid HTTP API.
 *
 * Field names mirror the server's JSON exactly; nothing is renamed or
 * post-processed here, so a payload can be rendered or re-serialized
 * without losing fidelity.
 */

export interface DecisionPayload {
  best_treatment: string;
  best_value: number;
  per_treatment: Record<string, number>;
  runner_up: string | null;
  runner_up_value: number | null;
  single_class: boolean;
  tie: string[];
  hypothesis_marginals: Record<string, Record<string, number>>;
}

export interface Challenger {
  time: string;
  treatment: string;
  class_id: number;
  value: number | null;
  exceeds_beta: boolean;
  missing_nodes: string[];
  error: string | null;
}

export interface SensitivityPayload {
  time: string;
  incumbent: string;
  incumbent_class: number;
  beta: number;
  candidates: string[];
  verdict: string;
  margin: number | null;
  rebuild_fraction: number | null;
  challengers: Challenger[];
}

export interface VariantChoice {
  var: string;
  tag: string;
  reason: string;
}

export interface TracePayload {
  time: string;
  included: Record<string, string>;
  variants: VariantChoice[];
  firings: { rule: string; position: number }[];
  alternatives: string[];
  evidence: Record<string, string>;
}

export interface RecommendationPayload {
  model_time: string | null;
  decision: DecisionPayload | null;
  sensitivity: SensitivityPayload | null;
  trace: TracePayload | null;
}

export interface ActRecordPayload {
  treatment: string;
  time: string;
  expected: number;
  realized: number | null;
  awaiting_outcome: boolean;
}

export interface ActResponse extends RecommendationPayload {
  record: ActRecordPayload;
}

export interface DiagramNodePayload {
  name: string;
  role: string;
  states: string[];
  parents: string[];
  time: string;
  variant: string | null;
}

export interface DiagramPayload {
  chance: DiagramNodePayload[];
  decisions: { name: string; alternatives: string[] }[];
  values: string[];
  arcs: string[][];
  evidence: Record<string, string>;
  normal: Record<string, string>;
  dot: string;
}

export interface PlanPayload {
  verdict: string;
  time: string;
  steps: { kind: string; time: string; variables: string[] }[];
}

export interface SessionEventPayload {
  kind: string;
  time: string;
  payload: Record<string, unknown>;
}

export interface LogPayload {
  events: SessionEventPayload[];
  observations: { var: string; state: string; time: string; source: string }[];
  acts: ActRecordPayload[];
}

export interface SnapshotPayload {
  model_time: string | null;
  last_time: string | null;
  awaiting: string | null;
  truth: Record<string, string> | null;
  events: SessionEventPayload[];
  acts: ActRecordPayload[];
  plan: PlanPayload | null;
  diagram: Omit<DiagramPayload, "dot"> | null;
  recommendation: RecommendationPayload;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly tag: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class DiagidClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base: string, fetchFn?: FetchLike) {
    this.base = base.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const res = await this.fetchFn(this.base + path, init);
    const text = await res.text();
    const data: unknown = text ? JSON.parse(text) : null;
    if (!res.ok) {
      const err = data as { error?: string; message?: string } | null;
      throw new ApiError(
        res.status,
        err?.error ?? "unknown",
        err?.message ?? `request failed with status ${res.status}`,
      );
    }
    return data as T;
  }

  async kbText(): Promise<string> {
    const body = await this.request<{ text: string }>("GET", "/kb");
    return body.text;
  }

  async listSessions(): Promise<string[]> {
    const body = await this.request<{ sessions: string[] }>("GET", "/sessions");
    return body.sessions;
  }

  async createSession(truth?: Record<string, string>): Promise<string> {
    const body = truth && Object.keys(truth).length ? { truth } : {};
    const res = await this.request<{ id: string }>("POST", "/sessions", body);
    return res.id;
  }

  observe(
    id: string,
    varName: string,
    state: string,
    time: string,
  ): Promise<RecommendationPayload> {
    return this.request("POST", `/sessions/${id}/observe`, {
      var: varName,
      state,
      time,
    });
  }

  act(id: string, treatment: string, time: string): Promise<ActResponse> {
    return this.request("POST", `/sessions/${id}/act`, { treatment, time });
  }

  feedback(
    id: string,
    varName: string,
    state: string,
    time: string,
  ): Promise<RecommendationPayload> {
    return this.request("POST", `/sessions/${id}/feedback`, {
      var: varName,
      state,
      time,
    });
  }

  recommendation(id: string): Promise<RecommendationPayload> {
    return this.request("GET", `/sessions/${id}/recommendation`);
  }

  diagram(id: string): Promise<DiagramPayload> {
    return this.request("GET", `/sessions/${id}/diagram`);
  }

  log(id: string): Promise<LogPayload> {
    return this.request("GET", `/sessions/${id}/log`);
  }

  snapshot(id: string): Promise<SnapshotPayload> {
    return this.request("GET", `/sessions/${id}/snapshot`);
  }
}
