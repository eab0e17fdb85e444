/**
 * Typed client for the session service. The UI computes no statistics of
 * its own: everything rendered comes verbatim from these payloads.
 */

export interface SessionHandle {
  id: string;
  status: "awaiting-design" | "awaiting-observation" | "complete";
  created: string;
  updated: string;
  iteration: number;
  n_experiments: number;
}

export interface SurfacePoints {
  designs: number[];
  values: number[];
  d_star: number;
  kind: string;
}

export interface DesignResponse {
  iteration: number;
  proposal: number;
  surface: SurfacePoints | null;
  status: string;
}

export interface MarginalHistogram {
  edges: number[];
  density: number[];
  prior_density: number[];
  mean: number;
  sd: number;
}

export interface ModelMarginals {
  model: number;
  log_evidence: number;
  ess: number;
  histograms: Record<string, MarginalHistogram>;
}

export interface ExperimentRecord {
  index: number;
  design: number;
  observed: number;
  log_evidences: number[];
  model_probs: number[];
  log_precisions: number[];
  ess: number[];
  warnings: string[];
  surface: SurfacePoints | null;
}

export interface ObservationResponse {
  record: ExperimentRecord;
  model_probabilities: number[];
  log_precisions: number[];
  marginals: ModelMarginals[];
  warnings: string[];
  status: string;
}

export interface SessionInfo extends SessionHandle {
  model_probabilities: number[];
  model_ids: number[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = status;
  }
}

export interface SessionCreateRequest {
  n_particles?: number;
  designs?: number[];
  tau?: number;
  n_experiments?: number;
  utility?: string;
  seed?: number;
  surface_stride?: number;
  models?: unknown[];
}

async function parse<T>(resp: Response): Promise<T> {
  const text = await resp.text();
  const body = text ? JSON.parse(text) : {};
  if (!resp.ok) {
    const err: ApiErrorBody = body.error ?? {
      code: "http_error",
      message: `HTTP ${resp.status}`,
    };
    throw new ApiError(resp.status, err);
  }
  return body as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  createSession(config: SessionCreateRequest): Promise<SessionHandle> {
    return fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    }).then((r) => parse<SessionHandle>(r));
  }

  getSession(id: string): Promise<SessionInfo> {
    return fetch(this.url(`/sessions/${id}`)).then((r) => parse<SessionInfo>(r));
  }

  getDesign(id: string): Promise<DesignResponse> {
    return fetch(this.url(`/sessions/${id}/design`)).then((r) =>
      parse<DesignResponse>(r),
    );
  }

  submitObservation(
    id: string,
    design: number,
    observed: number,
  ): Promise<ObservationResponse> {
    return fetch(this.url(`/sessions/${id}/observations`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ design, observed }),
    }).then((r) => parse<ObservationResponse>(r));
  }

  getHistory(id: string): Promise<{ records: ExperimentRecord[]; status: string }> {
    return fetch(this.url(`/sessions/${id}/history`)).then((r) =>
      parse<{ records: ExperimentRecord[]; status: string }>(r),
    );
  }

  getMarginals(id: string): Promise<{ marginals: ModelMarginals[] }> {
    return fetch(this.url(`/sessions/${id}/marginals`)).then((r) =>
      parse<{ marginals: ModelMarginals[] }>(r),
    );
  }

  deleteSession(id: string): Promise<void> {
    return fetch(this.url(`/sessions/${id}`), { method: "DELETE" }).then(
      async (r) => {
        if (!r.ok) await parse(r);
      },
    );
  }
}
