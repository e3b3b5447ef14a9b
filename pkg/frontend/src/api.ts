/** Typed client for the compression service's JSON API. */

export interface SegmentationConfig {
  strategy: 'predefined' | 'structural' | 'llm';
  max_units?: number;
  marker?: string;
}

export interface RunConfig {
  ratio: number;
  estimator: string;
  segmentation: SegmentationConfig;
  pinned_indices: number[];
  seed?: number;
  estimator_options?: Record<string, unknown>;
}

export interface EvalExample {
  inputs: Record<string, string>;
  reference: string;
}

export interface RunRequest {
  template: string;
  dataset: EvalExample[];
  metric: 'exact_match' | 'token_f1';
  config: RunConfig;
}

export interface RunHandle {
  run_id: string;
  status: string;
  progress: number;
  error?: string | null;
}

export interface Attribution {
  scores: number[];
  estimator: string;
  probe_log: Array<[number[], number]>;
}

export interface RunReport {
  run_id: string;
  status: 'ok' | 'failed';
  original_template: string;
  compressed_template: string;
  kept_mask: number[];
  attribution: Attribution | null;
  score_before: number | null;
  score_after: number | null;
  tokens_before: number;
  tokens_after: number;
  error?: string | null;
}

export interface SegmentInfo {
  index: number;
  text: string;
  tokens: number;
  placeholders: string[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(`${base}${path}`, {
    headers: { 'Content-Type': 'application/json' },
    ...init,
  });
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail ?? body);
    throw new ApiError(resp.status, detail);
  }
  return body as T;
}

export class ApiClient {
  constructor(private base = '') {}

  submitRun(body: RunRequest): Promise<RunHandle> {
    return request<RunHandle>(this.base, '/api/runs', {
      method: 'POST',
      body: JSON.stringify(body),
    });
  }

  getRun(runId: string): Promise<RunHandle> {
    return request<RunHandle>(this.base, `/api/runs/${runId}`);
  }

  getReport(runId: string): Promise<RunReport> {
    return request<RunReport>(this.base, `/api/runs/${runId}/report`);
  }

  segment(template: string, config?: SegmentationConfig): Promise<{ segments: SegmentInfo[] }> {
    return request(this.base, '/api/segment', {
      method: 'POST',
      body: JSON.stringify({ template, config }),
    });
  }
}
