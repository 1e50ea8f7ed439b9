import type {
  ConfigDoc,
  JobView,
  PointCollection,
  ReviewItemView,
  SceneSummary,
  StageStatusMap,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

/** Thin typed client over the published /api endpoints; nothing else. */
export class ApiClient {
  constructor(
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
    private readonly base = '',
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  submitJob(stage: string, overrides: Record<string, unknown> = {}): Promise<{ job_id: number }> {
    return this.post('/api/jobs', { stage, overrides });
  }

  getJob(jobId: number): Promise<JobView> {
    return this.request(`/api/jobs/${jobId}`);
  }

  getStages(): Promise<StageStatusMap> {
    return this.request('/api/stages');
  }

  getPoints(): Promise<PointCollection> {
    return this.request('/api/points.geojson');
  }

  getConfig(): Promise<ConfigDoc> {
    return this.request('/api/config');
  }

  putConfig(doc: ConfigDoc): Promise<ConfigDoc> {
    return this.request('/api/config', {
      method: 'PUT',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(doc),
    });
  }

  listScenes(): Promise<SceneSummary[]> {
    return this.request('/api/scenes');
  }

  pendingReviews(): Promise<ReviewItemView[]> {
    return this.request('/api/review/pending');
  }

  resolveReview(itemId: string, decision: 'keep' | 'discard'): Promise<{ item_id: string }> {
    return this.post(`/api/review/${itemId}`, { decision });
  }

  previewUrl(sceneId: number, satellite: 'S1' | 'S2'): string {
    return `${this.base}/api/scenes/${sceneId}/preview.png?satellite=${satellite}`;
  }

  fileUrl(relPath: string): string {
    return `${this.base}/api/files/${relPath}`;
  }
}
