/** Payload shapes of the pipeline HTTP API, mirrored verbatim. */

export const STAGES = ['generate', 'download', 'convert', 'clean', 'extract'] as const;
export type StageName = (typeof STAGES)[number];

export type StageStatusValue = 'pending' | 'running' | 'done' | 'failed';
export type StageStatusMap = Record<string, StageStatusValue>;

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface JobView {
  id: number;
  stage: string;
  state: JobState;
  progress: Record<string, { done: number; total: number }>;
  log_tail: string[];
  error: string;
  failed_stage: string;
}

export interface PointFeature {
  type: 'Feature';
  geometry: { type: 'Point'; coordinates: [number, number] }; // [lon, lat]
  properties: {
    scene_id: number;
    months_done: number;
    unfavorable_count: number;
  };
}

export interface PointCollection {
  type: 'FeatureCollection';
  features: PointFeature[];
}

export interface QualityReportView {
  missing_fraction: number;
  cloud_fraction: number;
  score: number;
  verdict: 'pass' | 'fail';
  thresholds_used: [number, number];
  low_confidence: boolean;
}

export interface ReviewItemView {
  item_id: string;
  path: string;
  img_path: string | null;
  report: QualityReportView | null;
  decision: string;
  decided_by: string | null;
}

export interface SceneSummary {
  scene_id: number;
  center: { lat: number; lon: number };
  months: string[];
}

export type ConfigDoc = Record<string, Record<string, unknown>>;
