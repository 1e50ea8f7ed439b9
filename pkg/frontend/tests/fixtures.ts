import type { JobView, PointCollection, ReviewItemView, StageStatusMap } from '../src/types.js';

export function pointsFixture(n: number): PointCollection {
  const coords: [number, number][] = [
    [12.5, 42.0],
    [-74.0, 40.7],
    [151.2, -33.9],
    [18.4, -33.9],
    [139.7, 35.7],
  ];
  return {
    type: 'FeatureCollection',
    features: coords.slice(0, n).map(([lon, lat], i) => ({
      type: 'Feature',
      geometry: { type: 'Point', coordinates: [lon, lat] },
      properties: { scene_id: i, months_done: 12, unfavorable_count: 0 },
    })),
  };
}

export function jobFixture(partial: Partial<JobView>): JobView {
  return {
    id: 1,
    stage: 'all',
    state: 'running',
    progress: {},
    log_tail: [],
    error: '',
    failed_stage: '',
    ...partial,
  };
}

export const allPending: StageStatusMap = {
  generate: 'pending',
  download: 'pending',
  convert: 'pending',
  clean: 'pending',
  extract: 'pending',
};

export const allDone: StageStatusMap = {
  generate: 'done',
  download: 'done',
  convert: 'done',
  clean: 'done',
  extract: 'done',
};

export function reviewFixture(n: number): ReviewItemView[] {
  return Array.from({ length: n }, (_, i) => ({
    item_id: `S2-0000-2020-01-${i}`,
    path: `Sentinel-2/scene_0000/2020-01/raw_${i}.tif`,
    img_path: `Sentinel-2/scene_0000/2020-01/img_${i}.png`,
    report: {
      missing_fraction: 0.01 * i,
      cloud_fraction: 0.1 + 0.2 * i,
      score: 0.1 + 0.21 * i,
      verdict: i < 2 ? ('pass' as const) : ('fail' as const),
      thresholds_used: [0.05, 0.3] as [number, number],
      low_confidence: false,
    },
    decision: 'pending',
    decided_by: null,
  }));
}
