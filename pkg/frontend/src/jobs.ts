import type { ApiClient } from './api.js';
import type { JobView } from './types.js';

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Submits a pipeline job and polls it to a terminal state, reporting every
 * snapshot through a callback. At most one job runs at a time.
 */
export class JobRunner {
  private active = false;

  constructor(
    private readonly api: ApiClient,
    private readonly intervalMs = 1000,
    private readonly sleep: (ms: number) => Promise<void> = defaultSleep,
  ) {}

  get running(): boolean {
    return this.active;
  }

  async run(
    stage: string,
    overrides: Record<string, unknown>,
    onUpdate: (job: JobView) => void,
  ): Promise<JobView> {
    if (this.active) {
      throw new Error('a job is already running');
    }
    this.active = true;
    try {
      const { job_id } = await this.api.submitJob(stage, overrides);
      for (;;) {
        const job = await this.api.getJob(job_id);
        onUpdate(job);
        if (job.state === 'done' || job.state === 'failed') {
          return job;
        }
        await this.sleep(this.intervalMs);
      }
    } finally {
      this.active = false;
    }
  }
}
