import type { ApiClient } from './api.js';
import type { JobRunner } from './jobs.js';
import type { ConfigDoc, JobView } from './types.js';
import { STAGES } from './types.js';

/**
 * The Automatic section: a START button that runs the whole pipeline, five
 * stage indicators fed verbatim from /api/stages, and the job log tail.
 */
export class AutomaticPanel {
  private button!: HTMLButtonElement;
  private logTail!: HTMLPreElement;
  private errorBox!: HTMLElement;

  constructor(
    private readonly container: HTMLElement,
    private readonly api: ApiClient,
    private readonly runner: JobRunner,
  ) {}

  render(): void {
    this.container.replaceChildren();

    this.button = document.createElement('button');
    this.button.id = 'start-button';
    this.button.textContent = 'START';
    this.button.addEventListener('click', () => void this.start());
    this.container.appendChild(this.button);

    const list = document.createElement('ul');
    list.className = 'stage-indicators';
    for (const stage of STAGES) {
      const item = document.createElement('li');
      item.className = 'stage-indicator';
      item.dataset.stage = stage;
      item.dataset.status = 'pending';
      item.textContent = `${stage}: pending`;
      list.appendChild(item);
    }
    this.container.appendChild(list);

    this.errorBox = document.createElement('div');
    this.errorBox.className = 'job-error';
    this.errorBox.hidden = true;
    this.container.appendChild(this.errorBox);

    this.logTail = document.createElement('pre');
    this.logTail.className = 'log-tail';
    this.container.appendChild(this.logTail);
  }

  async refreshIndicators(): Promise<void> {
    let statuses: Record<string, string>;
    try {
      statuses = await this.api.getStages();
    } catch {
      return; // no dataset yet; indicators stay as they are
    }
    for (const item of this.container.querySelectorAll<HTMLElement>('.stage-indicator')) {
      const stage = item.dataset.stage ?? '';
      const status = statuses[stage] ?? 'pending';
      item.dataset.status = status;
      item.textContent = `${stage}: ${status}`;
    }
  }

  async start(): Promise<void> {
    if (this.runner.running) return;
    this.button.disabled = true;
    this.errorBox.hidden = true;
    try {
      const job = await this.runner.run('all', {}, (snapshot) => {
        this.applyJob(snapshot);
      });
      await this.refreshIndicators();
      if (job.state === 'failed') {
        this.errorBox.hidden = false;
        this.errorBox.textContent = `${job.failed_stage} failed: ${job.error}`;
      }
    } catch (e) {
      this.errorBox.hidden = false;
      this.errorBox.textContent = e instanceof Error ? e.message : String(e);
    } finally {
      this.button.disabled = false;
    }
  }

  private applyJob(job: JobView): void {
    this.logTail.textContent = job.log_tail.join('\n');
    void this.refreshIndicators();
  }
}

/**
 * Per-stage panels: editable fields bound to config keys, each with its own
 * run button. Edited values travel as job overrides ("section.key").
 */
export class StagePanels {
  private original: ConfigDoc = {};

  constructor(
    private readonly container: HTMLElement,
    private readonly api: ApiClient,
    private readonly runner: JobRunner,
    private readonly onJobUpdate: (job: JobView) => void = () => {},
  ) {}

  async render(): Promise<void> {
    this.original = await this.api.getConfig();
    this.container.replaceChildren();
    for (const stage of STAGES) {
      const section = this.original[stage] ?? {};
      const panel = document.createElement('fieldset');
      panel.className = 'stage-panel';
      panel.dataset.stage = stage;

      const legend = document.createElement('legend');
      legend.textContent = stage;
      panel.appendChild(legend);

      for (const [key, value] of Object.entries(section)) {
        const label = document.createElement('label');
        label.textContent = `${key} `;
        const input = document.createElement('input');
        input.name = `${stage}.${key}`;
        input.value = String(value);
        label.appendChild(input);
        panel.appendChild(label);
      }

      const run = document.createElement('button');
      run.className = 'run-stage';
      run.dataset.stage = stage;
      run.textContent = `run ${stage}`;
      run.addEventListener('click', () => void this.runStage(stage));
      panel.appendChild(run);
      this.container.appendChild(panel);
    }
  }

  overridesFor(stage: string): Record<string, unknown> {
    const overrides: Record<string, unknown> = {};
    const section = this.original[stage] ?? {};
    const inputs = this.container.querySelectorAll<HTMLInputElement>(
      `fieldset[data-stage="${stage}"] input`,
    );
    for (const input of inputs) {
      const key = input.name.split('.', 2)[1];
      if (input.value !== String(section[key])) {
        overrides[input.name] = input.value;
      }
    }
    return overrides;
  }

  async runStage(stage: string): Promise<void> {
    if (this.runner.running) return;
    this.setBusy(true);
    try {
      await this.runner.run(stage, this.overridesFor(stage), this.onJobUpdate);
    } finally {
      this.setBusy(false);
    }
  }

  setBusy(busy: boolean): void {
    for (const b of this.container.querySelectorAll<HTMLButtonElement>('button.run-stage')) {
      b.disabled = busy;
    }
  }
}
