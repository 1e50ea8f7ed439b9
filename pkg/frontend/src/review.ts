import { ApiError } from './api.js';
import type { ApiClient } from './api.js';
import type { ReviewItemView } from './types.js';

/**
 * Manual-cleaner review screen: one card per pending candidate with its
 * quality report and Keep/Discard controls. A card locks the instant a
 * decision is submitted, so each card posts at most one decision.
 */
export class ReviewQueue {
  private pending = 0;
  private counter!: HTMLElement;

  constructor(
    private readonly container: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  get pendingCount(): number {
    return this.pending;
  }

  async load(): Promise<void> {
    let items: ReviewItemView[];
    try {
      items = await this.api.pendingReviews();
    } catch (e) {
      this.container.replaceChildren();
      const banner = document.createElement('div');
      banner.className = 'error-banner';
      banner.textContent = `review queue unavailable: ${e instanceof Error ? e.message : e}`;
      this.container.appendChild(banner);
      return;
    }
    this.render(items);
  }

  render(items: ReviewItemView[]): void {
    this.container.replaceChildren();
    this.pending = items.length;

    this.counter = document.createElement('div');
    this.counter.className = 'pending-count';
    this.updateCounter();
    this.container.appendChild(this.counter);

    for (const item of items) {
      this.container.appendChild(this.buildCard(item));
    }
  }

  private updateCounter(): void {
    this.counter.textContent = `${this.pending} pending`;
    this.counter.dataset.count = String(this.pending);
  }

  private buildCard(item: ReviewItemView): HTMLElement {
    const card = document.createElement('div');
    card.className = 'review-card';
    card.dataset.itemId = item.item_id;
    card.dataset.resolved = 'false';

    const thumb = document.createElement('img');
    thumb.className = 'thumb';
    thumb.src = this.api.fileUrl(item.img_path ?? item.path);
    thumb.alt = item.item_id;
    card.appendChild(thumb);

    const report = document.createElement('dl');
    report.className = 'report';
    if (item.report) {
      // values shown verbatim from the API payload
      const rows: [string, string][] = [
        ['missing', String(item.report.missing_fraction)],
        ['cloud', String(item.report.cloud_fraction)],
        ['score', String(item.report.score)],
        ['verdict', item.report.verdict],
      ];
      for (const [term, value] of rows) {
        const dt = document.createElement('dt');
        dt.textContent = term;
        const dd = document.createElement('dd');
        dd.textContent = value;
        report.append(dt, dd);
      }
    }
    card.appendChild(report);

    for (const decision of ['keep', 'discard'] as const) {
      const button = document.createElement('button');
      button.className = `decide-${decision}`;
      button.textContent = decision;
      button.addEventListener('click', () => void this.decide(card, item.item_id, decision));
      card.appendChild(button);
    }
    return card;
  }

  private lock(card: HTMLElement, label: string): void {
    card.dataset.resolved = 'true';
    for (const b of card.querySelectorAll('button')) b.disabled = true;
    const badge = document.createElement('span');
    badge.className = 'resolution';
    badge.textContent = label;
    card.appendChild(badge);
  }

  async decide(card: HTMLElement, itemId: string, decision: 'keep' | 'discard'): Promise<void> {
    if (card.dataset.resolved === 'true') return;
    this.lock(card, decision); // optimistic client-side lock: one POST per card
    try {
      await this.api.resolveReview(itemId, decision);
      this.pending -= 1;
      this.updateCounter();
    } catch (e) {
      if (e instanceof ApiError && e.status === 409) {
        // resolved elsewhere; the card stays locked
        const badge = card.querySelector('.resolution');
        if (badge) badge.textContent = 'already resolved';
        this.pending -= 1;
        this.updateCounter();
        return;
      }
      // transport error: unlock so the user can retry
      card.dataset.resolved = 'false';
      for (const b of card.querySelectorAll('button')) b.disabled = false;
      card.querySelector('.resolution')?.remove();
    }
  }
}
