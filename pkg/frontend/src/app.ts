import { ApiClient } from './api.js';
import { JobRunner } from './jobs.js';
import { WorldMap } from './map.js';
import { PreviewBrowser } from './preview.js';
import { ReviewQueue } from './review.js';
import { AutomaticPanel, StagePanels } from './stages.js';

export function bootstrap(root: HTMLElement): void {
  const api = new ApiClient();
  const runner = new JobRunner(api);

  root.innerHTML = `
    <header><h1>eoforge</h1></header>
    <section id="automatic"><h2>Automatic</h2></section>
    <section id="stages"><h2>Stages</h2></section>
    <section id="map"><h2>World map</h2><div id="map-view"></div></section>
    <section id="preview"><h2>Preview</h2><div id="preview-view"></div></section>
    <section id="review"><h2>Review</h2><div id="review-view"></div></section>
  `;

  const automatic = new AutomaticPanel(root.querySelector('#automatic')!, api, runner);
  automatic.render();
  void automatic.refreshIndicators();

  void new StagePanels(root.querySelector('#stages')!, api, runner).render();
  void new WorldMap(root.querySelector('#map-view')!, api).load();
  void new PreviewBrowser(root.querySelector('#preview-view')!, api).render();
  void new ReviewQueue(root.querySelector('#review-view')!, api).load();
}

if (typeof document !== 'undefined') {
  const root = document.getElementById('app');
  if (root) bootstrap(root);
}
