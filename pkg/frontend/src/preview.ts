import type { ApiClient } from './api.js';
import { parsePatchFilename } from './codec.js';

/**
 * Dataset preview browser: pick a scene and satellite, view its mosaic
 * (date rows x patch columns), and jump to a (date, patch) cell by pasting
 * a patch filename.
 */
export class PreviewBrowser {
  private sceneSelect!: HTMLSelectElement;
  private satSelect!: HTMLSelectElement;
  private image!: HTMLImageElement;
  private jumpResult!: HTMLElement;

  constructor(
    private readonly container: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  async render(): Promise<void> {
    this.container.replaceChildren();

    this.sceneSelect = document.createElement('select');
    this.sceneSelect.className = 'scene-select';
    try {
      for (const scene of await this.api.listScenes()) {
        const option = document.createElement('option');
        option.value = String(scene.scene_id);
        option.textContent = `scene ${scene.scene_id} (${scene.center.lat.toFixed(2)}, ${scene.center.lon.toFixed(2)})`;
        this.sceneSelect.appendChild(option);
      }
    } catch {
      // no dataset yet; leave the selector empty
    }
    this.sceneSelect.addEventListener('change', () => this.refresh());
    this.container.appendChild(this.sceneSelect);

    this.satSelect = document.createElement('select');
    this.satSelect.className = 'sat-select';
    for (const sat of ['S2', 'S1']) {
      const option = document.createElement('option');
      option.value = sat;
      option.textContent = sat;
      this.satSelect.appendChild(option);
    }
    this.satSelect.addEventListener('change', () => this.refresh());
    this.container.appendChild(this.satSelect);

    const jump = document.createElement('input');
    jump.className = 'jump-input';
    jump.placeholder = 'scene_0003_2020-01_r02_c05.png';
    jump.addEventListener('change', () => this.jumpTo(jump.value.trim()));
    this.container.appendChild(jump);

    this.jumpResult = document.createElement('div');
    this.jumpResult.className = 'jump-result';
    this.container.appendChild(this.jumpResult);

    this.image = document.createElement('img');
    this.image.className = 'preview-mosaic';
    this.image.alt = 'preview mosaic';
    this.container.appendChild(this.image);

    this.refresh();
  }

  refresh(): void {
    const sceneId = parseInt(this.sceneSelect.value, 10);
    if (Number.isNaN(sceneId)) return;
    const sat = this.satSelect.value as 'S1' | 'S2';
    this.image.src = this.api.previewUrl(sceneId, sat);
  }

  jumpTo(filename: string): void {
    const coords = parsePatchFilename(filename);
    if (!coords) {
      this.jumpResult.textContent = filename ? `not a patch filename: ${filename}` : '';
      return;
    }
    this.sceneSelect.value = String(coords.sceneId);
    this.refresh();
    this.jumpResult.textContent =
      `scene ${coords.sceneId}, ${coords.month}, patch row ${coords.row}, col ${coords.col}`;
  }
}
