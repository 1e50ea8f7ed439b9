import type { ApiClient } from './api.js';
import type { PointCollection } from './types.js';

const SVG_NS = 'http://www.w3.org/2000/svg';
const WIDTH = 720;
const HEIGHT = 360;

/** Equirectangular projection into the SVG viewport. */
export function project(lon: number, lat: number): { x: number; y: number } {
  return {
    x: ((lon + 180) / 360) * WIDTH,
    y: ((90 - lat) / 180) * HEIGHT,
  };
}

/** World map of generated points: one marker per GeoJSON feature. */
export class WorldMap {
  constructor(
    private readonly container: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  async load(): Promise<void> {
    let points: PointCollection;
    try {
      points = await this.api.getPoints();
      if (points.type !== 'FeatureCollection' || !Array.isArray(points.features)) {
        throw new Error('malformed points document');
      }
    } catch (e) {
      this.renderError(e instanceof Error ? e.message : String(e));
      return;
    }
    this.render(points);
  }

  render(points: PointCollection): void {
    this.container.replaceChildren();
    const svg = document.createElementNS(SVG_NS, 'svg');
    svg.setAttribute('class', 'world-map');
    svg.setAttribute('viewBox', `0 0 ${WIDTH} ${HEIGHT}`);

    const frame = document.createElementNS(SVG_NS, 'rect');
    frame.setAttribute('width', String(WIDTH));
    frame.setAttribute('height', String(HEIGHT));
    frame.setAttribute('class', 'map-frame');
    svg.appendChild(frame);

    for (const feature of points.features) {
      const [lon, lat] = feature.geometry.coordinates;
      const { x, y } = project(lon, lat);
      const marker = document.createElementNS(SVG_NS, 'circle');
      marker.setAttribute('class', 'marker');
      marker.setAttribute('cx', x.toFixed(2));
      marker.setAttribute('cy', y.toFixed(2));
      marker.setAttribute('r', '4');
      const props = feature.properties;
      const popup = document.createElementNS(SVG_NS, 'title');
      popup.textContent = `scene ${props.scene_id}: ${props.months_done} months done`;
      marker.appendChild(popup);
      svg.appendChild(marker);
    }
    this.container.appendChild(svg);
  }

  renderError(message: string): void {
    this.container.replaceChildren();
    const banner = document.createElement('div');
    banner.className = 'error-banner';
    banner.textContent = `world map unavailable: ${message}`;
    this.container.appendChild(banner);
  }
}
