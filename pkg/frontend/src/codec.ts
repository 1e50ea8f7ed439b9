/** Patch filename codec: scene_0003_2020-01_r02_c05.png */

const PATCH_RE = /^scene_(\d{4})_(\d{4}-\d{2})_r(\d{2})_c(\d{2})\.png$/;

export interface PatchCoords {
  sceneId: number;
  month: string;
  row: number;
  col: number;
}

export function patchFilename(sceneId: number, month: string, row: number, col: number): string {
  const pad = (n: number, w: number) => String(n).padStart(w, '0');
  return `scene_${pad(sceneId, 4)}_${month}_r${pad(row, 2)}_c${pad(col, 2)}.png`;
}

export function parsePatchFilename(name: string): PatchCoords | null {
  const m = PATCH_RE.exec(name);
  if (!m) return null;
  return {
    sceneId: parseInt(m[1], 10),
    month: m[2],
    row: parseInt(m[3], 10),
    col: parseInt(m[4], 10),
  };
}
