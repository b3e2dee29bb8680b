// Pure geometry for drawing pixel-space boxes over a scaled page image.
// Everything scales through one factor, so overlays stay glued to the page
// at any zoom.

import type { PixelBox } from "./types.js";

export interface ScreenRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Screen rectangle for a pixel box when the page renders displayWidth wide. */
export function rectForBox(
  box: PixelBox,
  page: { width: number; height: number },
  displayWidth: number
): ScreenRect {
  const scale = displayWidth / page.width;
  const [x0, y0, x1, y1] = box;
  return {
    left: x0 * scale,
    top: y0 * scale,
    width: (x1 - x0) * scale,
    height: (y1 - y0) * scale,
  };
}

/** Zoom factor that fits the full page inside the viewport. */
export function fitZoom(
  page: { width: number; height: number },
  viewport: { width: number; height: number }
): number {
  return Math.min(viewport.width / page.width, viewport.height / page.height);
}

export function clampZoom(zoom: number): number {
  return Math.min(4, Math.max(0.1, zoom));
}
