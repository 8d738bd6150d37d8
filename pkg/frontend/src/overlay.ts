/** Oriented-box overlay math and drawing.
 *
 * Screen positions are image pixel coordinates scaled by the zoom factor;
 * the canvas is sized to (imageW * zoom, imageH * zoom) so vertices stay
 * aligned with the drawn image at every zoom level.
 */

export interface Point {
  x: number;
  y: number;
}

/** Map the 8 served coordinates into screen space at the given zoom. */
export function obbToScreen(obb: number[], zoom: number): Point[] {
  if (obb.length !== 8) throw new Error(`expected 8 coordinates, got ${obb.length}`);
  const pts: Point[] = [];
  for (let i = 0; i < 8; i += 2) {
    pts.push({ x: obb[i] * zoom, y: obb[i + 1] * zoom });
  }
  return pts;
}

/** Subset of CanvasRenderingContext2D the overlay needs (testable headlessly). */
export interface PathContext {
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
}

/** Draw the closed polygon through the 4 corners in order. */
export function drawObbOverlay(ctx: PathContext, obb: number[], zoom: number, color = '#ff3b30'): Point[] {
  const pts = obbToScreen(obb, zoom);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(pts[0].x, pts[0].y);
  for (let i = 1; i < pts.length; i++) ctx.lineTo(pts[i].x, pts[i].y);
  ctx.closePath();
  ctx.stroke();
  return pts;
}
