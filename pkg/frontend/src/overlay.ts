import { Detection } from "./schema";

/** Canvas overlay: labeled rectangles over the detection boxes, highlighted
 * when selected. Pure geometry (hit testing) is separated for testability. */

const PALETTE = ["#e63946", "#2a9d8f", "#e9c46a", "#457b9d", "#f4a261"];

export function boxColor(categoryIndex: number): string {
  return PALETTE[categoryIndex % PALETTE.length];
}

/** Topmost detection whose box contains (x, y), preferring later (higher)
 * indices so overlapping small boxes stay clickable; -1 when none. */
export function hitTest(detections: readonly Detection[], x: number, y: number): number {
  for (let i = detections.length - 1; i >= 0; i--) {
    const [x0, y0, x1, y1] = detections[i].box;
    if (x >= x0 && x <= x1 && y >= y0 && y <= y1) return i;
  }
  return -1;
}

export function drawDetections(
  ctx: CanvasRenderingContext2D,
  detections: readonly Detection[],
  selected: ReadonlySet<number>,
  scale: number,
): void {
  ctx.save();
  ctx.font = `${Math.max(10, 3 * scale)}px sans-serif`;
  ctx.textBaseline = "bottom";
  detections.forEach((det, i) => {
    const [x0, y0, x1, y1] = det.box.map((v) => v * scale);
    const isSelected = selected.has(i);
    ctx.lineWidth = isSelected ? 3 : 1.5;
    ctx.strokeStyle = boxColor(det.category_index);
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    if (isSelected) {
      ctx.fillStyle = "rgba(230, 57, 70, 0.18)";
      ctx.fillRect(x0, y0, x1 - x0, y1 - y0);
    }
    const label = `${det.category} ${det.score.toFixed(2)}`;
    ctx.fillStyle = boxColor(det.category_index);
    ctx.fillText(label, x0 + 1, y0 - 1);
  });
  ctx.restore();
}
