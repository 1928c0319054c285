/** Canvas annotation state for the Localize screen.
 *
 * All committed geometry lives in normalized image space so the zoom/pan
 * transform never touches stored boxes; the transform only maps between
 * image space and device pixels at render/pointer time.
 */

import type { BoundingBox, SubmissionEntry } from "./types.js";

export interface ViewTransform {
  /** device pixels per unit of normalized image width */
  scaleX: number;
  /** device pixels per unit of normalized image height */
  scaleY: number;
  /** pan offset in device pixels */
  offsetX: number;
  offsetY: number;
}

export interface DragRect {
  startX: number;
  startY: number;
  endX: number;
  endY: number;
}

export interface AnnotationConfig {
  /** Maximum committed boxes per finding class; unlimited when undefined. */
  maxBoxesPerClass?: number;
}

const clamp01 = (v: number): number => Math.min(1, Math.max(0, v));

export function imageToScreen(
  t: ViewTransform,
  x: number,
  y: number,
): { x: number; y: number } {
  return { x: x * t.scaleX + t.offsetX, y: y * t.scaleY + t.offsetY };
}

export function screenToImage(
  t: ViewTransform,
  x: number,
  y: number,
): { x: number; y: number } {
  return { x: (x - t.offsetX) / t.scaleX, y: (y - t.offsetY) / t.scaleY };
}

/** Normalize a drag rectangle to (min, max) corner order and clamp into
 * the image. Returns null for degenerate (zero-area) drags. */
export function normalizeDrag(drag: DragRect): BoundingBox | null {
  const x_min = clamp01(Math.min(drag.startX, drag.endX));
  const x_max = clamp01(Math.max(drag.startX, drag.endX));
  const y_min = clamp01(Math.min(drag.startY, drag.endY));
  const y_max = clamp01(Math.max(drag.startY, drag.endY));
  if (!(x_min < x_max) || !(y_min < y_max)) return null;
  return { x_min, y_min, x_max, y_max };
}

export class CanvasAnnotationState {
  activeClassId: string | null = null;
  drag: DragRect | null = null;
  transform: ViewTransform = { scaleX: 1, scaleY: 1, offsetX: 0, offsetY: 0 };
  /** Select-mode classes the trainee has ticked present. */
  private selected = new Set<string>();
  private boxes = new Map<string, BoundingBox[]>();
  private readonly config: AnnotationConfig;

  constructor(config: AnnotationConfig = {}) {
    if (config.maxBoxesPerClass !== undefined && config.maxBoxesPerClass < 1) {
      throw new Error("maxBoxesPerClass must be >= 1");
    }
    this.config = config;
  }

  setTransform(t: ViewTransform): void {
    if (t.scaleX <= 0 || t.scaleY <= 0) throw new Error("scale must be positive");
    this.transform = t;
  }

  setActiveClass(classId: string | null): void {
    this.activeClassId = classId;
    this.drag = null;
  }

  toggleSelect(classId: string): void {
    if (this.selected.has(classId)) this.selected.delete(classId);
    else this.selected.add(classId);
  }

  isSelected(classId: string): boolean {
    return this.selected.has(classId);
  }

  /** Pointer-down in device pixels. */
  beginDrag(screenX: number, screenY: number): void {
    if (this.activeClassId === null) throw new Error("no active finding class");
    const p = screenToImage(this.transform, screenX, screenY);
    this.drag = { startX: p.x, startY: p.y, endX: p.x, endY: p.y };
  }

  /** Pointer-move in device pixels. */
  updateDrag(screenX: number, screenY: number): void {
    if (!this.drag) return;
    const p = screenToImage(this.transform, screenX, screenY);
    this.drag.endX = p.x;
    this.drag.endY = p.y;
  }

  /** Pointer-up: commit the drag as a box for the active class.
   * Returns the committed box, or null when the drag was degenerate or
   * the per-class cap is reached. */
  commitDrag(): BoundingBox | null {
    if (!this.drag || this.activeClassId === null) return null;
    const box = normalizeDrag(this.drag);
    this.drag = null;
    if (!box) return null;
    const existing = this.boxes.get(this.activeClassId) ?? [];
    const cap = this.config.maxBoxesPerClass;
    if (cap !== undefined && existing.length >= cap) return null;
    this.boxes.set(this.activeClassId, [...existing, box]);
    return box;
  }

  boxesFor(classId: string): readonly BoundingBox[] {
    return this.boxes.get(classId) ?? [];
  }

  eraseBox(classId: string, index: number): void {
    const existing = this.boxes.get(classId);
    if (!existing || index < 0 || index >= existing.length) {
      throw new Error(`no box ${index} for ${classId}`);
    }
    const next = existing.filter((_, i) => i !== index);
    if (next.length === 0) this.boxes.delete(classId);
    else this.boxes.set(classId, next);
  }

  moveBox(classId: string, index: number, dx: number, dy: number): void {
    const existing = this.boxes.get(classId);
    const box = existing?.[index];
    if (!existing || !box) throw new Error(`no box ${index} for ${classId}`);
    const w = box.x_max - box.x_min;
    const h = box.y_max - box.y_min;
    const x_min = clamp01(Math.min(box.x_min + dx, 1 - w));
    const y_min = clamp01(Math.min(box.y_min + dy, 1 - h));
    existing[index] = { x_min, y_min, x_max: x_min + w, y_max: y_min + h };
  }

  resizeBox(classId: string, index: number, corner: "min" | "max", x: number, y: number): void {
    const existing = this.boxes.get(classId);
    const box = existing?.[index];
    if (!existing || !box) throw new Error(`no box ${index} for ${classId}`);
    const updated =
      corner === "min"
        ? { ...box, x_min: clamp01(x), y_min: clamp01(y) }
        : { ...box, x_max: clamp01(x), y_max: clamp01(y) };
    const fixed = normalizeDrag({
      startX: updated.x_min, startY: updated.y_min,
      endX: updated.x_max, endY: updated.y_max,
    });
    if (!fixed) throw new Error("resize would collapse the box");
    existing[index] = fixed;
  }

  /** Screen-space corners of a committed box under the current transform. */
  renderBox(box: BoundingBox): { x1: number; y1: number; x2: number; y2: number } {
    const a = imageToScreen(this.transform, box.x_min, box.y_min);
    const b = imageToScreen(this.transform, box.x_max, box.y_max);
    return { x1: a.x, y1: a.y, x2: b.x, y2: b.y };
  }

  /** Submission entries: every class with committed boxes is asserted; a
   * Draw class whose boxes were all erased simply drops out (deasserted);
   * ticked Select classes are asserted with no boxes. */
  toSubmissionEntries(): SubmissionEntry[] {
    const entries: SubmissionEntry[] = [];
    for (const [classId, boxes] of [...this.boxes.entries()].sort()) {
      entries.push({ class_id: classId, asserted: true, boxes: [...boxes] });
    }
    for (const classId of [...this.selected].sort()) {
      if (!this.boxes.has(classId)) {
        entries.push({ class_id: classId, asserted: true, boxes: [] });
      }
    }
    return entries;
  }

  /** Load boxes from a serialized submission (server echo or local save). */
  static fromEntries(entries: SubmissionEntry[], config: AnnotationConfig = {}): CanvasAnnotationState {
    const state = new CanvasAnnotationState(config);
    for (const entry of entries) {
      if (entry.boxes.length > 0) {
        state.boxes.set(entry.class_id, entry.boxes.map((b) => ({ ...b })));
      } else if (entry.asserted) {
        state.selected.add(entry.class_id);
      }
    }
    return state;
  }
}
