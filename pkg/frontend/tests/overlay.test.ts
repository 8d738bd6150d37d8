import { describe, expect, it } from 'vitest';

import { drawObbOverlay, obbToScreen, type PathContext } from '../src/overlay.js';

class RecordingCtx implements PathContext {
  strokeStyle: string = '';
  lineWidth = 0;
  ops: string[] = [];
  beginPath() {
    this.ops.push('begin');
  }
  moveTo(x: number, y: number) {
    this.ops.push(`move ${x},${y}`);
  }
  lineTo(x: number, y: number) {
    this.ops.push(`line ${x},${y}`);
  }
  closePath() {
    this.ops.push('close');
  }
  stroke() {
    this.ops.push('stroke');
  }
}

describe('obbToScreen', () => {
  it('maps an axis-aligned box to a rectangle at zoom 1', () => {
    const pts = obbToScreen([10, 20, 110, 20, 110, 70, 10, 70], 1);
    expect(pts).toEqual([
      { x: 10, y: 20 },
      { x: 110, y: 20 },
      { x: 110, y: 70 },
      { x: 10, y: 70 },
    ]);
  });

  it('matches served coordinates times the zoom factor for a 45-degree box', () => {
    const served = [50, 0, 100, 50, 50, 100, 0, 50]; // diamond
    for (const zoom of [1, 2]) {
      const pts = obbToScreen(served, zoom);
      for (let i = 0; i < 4; i++) {
        expect(pts[i].x).toBe(served[2 * i] * zoom);
        expect(pts[i].y).toBe(served[2 * i + 1] * zoom);
      }
    }
  });

  it('doubles every screen position at zoom 2', () => {
    const served = [3, 4, 9, 4, 9, 11, 3, 11];
    const one = obbToScreen(served, 1);
    const two = obbToScreen(served, 2);
    for (let i = 0; i < 4; i++) {
      expect(two[i].x).toBe(one[i].x * 2);
      expect(two[i].y).toBe(one[i].y * 2);
    }
  });

  it('rejects malformed coordinate lists', () => {
    expect(() => obbToScreen([1, 2, 3], 1)).toThrow();
  });
});

describe('drawObbOverlay', () => {
  it('draws a closed polygon through the 4 corners in order', () => {
    const ctx = new RecordingCtx();
    drawObbOverlay(ctx, [0, 0, 10, 0, 10, 5, 0, 5], 1);
    expect(ctx.ops).toEqual([
      'begin',
      'move 0,0',
      'line 10,0',
      'line 10,5',
      'line 0,5',
      'close',
      'stroke',
    ]);
  });

  it('scales drawn vertices by zoom', () => {
    const ctx = new RecordingCtx();
    drawObbOverlay(ctx, [1, 2, 4, 2, 4, 6, 1, 6], 2);
    expect(ctx.ops).toContain('move 2,4');
    expect(ctx.ops).toContain('line 8,12');
  });
});
