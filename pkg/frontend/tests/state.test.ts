import { describe, expect, it } from 'vitest';

import type { RunReport, SegmentInfo } from '../src/api';
import {
  cacheReport,
  initialState,
  previewAvailable,
  setRatio,
  setSegments,
  setTemplate,
  togglePin,
} from '../src/state';

function segs(n: number): SegmentInfo[] {
  return Array.from({ length: n }, (_, index) => ({
    index,
    text: `s${index} `,
    tokens: 1,
    placeholders: [],
  }));
}

function report(runId: string, scores: number[]): RunReport {
  return {
    run_id: runId,
    status: 'ok',
    original_template: 'a b',
    compressed_template: 'a',
    kept_mask: scores.map((_, i) => (i === 0 ? 1 : 0)),
    attribution: { scores, estimator: 'loo', probe_log: [] },
    score_before: 0.9,
    score_after: 0.9,
    tokens_before: 10,
    tokens_after: 5,
  };
}

describe('ViewState', () => {
  it('clamps the slider ratio into [0, 1]', () => {
    const state = initialState();
    setRatio(state, 1.7);
    expect(state.config.ratio).toBe(1);
    setRatio(state, -2);
    expect(state.config.ratio).toBe(0);
  });

  it('keeps pins a subset of the current segmentation', () => {
    const state = initialState();
    setSegments(state, segs(4));
    togglePin(state, 2);
    togglePin(state, 3);
    expect([...state.pinned].sort()).toEqual([2, 3]);
    setSegments(state, segs(3)); // shrinking drops the stale pin
    expect([...state.pinned]).toEqual([2]);
    togglePin(state, 9); // out of range is ignored
    expect([...state.pinned]).toEqual([2]);
  });

  it('clears pins when the template changes', () => {
    const state = initialState();
    setSegments(state, segs(2));
    togglePin(state, 1);
    setTemplate(state, 'new text');
    expect(state.pinned.size).toBe(0);
    expect(state.segments).toHaveLength(0);
  });

  it('mirrors pins into the run config', () => {
    const state = initialState();
    setSegments(state, segs(3));
    togglePin(state, 2);
    togglePin(state, 0);
    expect(state.config.pinned_indices).toEqual([0, 2]);
    togglePin(state, 2);
    expect(state.config.pinned_indices).toEqual([0]);
  });

  it('accumulates trade-off points from successful reports', () => {
    const state = initialState();
    state.config.ratio = 0.5;
    cacheReport(state, report('a'.repeat(16), [0.4, 0.1]));
    state.config.ratio = 0.75;
    cacheReport(state, report('b'.repeat(16), [0.4, 0.1]));
    expect(state.tradeoff).toHaveLength(2);
    expect(state.tradeoff[0].tokenReduction).toBeCloseTo(0.5);
    expect(state.tradeoff.map((p) => p.ratio)).toEqual([0.5, 0.75]);
  });

  it('never mutates cached reports', () => {
    const state = initialState();
    const rep = report('c'.repeat(16), [0.4, 0.1]);
    const frozen = JSON.stringify(rep);
    cacheReport(state, rep);
    setRatio(state, 0.1);
    togglePin(state, 0);
    expect(JSON.stringify(state.reports.get(rep.run_id))).toBe(frozen);
  });

  it('disables preview until a report with scores is cached', () => {
    const state = initialState();
    expect(previewAvailable(state)).toBe(false);
    state.activeRun = { run_id: 'd'.repeat(16), status: 'done', progress: 1 };
    expect(previewAvailable(state)).toBe(false);
    cacheReport(state, report('d'.repeat(16), [0.4, 0.1]));
    expect(previewAvailable(state)).toBe(true);
  });
});
