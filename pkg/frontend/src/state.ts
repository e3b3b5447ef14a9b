import type { RunConfig, RunHandle, RunReport, SegmentInfo } from './api';

export interface TradeoffPoint {
  ratio: number;
  tokenReduction: number;
  testScore: number;
}

export interface ViewState {
  template: string;
  config: RunConfig;
  segments: SegmentInfo[];
  pinned: Set<number>;
  activeRun: RunHandle | null;
  /** reports are cached immutably by run_id and never mutated */
  reports: Map<string, RunReport>;
  tradeoff: TradeoffPoint[];
  pendingRatio: number | null;
}

export function initialState(): ViewState {
  return {
    template: '',
    config: {
      ratio: 0.5,
      estimator: 'shap_exact',
      segmentation: { strategy: 'structural' },
      pinned_indices: [],
    },
    segments: [],
    pinned: new Set(),
    activeRun: null,
    reports: new Map(),
    tradeoff: [],
    pendingRatio: null,
  };
}

export function setTemplate(state: ViewState, template: string): void {
  state.template = template;
  // segmentation is stale, so pins no longer refer to anything
  state.segments = [];
  state.pinned.clear();
}

export function setSegments(state: ViewState, segments: SegmentInfo[]): void {
  state.segments = segments;
  for (const p of [...state.pinned]) {
    if (p >= segments.length) state.pinned.delete(p);
  }
}

export function setRatio(state: ViewState, ratio: number): void {
  state.config.ratio = Math.min(1, Math.max(0, ratio));
}

export function togglePin(state: ViewState, index: number): void {
  if (index < 0 || index >= state.segments.length) return;
  if (state.pinned.has(index)) state.pinned.delete(index);
  else state.pinned.add(index);
  state.config.pinned_indices = [...state.pinned].sort((a, b) => a - b);
}

export function cacheReport(state: ViewState, report: RunReport): void {
  state.reports.set(report.run_id, report);
  if (report.status === 'ok' && report.score_after !== null) {
    const reduction = report.tokens_before > 0
      ? 1 - report.tokens_after / report.tokens_before
      : 0;
    state.tradeoff.push({
      ratio: state.config.ratio,
      tokenReduction: reduction,
      testScore: report.score_after,
    });
  }
}

/** Preview needs the cached probe scores; without them it is disabled. */
export function previewAvailable(state: ViewState): boolean {
  const run = state.activeRun;
  if (!run) return false;
  const report = state.reports.get(run.run_id);
  return !!report?.attribution && report.attribution.scores.length > 0;
}
