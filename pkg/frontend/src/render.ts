import type { RunReport, SegmentInfo } from './api';

/**
 * Attribution bars in segment order: positive scores on a red scale,
 * negative on a blue scale; kept segments highlighted.
 */
export function renderBars(
  container: HTMLElement,
  scores: number[],
  keptMask: number[],
): void {
  container.replaceChildren();
  const maxAbs = Math.max(...scores.map(Math.abs), 1e-12);
  scores.forEach((score, i) => {
    const row = document.createElement('div');
    row.className = 'bar-row';
    const bar = document.createElement('div');
    bar.className = `bar ${score < 0 ? 'negative' : 'positive'}${keptMask[i] ? ' kept' : ''}`;
    bar.style.width = `${(Math.abs(score) / maxAbs) * 100}%`;
    bar.dataset.index = String(i);
    bar.dataset.score = score.toFixed(6);
    const label = document.createElement('span');
    label.className = 'bar-label';
    label.textContent = `[${i}] ${score.toFixed(3)}`;
    row.append(label, bar);
    container.append(row);
  });
}

/**
 * Compressed prompt view: dropped segments struck through, pinned
 * segments marked and never struck through.
 */
export function renderCompressed(
  container: HTMLElement,
  segments: SegmentInfo[],
  keptIndices: number[],
  pinned: Set<number>,
): void {
  container.replaceChildren();
  const kept = new Set(keptIndices);
  segments.forEach((seg, i) => {
    const el = document.createElement(kept.has(i) || pinned.has(i) ? 'span' : 's');
    el.className = `segment${pinned.has(i) ? ' pinned' : ''}${kept.has(i) ? ' kept' : ''}`;
    el.dataset.index = String(i);
    el.textContent = seg.text;
    container.append(el);
  });
}

export function renderProgress(container: HTMLElement, stage: string, progress: number): void {
  container.textContent = `${stage} (${Math.round(progress * 100)}%)`;
  container.dataset.stage = stage;
}

export function renderRetryBanner(container: HTMLElement, message: string, onRetry: () => void): void {
  container.replaceChildren();
  const banner = document.createElement('div');
  banner.className = 'retry-banner';
  banner.textContent = message;
  const button = document.createElement('button');
  button.textContent = 'Retry';
  button.addEventListener('click', onRetry);
  banner.append(button);
  container.append(banner);
}

export function renderReport(
  barsEl: HTMLElement,
  promptEl: HTMLElement,
  report: RunReport,
  segments: SegmentInfo[],
  pinned: Set<number>,
): void {
  const scores = report.attribution?.scores ?? [];
  renderBars(barsEl, scores, report.kept_mask);
  const keptIndices = report.kept_mask
    .map((bit, i) => (bit ? i : -1))
    .filter((i) => i >= 0);
  renderCompressed(promptEl, segments, keptIndices, pinned);
}
