/**
 * Client-side preview prune. Must reproduce the service's decision exactly
 * for identical (scores, ratio, pins): keep k = max(floor(r*M), |pins|, 1)
 * segments; pinned segments always survive; the rest are taken by descending
 * score with ties broken toward the lower index; output preserves order.
 */
export function pruneIndices(scores: number[], ratio: number, pins: number[] = []): number[] {
  const m = scores.length;
  if (m === 0) throw new Error('no segments to prune');
  if (ratio < 0 || ratio > 1) throw new Error('ratio must be in [0, 1]');
  const pinned = new Set(pins);
  for (const p of pinned) {
    if (p < 0 || p >= m) throw new Error(`pinned index ${p} out of range`);
  }
  const k = Math.max(Math.floor(ratio * m), pinned.size, 1);
  const candidates = [];
  for (let j = 0; j < m; j++) {
    if (!pinned.has(j)) candidates.push(j);
  }
  candidates.sort((a, b) => (scores[b] - scores[a]) || (a - b));
  const keep = new Set(pinned);
  for (const j of candidates) {
    if (keep.size >= k) break;
    keep.add(j);
  }
  return [...keep].sort((a, b) => a - b);
}
