import type { ApiClient, RunHandle } from './api';

export const STAGES = ['queued', 'segmenting', 'attributing', 'pruning', 'evaluating'];

/**
 * Poll a run until it reaches a terminal state. Progress updates are pushed
 * through `onProgress`; the resolved handle is 'done' or 'failed'.
 */
export async function pollRun(
  api: ApiClient,
  runId: string,
  onProgress?: (handle: RunHandle) => void,
  intervalMs = 500,
  sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
): Promise<RunHandle> {
  for (;;) {
    const handle = await api.getRun(runId);
    onProgress?.(handle);
    if (handle.status === 'done' || handle.status === 'failed') return handle;
    await sleep(intervalMs);
  }
}
