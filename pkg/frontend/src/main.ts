import { ApiClient, type EvalExample, type RunHandle } from './api';
import { pollRun } from './poll';
import { pruneIndices } from './prune';
import {
  ViewState,
  cacheReport,
  initialState,
  previewAvailable,
  setRatio,
  setSegments,
  setTemplate,
  togglePin,
} from './state';
import {
  renderCompressed,
  renderProgress,
  renderReport,
  renderRetryBanner,
} from './render';

interface Elements {
  template: HTMLTextAreaElement;
  ratio: HTMLInputElement;
  estimator: HTMLSelectElement;
  run: HTMLButtonElement;
  progress: HTMLElement;
  bars: HTMLElement;
  prompt: HTMLElement;
  banner: HTMLElement;
  validation: HTMLElement;
}

export class Workspace {
  state: ViewState = initialState();
  private inFlight = false;

  constructor(
    private api: ApiClient,
    private el: Elements,
    private dataset: EvalExample[],
    private pollIntervalMs = 500,
  ) {
    el.run.addEventListener('click', () => void this.submit());
    el.template.addEventListener('input', () => setTemplate(this.state, el.template.value));
    el.ratio.addEventListener('input', () => this.onRatio(Number(el.ratio.value)));
    el.bars.addEventListener('click', (ev) => {
      const idx = (ev.target as HTMLElement).dataset?.index;
      if (idx !== undefined) this.onPin(Number(idx));
    });
  }

  /** Ratio slider: preview instantly from cached scores, then confirm with a run. */
  onRatio(ratio: number): void {
    setRatio(this.state, ratio);
    this.preview();
    if (this.inFlight) {
      this.state.pendingRatio = this.state.config.ratio; // last write wins
    } else {
      void this.submit();
    }
  }

  onPin(index: number): void {
    togglePin(this.state, index);
    this.preview();
  }

  preview(): void {
    if (!previewAvailable(this.state)) return;
    const report = this.state.reports.get(this.state.activeRun!.run_id)!;
    const kept = pruneIndices(
      report.attribution!.scores,
      this.state.config.ratio,
      [...this.state.pinned],
    );
    renderCompressed(this.el.prompt, this.state.segments, kept, this.state.pinned);
  }

  async submit(): Promise<void> {
    const { template, config } = this.state;
    this.el.validation.textContent = '';
    if (!template.trim()) {
      this.el.validation.textContent = 'template is empty';
      return;
    }
    if (config.ratio < 0 || config.ratio > 1) {
      this.el.validation.textContent = 'ratio must be between 0 and 1';
      return; // invalid input never reaches the wire
    }
    this.inFlight = true;
    try {
      const seg = await this.api.segment(template, config.segmentation);
      setSegments(this.state, seg.segments);
      let handle: RunHandle;
      try {
        handle = await this.api.submitRun({
          template,
          dataset: this.dataset,
          metric: 'token_f1',
          config: { ...config, pinned_indices: [...this.state.pinned].sort((a, b) => a - b) },
        });
      } catch (err: unknown) {
        // content-addressed duplicate: the 409 body is the existing handle
        if ((err as { status?: number }).status === 409) {
          handle = await this.api.getRun(this.runIdFromError(err));
        } else {
          throw err;
        }
      }
      this.state.activeRun = handle;
      const final = await pollRun(this.api, handle.run_id, (h) => {
        this.state.activeRun = h;
        renderProgress(this.el.progress, h.status, h.progress);
      }, this.pollIntervalMs);
      if (final.status === 'failed') {
        renderRetryBanner(this.el.banner, final.error ?? 'run failed', () => void this.submit());
        return;
      }
      const report = await this.api.getReport(handle.run_id);
      cacheReport(this.state, report);
      renderReport(this.el.bars, this.el.prompt, report, this.state.segments, this.state.pinned);
    } catch (err: unknown) {
      const message = err instanceof Error ? err.message : String(err);
      renderRetryBanner(this.el.banner, message, () => void this.submit());
    } finally {
      this.inFlight = false;
      const pending = this.state.pendingRatio;
      if (pending !== null) {
        this.state.pendingRatio = null;
        setRatio(this.state, pending);
        void this.submit();
      }
    }
  }

  private runIdFromError(err: unknown): string {
    const match = /run_id[^a-f0-9]*([a-f0-9]{16})/.exec(
      err instanceof Error ? err.message : String(err),
    );
    if (!match) throw err;
    return match[1];
  }
}

export function mount(
  root: Document,
  baseUrl = '',
  dataset: EvalExample[] = [],
  pollIntervalMs = 500,
): Workspace {
  const get = <T extends HTMLElement>(id: string) => root.getElementById(id) as T;
  return new Workspace(new ApiClient(baseUrl), {
    template: get('template'),
    ratio: get('ratio'),
    estimator: get('estimator'),
    run: get('run'),
    progress: get('progress'),
    bars: get('bars'),
    prompt: get('prompt'),
    banner: get('banner'),
    validation: get('validation'),
  }, dataset, pollIntervalMs);
}
