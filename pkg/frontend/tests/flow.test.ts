import { beforeEach, describe, expect, it } from 'vitest';

import { mount, Workspace } from '../src/main';
import { FakeService } from './fakeService';

const TEMPLATE = 'First rule here. Second rule here. Third rule here. ';

function dom(): void {
  document.body.innerHTML = `
    <textarea id="template"></textarea>
    <input id="ratio" type="range" value="0.5" />
    <select id="estimator"></select>
    <button id="run"></button>
    <div id="progress"></div>
    <div id="bars"></div>
    <div id="prompt"></div>
    <div id="banner"></div>
    <span id="validation"></span>
  `;
}

function workspace(service: FakeService): Workspace {
  service.install();
  const ws = mount(document, '', [{ inputs: {}, reference: 'x' }], 1);
  ws.state.template = TEMPLATE;
  return ws;
}

describe('submit-poll-render cycle', () => {
  beforeEach(dom);

  it('runs to completion and renders bars and compressed prompt', async () => {
    const service = new FakeService();
    service.scores = [0.6, -0.1, 0.3];
    const ws = workspace(service);
    await ws.submit();
    const bars = [...document.querySelectorAll('#bars .bar')] as HTMLElement[];
    expect(bars).toHaveLength(3);
    expect(bars.map((b) => b.dataset.score)).toEqual(
      service.scores.map((s) => s.toFixed(6)),
    );
    // ratio 0.5 over 3 segments keeps the top one
    expect(document.querySelectorAll('#prompt s')).toHaveLength(2);
    expect(document.getElementById('prompt')!.textContent).toBe(TEMPLATE);
  });

  it('walks through the progress stages', async () => {
    const service = new FakeService();
    service.stepsPerPoll = 1;
    const ws = workspace(service);
    const stages: string[] = [];
    const progressEl = document.getElementById('progress')!;
    const observer = new MutationObserver(() => {
      stages.push(progressEl.dataset.stage ?? '');
    });
    observer.observe(progressEl, { childList: true, attributes: true, subtree: true });
    await ws.submit();
    observer.disconnect();
    expect(stages).toContain('segmenting');
    expect(stages[stages.length - 1]).toBe('done');
  });

  it('blocks invalid ratio before any request is sent', async () => {
    const service = new FakeService();
    const ws = workspace(service);
    ws.state.config.ratio = 2;
    await ws.submit();
    expect(service.requests).toHaveLength(0);
    expect(document.getElementById('validation')!.textContent).toContain('ratio');
  });

  it('blocks an empty template before any request is sent', async () => {
    const service = new FakeService();
    const ws = workspace(service);
    ws.state.template = '   ';
    await ws.submit();
    expect(service.requests).toHaveLength(0);
  });

  it('shows a retry banner when the server is down', async () => {
    const service = new FakeService();
    service.down = true;
    const ws = workspace(service);
    await ws.submit();
    expect(document.querySelector('.retry-banner')).not.toBeNull();
    // the retry button resubmits once the server is back
    service.down = false;
    (document.querySelector('.retry-banner button') as HTMLButtonElement).click();
    await new Promise((r) => setTimeout(r, 20));
    expect(document.querySelectorAll('#bars .bar').length).toBeGreaterThan(0);
  });

  it('surfaces 4xx messages inline', async () => {
    const service = new FakeService();
    const ws = workspace(service);
    ws.state.template = TEMPLATE;
    // fake a server-side rejection by removing the template after validation
    service.fetch = async () =>
      new Response(JSON.stringify({ detail: 'bad request' }), { status: 400 });
    (globalThis as any).fetch = service.fetch;
    await ws.submit();
    expect(document.querySelector('.retry-banner')!.textContent).toContain('bad request');
  });

  it('reuses the existing run on a duplicate submission', async () => {
    const service = new FakeService();
    const ws = workspace(service);
    await ws.submit();
    await ws.submit(); // identical body → 409 → same handle
    expect(service.submitted).toHaveLength(1);
    expect(ws.state.activeRun!.status).toBe('done');
  });

  it('pins survive preview at every slider position', async () => {
    const service = new FakeService();
    service.scores = [0.6, -0.1, 0.3];
    const ws = workspace(service);
    await ws.submit();
    ws.onPin(1); // pin the weakest segment
    for (const r of [0, 0.25, 0.5, 0.75, 1]) {
      ws.state.config.ratio = r;
      ws.preview();
      const pinnedEl = document.querySelector('#prompt [data-index="1"]')!;
      expect(pinnedEl.tagName).toBe('SPAN');
    }
  });
});
