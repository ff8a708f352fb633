// Page wiring.  All state lives in one store object; every mutation goes
// through update() so the DOM always reflects the latest grid.

import { countInconsistentRepetitions, inferCadInterval, CadInterval } from './inference';
import { renderMatrix, renderSummary } from './matrix';
import { fetchLadder, runLadder } from './runner';
import { buildSession, submitResults } from './submit';
import { DEFAULT_SETTINGS, Ladder, TierResult } from './types';

interface PageState {
  ladder: Ladder | null;
  results: TierResult[];
  running: boolean;
  status: string;
}

const state: PageState = { ladder: null, results: [], running: false, status: 'idle' };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function update(): void {
  const reps = DEFAULT_SETTINGS.repetitions;
  el('matrix').innerHTML = renderMatrix(state.results, reps);
  let interval: CadInterval | null = null;
  try {
    interval = inferCadInterval(state.results);
  } catch {
    // fewer than two delays measured so far
  }
  const consistency = state.results.length ? countInconsistentRepetitions(state.results) : null;
  el('summary').innerHTML = renderSummary(interval, consistency);
  el('status').textContent = state.status;
  el<HTMLButtonElement>('run').disabled = state.running;
  el<HTMLButtonElement>('submit').disabled = state.running || state.results.length === 0;
}

async function onRun(): Promise<void> {
  state.running = true;
  state.results = [];
  state.status = 'fetching ladder';
  update();
  try {
    const base = location.origin;
    state.ladder = await fetchLadder(base, fetch.bind(window));
    const fast = el<HTMLInputElement>('fast').checked;
    state.status = fast
      ? 'running (fast mode: concurrent fetches may skew timing)'
      : 'running';
    update();
    state.results = await runLadder(
      state.ladder,
      { ...DEFAULT_SETTINGS, fast },
      fetch.bind(window),
      {
        onCell: (cell) => {
          state.results = [...state.results.filter((r) => r !== cell), cell];
          update();
        },
      },
    );
    state.status = 'done';
  } catch (err) {
    state.status = `failed: ${err instanceof Error ? err.message : String(err)}`;
  }
  state.running = false;
  update();
}

async function onSubmit(): Promise<void> {
  const optIn = el<HTMLInputElement>('opt-in').checked;
  const session = buildSession(
    state.results,
    crypto.randomUUID(),
    optIn,
    navigator.userAgent,
    navigator.platform,
  );
  const status = await submitResults(location.origin, session, fetch.bind(window));
  state.status = status.message;
  update();
}

export function mount(): void {
  el('run').addEventListener('click', () => void onRun());
  el('submit').addEventListener('click', () => void onSubmit());
  update();
}

if (typeof document !== 'undefined' && document.getElementById('run')) {
  mount();
}
