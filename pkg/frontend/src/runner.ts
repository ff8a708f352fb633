// Walks the ladder: one fetch per tier x repetition, family taken from the
// echo body (the page cannot see sockets, so the server's view of the client
// address is the measurement).

import type { EchoBody, FetchLike, Ladder, RunSettings, Tier, TierResult } from './types';

let cellCounter = 0;

/** Unique per cell; doubles as the cache buster. */
export function freshNonce(runNonce: string, tier: Tier, repetition: number): string {
  cellCounter += 1;
  const rand = Math.random().toString(36).slice(2, 8);
  return `${runNonce}-t${tier.tier_index}-r${repetition}-${cellCounter}${rand}`;
}

export function echoUrl(tier: Tier, nonce: string): string {
  const host = tier.domain.replace(/\.$/, '');
  const port = tier.v4_endpoint[1];
  return `http://${host}:${port}/echo?nonce=${nonce}`;
}

export interface RunnerHooks {
  onCell?: (result: TierResult) => void;
  now?: () => number;
}

async function runCell(
  tier: Tier,
  repetition: number,
  runNonce: string,
  settings: RunSettings,
  fetchFn: FetchLike,
  now: () => number,
): Promise<TierResult> {
  const nonce = freshNonce(runNonce, tier, repetition);
  const controller = new AbortController();
  const timer = setTimeout(() => controller.abort(), settings.cellTimeoutMs);
  const started = now();
  try {
    const resp = await fetchFn(echoUrl(tier, nonce), { signal: controller.signal });
    if (!resp.ok) throw new Error(`status ${resp.status}`);
    const body = (await resp.json()) as EchoBody;
    return {
      tierIndex: tier.tier_index,
      delayMs: tier.delay_ms,
      repetition,
      family: body.family,
      elapsedMs: Math.round(now() - started),
      error: false,
    };
  } catch {
    return {
      tierIndex: tier.tier_index,
      delayMs: tier.delay_ms,
      repetition,
      family: null,
      elapsedMs: null,
      error: true,
    };
  } finally {
    clearTimeout(timer);
  }
}

/**
 * Runs repetitions outermost.  Default is strictly sequential; fast mode
 * fires all tiers of a repetition at once (handy, but concurrent fetches can
 * contend with the very delays being measured).
 */
export async function runLadder(
  ladder: Ladder,
  settings: RunSettings,
  fetchFn: FetchLike,
  hooks: RunnerHooks = {},
): Promise<TierResult[]> {
  const now = hooks.now ?? (() => Date.now());
  const results: TierResult[] = [];

  const record = (r: TierResult) => {
    results.push(r);
    hooks.onCell?.(r);
  };

  for (let rep = 0; rep < settings.repetitions; rep++) {
    if (settings.fast) {
      const cells = await Promise.all(
        ladder.tiers.map((tier) =>
          runCell(tier, rep, ladder.run_nonce, settings, fetchFn, now),
        ),
      );
      cells.forEach(record);
    } else {
      for (const tier of ladder.tiers) {
        record(await runCell(tier, rep, ladder.run_nonce, settings, fetchFn, now));
      }
    }
  }
  return results;
}

export async function fetchLadder(baseUrl: string, fetchFn: FetchLike): Promise<Ladder> {
  const resp = await fetchFn(`${baseUrl}/ladder`);
  if (!resp.ok) throw new Error(`ladder fetch failed: status ${resp.status}`);
  return (await resp.json()) as Ladder;
}
