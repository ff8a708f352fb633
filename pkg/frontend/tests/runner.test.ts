import { describe, expect, it } from 'vitest';

import { inferCadInterval, formatInterval } from '../src/inference';
import { echoUrl, fetchLadder, runLadder } from '../src/runner';
import type { EchoBody, FetchLike } from '../src/types';
import { DEFAULT_SETTINGS } from '../src/types';
import { stubLadder } from './fixtures';

/** In-memory labd: answers /echo from the delay encoded in the hostname. */
function stubLabd(switchAt: number, pauseMs = 0) {
  const calls: string[] = [];
  let inflight = 0;
  let maxInflight = 0;
  const fetchFn: FetchLike = async (url) => {
    calls.push(url);
    inflight += 1;
    maxInflight = Math.max(maxInflight, inflight);
    if (pauseMs) await new Promise((r) => setTimeout(r, pauseMs));
    const u = new URL(url);
    const delay = Number(u.hostname.match(/^d(\d+)-/)![1]);
    const body: EchoBody = {
      client_address: delay <= switchAt ? '::1' : '127.0.0.1',
      family: delay <= switchAt ? 'IPv6' : 'IPv4',
      tier_index: 0,
      delay_ms: delay,
      domain: u.hostname,
      server_timestamp_ms: 0,
      run_nonce: 'stubrun',
    };
    inflight -= 1;
    return { ok: true, status: 200, json: async () => body };
  };
  return { calls, fetchFn, stats: () => ({ maxInflight }) };
}

const settings = { ...DEFAULT_SETTINGS };

describe('runLadder', () => {
  it('walks 18 tiers x 10 repetitions and the interval falls out', async () => {
    const ladder = stubLadder();
    const lab = stubLabd(200);
    const grid = await runLadder(ladder, settings, lab.fetchFn);

    expect(grid).toHaveLength(180);
    expect(lab.calls).toHaveLength(180);
    for (const r of grid) {
      expect(r.error).toBe(false);
      expect(r.family).toBe(r.delayMs <= 200 ? 'IPv6' : 'IPv4');
    }
    expect(formatInterval(inferCadInterval(grid))).toBe('(200, 250]');
  });

  it('gives every cell its own nonce', async () => {
    const ladder = stubLadder();
    const lab = stubLabd(200);
    await runLadder(ladder, settings, lab.fetchFn);

    const nonces = lab.calls.map((url) => new URL(url).searchParams.get('nonce'));
    expect(nonces.every((n) => n && n.includes('stubrun'))).toBe(true);
    expect(new Set(nonces).size).toBe(180);
  });

  it('turns a hung fetch into an error cell via the timeout', async () => {
    const ladder = stubLadder([0, 100]);
    const hung: FetchLike = (_url, init) =>
      new Promise((_resolve, reject) => {
        init?.signal?.addEventListener('abort', () => reject(new Error('aborted')));
      });
    const grid = await runLadder(
      ladder,
      { ...settings, repetitions: 1, cellTimeoutMs: 20 },
      hung,
    );
    expect(grid).toHaveLength(2);
    for (const r of grid) {
      expect(r.error).toBe(true);
      expect(r.family).toBeNull();
      expect(r.elapsedMs).toBeNull();
    }
  });

  it('keeps one fetch in flight by default, many in fast mode', async () => {
    const ladder = stubLadder([0, 100, 250, 400]);
    const slowLab = stubLabd(200, 2);
    await runLadder(ladder, { ...settings, repetitions: 2 }, slowLab.fetchFn);
    expect(slowLab.stats().maxInflight).toBe(1);

    const fastLab = stubLabd(200, 2);
    await runLadder(ladder, { ...settings, repetitions: 2, fast: true }, fastLab.fetchFn);
    expect(fastLab.stats().maxInflight).toBeGreaterThan(1);
  });

  it('reports each cell as it lands', async () => {
    const ladder = stubLadder([0, 250]);
    const lab = stubLabd(200);
    const seen: number[] = [];
    const grid = await runLadder(ladder, { ...settings, repetitions: 3 }, lab.fetchFn, {
      onCell: (r) => seen.push(r.repetition * 100 + r.tierIndex),
    });
    expect(seen).toHaveLength(grid.length);
    // Sequential default: tier order inside each repetition.
    expect(seen).toEqual([0, 1, 100, 101, 200, 201]);
  });
});

describe('echoUrl', () => {
  it('strips the trailing dot and targets the tier port', () => {
    const tier = stubLadder([250]).tiers[0]!;
    const url = echoUrl(tier, 'n-1');
    expect(url).toBe('http://d250-aaaa-stub00.he-test.example:9000/echo?nonce=n-1');
  });
});

describe('fetchLadder', () => {
  it('parses the ladder payload', async () => {
    const ladder = stubLadder();
    const fetchFn: FetchLike = async (url) => {
      expect(url).toBe('http://lab.example:8440/ladder');
      return { ok: true, status: 200, json: async () => ladder };
    };
    const got = await fetchLadder('http://lab.example:8440', fetchFn);
    expect(got.tiers).toHaveLength(18);
    expect(got.run_nonce).toBe('stubrun');
  });

  it('throws on a non-200', async () => {
    const fetchFn: FetchLike = async () => ({
      ok: false,
      status: 503,
      json: async () => ({}),
    });
    await expect(fetchLadder('http://lab.example', fetchFn)).rejects.toThrow(/503/);
  });
});
