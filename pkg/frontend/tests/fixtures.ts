// Shared builders: a stub ladder shaped exactly like labd's GET /ladder
// payload, and grids with a known switch point.

import type { Family, Ladder, Tier, TierResult } from '../src/types';

export const LADDER_DELAYS = [
  0, 50, 100, 150, 200, 250, 300, 350, 400, 500,
  600, 800, 1000, 1500, 2000, 2500, 3000, 5000,
];

export function stubLadder(delays: number[] = LADDER_DELAYS): Ladder {
  const tiers: Tier[] = delays.map((delay, i) => ({
    tier_index: i,
    delay_ms: delay,
    domain: `d${delay}-aaaa-stub${String(i).padStart(2, '0')}.he-test.example.`,
    v4_endpoint: ['127.0.0.1', 9000 + i],
    v6_endpoint: ['::1', 9000 + i],
  }));
  return { schema: 1, run_nonce: 'stubrun', tiers };
}

export function cell(
  tierIndex: number,
  delayMs: number,
  repetition: number,
  family: Family | null,
  error = false,
): TierResult {
  return {
    tierIndex,
    delayMs,
    repetition,
    family,
    elapsedMs: error ? null : delayMs + 12,
    error,
  };
}

/** Clean grid: IPv6 up to and including switchAt, IPv4 above. */
export function switchGrid(
  delays: number[],
  repetitions: number,
  switchAt: number,
): TierResult[] {
  const grid: TierResult[] = [];
  delays.forEach((delay, i) => {
    for (let rep = 0; rep < repetitions; rep++) {
      grid.push(cell(i, delay, rep, delay <= switchAt ? 'IPv6' : 'IPv4'));
    }
  });
  return grid;
}
