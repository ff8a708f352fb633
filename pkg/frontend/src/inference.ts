// Client-side mirror of labd's interval inference, so the page can show the
// bracket without another round trip.  Same rules: majority per delay, ties
// count as IPv4, error cells are excluded.

import type { TierResult } from './types';

export interface CadInterval {
  loMs: number | null; // largest delay IPv6 still won; null = unbounded below
  hiMs: number | null; // smallest IPv4 delay past lo; null = unbounded above
  inconsistent: boolean; // some delay saw both families
}

export function inferCadInterval(results: TierResult[]): CadInterval {
  const byDelay = new Map<number, { v6: number; v4: number }>();
  for (const r of results) {
    if (r.error || r.family === null) continue;
    let counts = byDelay.get(r.delayMs);
    if (!counts) {
      counts = { v6: 0, v4: 0 };
      byDelay.set(r.delayMs, counts);
    }
    if (r.family === 'IPv6') counts.v6 += 1;
    else counts.v4 += 1;
  }
  if (byDelay.size < 2) {
    throw new Error('need observations at two or more delays');
  }

  let inconsistent = false;
  const majority = new Map<number, 'IPv6' | 'IPv4'>();
  for (const [delay, counts] of byDelay) {
    if (counts.v6 > 0 && counts.v4 > 0) inconsistent = true;
    majority.set(delay, counts.v6 > counts.v4 ? 'IPv6' : 'IPv4');
  }

  const delays = [...majority.keys()].sort((a, b) => a - b);
  const v6Delays = delays.filter((d) => majority.get(d) === 'IPv6');
  const lo = v6Delays.length ? Math.max(...v6Delays) : null;
  let hi: number | null = null;
  for (const d of delays) {
    if (majority.get(d) === 'IPv4' && (lo === null || d > lo)) {
      hi = d;
      break;
    }
  }
  return { loMs: lo, hiMs: hi, inconsistent };
}

export function formatInterval(interval: CadInterval): string {
  const lo = interval.loMs === null ? '-inf' : String(interval.loMs);
  if (interval.hiMs === null) return `(${lo}, inf)`;
  return `(${lo}, ${interval.hiMs}]`;
}

export interface ConsistencyCount {
  inconsistentRepetitions: number;
  totalRepetitions: number;
}

/**
 * A repetition is off-pattern when it used IPv4 at some delay but IPv6 at a
 * larger one.  Switching to IPv4 early and staying there is still monotone.
 */
export function countInconsistentRepetitions(results: TierResult[]): ConsistencyCount {
  const byRep = new Map<number, Map<number, 'IPv6' | 'IPv4'>>();
  for (const r of results) {
    if (r.error || r.family === null) continue;
    let cells = byRep.get(r.repetition);
    if (!cells) {
      cells = new Map();
      byRep.set(r.repetition, cells);
    }
    cells.set(r.delayMs, r.family);
  }

  let bad = 0;
  for (const cells of byRep.values()) {
    const delays = [...cells.keys()].sort((a, b) => a - b);
    let seenV4 = false;
    let inverted = false;
    for (const d of delays) {
      if (cells.get(d) === 'IPv4') seenV4 = true;
      else if (seenV4) inverted = true;
    }
    if (inverted) bad += 1;
  }
  return { inconsistentRepetitions: bad, totalRepetitions: byRep.size };
}
