// Pure rendering: TierResult grid in, HTML string out.  No DOM access here,
// so the exact output is snapshot-testable.

import type { TierResult } from './types';
import { CadInterval, ConsistencyCount, formatInterval } from './inference';

function cellFor(r: TierResult | undefined): string {
  if (!r) return '<td class="cell pending" title="not yet run"></td>';
  if (r.error || r.family === null) {
    return `<td class="cell err" title="rep ${r.repetition}: error">&#215;</td>`;
  }
  const cls = r.family === 'IPv6' ? 'v6' : 'v4';
  const glyph = r.family === 'IPv6' ? '6' : '4';
  const elapsed = r.elapsedMs === null ? '' : ` in ${r.elapsedMs} ms`;
  return `<td class="cell ${cls}" title="rep ${r.repetition}: ${r.family}${elapsed}">${glyph}</td>`;
}

/**
 * Delay rows by ascending delay, repetition columns left to right.  Cells a
 * run has not reached yet render as pending, so the table can be redrawn
 * after every completed fetch.
 */
export function renderMatrix(results: TierResult[], repetitions: number): string {
  const byKey = new Map<string, TierResult>();
  const rows = new Map<number, number>(); // delay -> tier index
  for (const r of results) {
    byKey.set(`${r.delayMs}:${r.repetition}`, r);
    rows.set(r.delayMs, r.tierIndex);
  }
  const delays = [...rows.keys()].sort((a, b) => a - b);

  const out: string[] = [];
  out.push('<table class="matrix">');
  out.push('<thead><tr><th>delay</th>');
  for (let rep = 0; rep < repetitions; rep++) {
    out.push(`<th>r${rep}</th>`);
  }
  out.push('</tr></thead>');
  out.push('<tbody>');
  for (const delay of delays) {
    out.push(`<tr><th>${delay} ms</th>`);
    for (let rep = 0; rep < repetitions; rep++) {
      out.push(cellFor(byKey.get(`${delay}:${rep}`)));
    }
    out.push('</tr>');
  }
  out.push('</tbody>');
  out.push('</table>');
  return out.join('');
}

export function renderSummary(
  interval: CadInterval | null,
  consistency: ConsistencyCount | null,
): string {
  const parts: string[] = [];
  if (interval) {
    parts.push(
      `<p class="interval">connection attempt delay in <strong>${formatInterval(interval)}</strong> ms</p>`,
    );
    if (interval.inconsistent) {
      parts.push('<p class="warn">some delays saw both families; bracket is the majority view</p>');
    }
  } else {
    parts.push('<p class="interval">not enough data for an interval</p>');
  }
  if (consistency && consistency.totalRepetitions > 0) {
    const { inconsistentRepetitions: bad, totalRepetitions: total } = consistency;
    parts.push(`<p class="consistency">${bad}/${total} repetitions off-pattern</p>`);
  }
  return parts.join('');
}
