import { describe, expect, it } from 'vitest';

import { countInconsistentRepetitions, inferCadInterval } from '../src/inference';
import { renderMatrix, renderSummary } from '../src/matrix';
import { cell, LADDER_DELAYS, switchGrid } from './fixtures';

describe('renderMatrix', () => {
  it('renders the full 18x10 grid (snapshot)', () => {
    const grid = switchGrid(LADDER_DELAYS, 10, 200);
    expect(renderMatrix(grid, 10)).toMatchSnapshot();
  });

  it('is a pure function of the grid', () => {
    const grid = switchGrid(LADDER_DELAYS, 10, 200);
    const first = renderMatrix(grid, 10);
    expect(renderMatrix(grid, 10)).toBe(first);
    // Input order must not matter: rows sort by delay, columns by repetition.
    const shuffled = [...grid].reverse();
    expect(renderMatrix(shuffled, 10)).toBe(first);
  });

  it('has one row per delay and one column per repetition', () => {
    const grid = switchGrid(LADDER_DELAYS, 10, 200);
    const html = renderMatrix(grid, 10);
    expect(html.match(/<tr>/g)).toHaveLength(18 + 1); // 18 delays + header
    expect(html.match(/<th>r\d+<\/th>/g)).toHaveLength(10);
  });

  it('hatches error cells and leaves unreached cells pending', () => {
    const grid = [
      cell(0, 0, 0, 'IPv6'),
      cell(0, 0, 1, null, true),
      cell(1, 250, 0, 'IPv4'),
    ];
    const html = renderMatrix(grid, 3);
    expect(html).toContain('class="cell err"');
    expect(html.match(/class="cell pending"/g)).toHaveLength(3);
  });
});

describe('renderSummary', () => {
  it('shows the inferred interval string', () => {
    const grid = switchGrid(LADDER_DELAYS, 10, 200);
    const html = renderSummary(inferCadInterval(grid), countInconsistentRepetitions(grid));
    expect(html).toContain('(200, 250]');
    expect(html).toContain('0/10 repetitions off-pattern');
  });

  it('copes with no interval yet', () => {
    const html = renderSummary(null, null);
    expect(html).toContain('not enough data');
  });
});
