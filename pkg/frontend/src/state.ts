// View state and its mapping to API requests. The mapping is pure: identical
// state always produces identical request parameters.

import type { Connective, Predicate, SortDirection, TimeUnit } from './types.js';

export interface OverviewState {
  threshold: number;
  predicates: Predicate[];
  connective: Connective;
  sort: string; // column name
  dir: SortDirection;
}

export const defaultOverviewState: OverviewState = {
  threshold: 0.7,
  predicates: [],
  connective: 'AND',
  sort: 'MODEL_LABEL',
  dir: 'asc',
};

export interface ApiRequest {
  method: 'GET' | 'POST';
  url: string;
  body?: unknown;
}

export function overviewRequest(state: OverviewState): ApiRequest {
  const usable = state.predicates.filter((p) => p.field !== '');
  if (usable.length === 0) {
    const params = new URLSearchParams({
      threshold: String(state.threshold),
      sort: state.sort,
      dir: state.dir,
    });
    return { method: 'GET', url: `/api/logs?${params}` };
  }
  return {
    method: 'POST',
    url: '/api/logs',
    body: {
      threshold: state.threshold,
      predicates: usable,
      connective: state.connective,
      sort: state.sort,
      dir: state.dir,
    },
  };
}

export interface StatsState {
  threshold: number;
  unit: TimeUnit;
}

export const defaultStatsState: StatsState = { threshold: 0.7, unit: 'hour' };

export function statsRequest(state: StatsState): ApiRequest {
  const params = new URLSearchParams({
    threshold: String(state.threshold),
    unit: state.unit,
  });
  return { method: 'GET', url: `/api/stats?${params}` };
}

// Each view keeps at most one request in flight; responses superseded by a
// newer request are discarded.
export class LatestWins {
  private seq = 0;

  next(): number {
    this.seq += 1;
    return this.seq;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.seq;
  }
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => fn(...args), waitMs);
  };
}
