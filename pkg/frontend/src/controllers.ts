// View controllers: hold state, talk to the API through injected loaders,
// and hand finished view-models to an injected renderer. No DOM in here, so
// the behaviors (history, stale-response discard, re-bucketing) are testable
// headlessly.

import { pushHistory } from './history.js';
import {
  ApiRequest,
  LatestWins,
  OverviewState,
  StatsState,
  debounce,
  defaultOverviewState,
  defaultStatsState,
  overviewRequest,
  statsRequest,
} from './state.js';
import { TableModel, entriesTable, queryResultTable } from './tables.js';
import type {
  Connective,
  LogsResponse,
  Predicate,
  QueryResponse,
  SortDirection,
  StatsResponse,
  TimeUnit,
} from './types.js';

export class OverviewController {
  state: OverviewState = { ...defaultOverviewState, predicates: [] };
  private tickets = new LatestWins();

  constructor(
    private load: (req: ApiRequest) => Promise<LogsResponse>,
    private render: (queryText: string, table: TableModel) => void,
  ) {}

  async refresh(): Promise<void> {
    const ticket = this.tickets.next();
    const resp = await this.load(overviewRequest(this.state));
    if (!this.tickets.isCurrent(ticket)) return; // superseded; drop it
    this.render(resp.query, entriesTable(resp.entries));
  }

  setThreshold(threshold: number): Promise<void> {
    this.state = { ...this.state, threshold };
    return this.refresh();
  }

  setConnective(connective: Connective): Promise<void> {
    this.state = { ...this.state, connective };
    return this.refresh();
  }

  setPredicates(predicates: Predicate[]): Promise<void> {
    this.state = { ...this.state, predicates };
    return this.refresh();
  }

  // Repeated sorts on one column flip its direction; a new column starts asc.
  sortBy(column: string): Promise<void> {
    const dir: SortDirection =
      this.state.sort === column && this.state.dir === 'asc' ? 'desc' : 'asc';
    this.state = { ...this.state, sort: column, dir };
    return this.refresh();
  }
}

export class SearchController {
  history: string[] = [];
  lastQuery = '';
  private tickets = new LatestWins();

  constructor(
    private runQuery: (text: string) => Promise<QueryResponse>,
    private render: (lastQuery: string, table: TableModel) => void,
  ) {}

  // Submits verbatim text; the history holds the exact string submitted.
  async submit(text: string): Promise<void> {
    if (text.trim() === '') return;
    const ticket = this.tickets.next();
    const resp = await this.runQuery(text);
    if (!this.tickets.isCurrent(ticket)) return;
    this.history = pushHistory(this.history, text);
    this.lastQuery = text;
    this.render(text, queryResultTable(resp));
  }
}

export class StatsController {
  state: StatsState = { ...defaultStatsState };
  private tickets = new LatestWins();
  private scheduleRefresh: () => void;

  constructor(
    private load: (req: ApiRequest) => Promise<StatsResponse>,
    private render: (resp: StatsResponse) => void,
    debounceMs = 250,
  ) {
    this.scheduleRefresh = debounce(() => void this.refresh(), debounceMs);
  }

  async refresh(): Promise<void> {
    const ticket = this.tickets.next();
    const resp = await this.load(statsRequest(this.state));
    if (!this.tickets.isCurrent(ticket)) return;
    this.render(resp);
  }

  // The plot reacts to control changes directly; there is no submit button.
  setThreshold(threshold: number): void {
    this.state = { ...this.state, threshold };
    this.scheduleRefresh();
  }

  setUnit(unit: TimeUnit): void {
    this.state = { ...this.state, unit };
    this.scheduleRefresh();
  }
}
