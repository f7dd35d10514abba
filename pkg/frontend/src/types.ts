// Shapes of the JSON the API serves. Field names mirror the wire exactly.

export interface EntrySummary {
  entry_id: number;
  model_label: number | null;
  truth_label: number | null;
}

export interface LogsResponse {
  query: string; // generated SQL text, displayed verbatim above the table
  entries: EntrySummary[];
}

export interface EntryDetail {
  entry_id: number;
  fields: Record<string, string | null>;
  model_label: number | null;
  truth_label: number | null;
}

export interface QueryResponse {
  columns: string[];
  rows: (string | number | null)[][];
  error: boolean; // error tables render like any other table
}

export interface StatsBucket {
  start_us: number;
  count: number;
}

export interface StatsResponse {
  unit: string;
  threshold: number;
  buckets: StatsBucket[];
}

export interface Predicate {
  field: string;
  pattern: string;
}

export type SortDirection = 'asc' | 'desc';
export type Connective = 'AND' | 'OR';
export type TimeUnit = 'day' | 'hour' | 'minute';
