// Table view-models: plain columns+rows of display strings, built from API
// responses. Error tables from /api/query flow through unchanged -- they are
// ordinary tables to the renderer.

import type { EntryDetail, EntrySummary, QueryResponse } from './types.js';

export interface TableModel {
  columns: string[];
  rows: string[][];
  // per-row entry id when the first column should link to the popup
  entryIds?: number[];
}

export function formatCell(value: string | number | null): string {
  if (value === null) return 'null';
  if (typeof value === 'number' && Number.isFinite(value) && !Number.isInteger(value)) {
    return value.toFixed(4);
  }
  return String(value);
}

export function formatTimestamp(us: number): string {
  return new Date(us / 1000).toISOString().replace('T', ' ').replace('Z', '');
}

export const OVERVIEW_COLUMNS = ['EntryID', 'Predicted Label', 'Snort Label'];

// Overview column header -> store column used for server-side sorting
export const OVERVIEW_SORT_COLUMNS: Record<string, string> = {
  EntryID: 'LOG_TIMESTAMP',
  'Predicted Label': 'MODEL_LABEL',
  'Snort Label': 'SNORT_LABEL',
};

export function entriesTable(entries: EntrySummary[]): TableModel {
  return {
    columns: OVERVIEW_COLUMNS,
    rows: entries.map((e) => [
      String(e.entry_id),
      formatCell(e.model_label),
      formatCell(e.truth_label),
    ]),
    entryIds: entries.map((e) => e.entry_id),
  };
}

export function queryResultTable(resp: QueryResponse): TableModel {
  return {
    columns: resp.columns,
    rows: resp.rows.map((row) => row.map(formatCell)),
  };
}

export function fieldsTable(detail: EntryDetail): TableModel {
  const rows: string[][] = [
    ['EntryID', `${detail.entry_id} (${formatTimestamp(detail.entry_id)})`],
    ['Predicted Label', formatCell(detail.model_label)],
    ['Snort Label', formatCell(detail.truth_label)],
  ];
  for (const [field, value] of Object.entries(detail.fields)) {
    rows.push([field, value === null ? 'null' : value]);
  }
  return { columns: ['Field', 'Value'], rows };
}
