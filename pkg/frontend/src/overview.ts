// Overview: threshold slider + AND/OR predicate composer in the sidebar,
// generated SQL and the sortable entry table in the main panel, entry-id
// links opening the field-value popup.

import { ApiClient } from './api.js';
import { OverviewController } from './controllers.js';
import { clear, el, renderTable, showPopup } from './dom.js';
import { OVERVIEW_SORT_COLUMNS, fieldsTable } from './tables.js';
import type { Connective, LogsResponse, Predicate } from './types.js';

export function mountOverview(root: HTMLElement, api: ApiClient): OverviewController {
  const thresholdValue = el('span', { class: 'slider-value' }, ['0.70']);
  const slider = el('input', {
    type: 'range', min: '0', max: '1', step: '0.01', value: '0.7', class: 'threshold-slider',
  });
  const predicateList = el('div', { class: 'predicate-list' });
  const addPredicate = el('button', {}, ['Add field filter']);
  const connective = el('select', {}, [
    el('option', { value: 'AND' }, ['AND']),
    el('option', { value: 'OR' }, ['OR']),
  ]);
  const sidebar = el('div', { class: 'sidebar' }, [
    el('h3', {}, ['Anomaly threshold']),
    el('div', { class: 'slider-row' }, [slider, thresholdValue]),
    el('h3', {}, ['Advanced search']),
    el('p', { class: 'hint' }, ['Filter on HTTP fields; % matches any text.']),
    predicateList,
    addPredicate,
    el('div', { class: 'connective-row' }, [el('label', {}, ['Combine with ']), connective]),
  ]);

  const queryText = el('pre', { class: 'query-text' });
  const tableHost = el('div', { class: 'table-host' });
  const main = el('div', { class: 'main-panel' }, [queryText, tableHost]);
  root.append(sidebar, main);

  const controller = new OverviewController(
    (req) => api.request<LogsResponse>(req),
    (query, table) => {
      queryText.textContent = query;
      clear(tableHost);
      tableHost.append(
        renderTable(table, {
          onHeaderClick: (column) => {
            const sortColumn = OVERVIEW_SORT_COLUMNS[column];
            if (sortColumn) void controller.sortBy(sortColumn);
          },
          onEntryClick: (entryId) => {
            void api.entry(entryId).then((detail) => {
              showPopup(`Request ${entryId}`, renderTable(fieldsTable(detail)));
            });
          },
        }),
      );
    },
  );

  function readPredicates(): Predicate[] {
    const rows = predicateList.querySelectorAll<HTMLElement>('.predicate-row');
    const predicates: Predicate[] = [];
    rows.forEach((row) => {
      const field = row.querySelector<HTMLInputElement>('.predicate-field')!.value.trim();
      const pattern = row.querySelector<HTMLInputElement>('.predicate-pattern')!.value;
      if (field !== '') predicates.push({ field, pattern });
    });
    return predicates;
  }

  function addPredicateRow(): void {
    const field = el('input', { class: 'predicate-field', placeholder: 'field (e.g. getRemoteAddr)' });
    const pattern = el('input', { class: 'predicate-pattern', placeholder: 'value pattern' });
    const remove = el('button', { class: 'predicate-remove' }, ['x']);
    const row = el('div', { class: 'predicate-row' }, [field, pattern, remove]);
    remove.addEventListener('click', () => {
      row.remove();
      void controller.setPredicates(readPredicates());
    });
    for (const input of [field, pattern]) {
      input.addEventListener('change', () => void controller.setPredicates(readPredicates()));
    }
    predicateList.append(row);
  }

  slider.addEventListener('input', () => {
    thresholdValue.textContent = Number(slider.value).toFixed(2);
  });
  slider.addEventListener('change', () => void controller.setThreshold(Number(slider.value)));
  addPredicate.addEventListener('click', addPredicateRow);
  connective.addEventListener('change', () =>
    void controller.setConnective(connective.value as Connective),
  );

  void controller.refresh();
  return controller;
}
