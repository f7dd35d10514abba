// Search: free-form SQL against the store. Submit button or plain Enter,
// optional clear-on-submit, the last query echoed in bold above the result,
// and a unique most-recent-first history of the last 10 submissions whose
// links resubmit verbatim. Invalid SQL comes back as a two-row error table
// and renders like any other result.

import { ApiClient } from './api.js';
import { SearchController } from './controllers.js';
import { clear, el, renderTable } from './dom.js';

export function mountSearch(root: HTMLElement, api: ApiClient): SearchController {
  const input = el('textarea', {
    class: 'query-input',
    rows: '5',
    placeholder: 'SELECT * FROM HTTPLOG_REQUEST_LABELED WHERE MODEL_LABEL > 0.70',
  });
  const submit = el('button', { class: 'submit-query' }, ['Submit']);
  const clearOnSubmit = el('input', { type: 'checkbox', id: 'clear-on-submit' });
  const historyList = el('ul', { class: 'history-list' });
  const sidebar = el('div', { class: 'sidebar' }, [
    el('label', { for: 'clear-on-submit' }, [clearOnSubmit, ' clear input on submit']),
    input,
    submit,
    el('h3', {}, ['History']),
    historyList,
  ]);

  const lastQuery = el('strong', { class: 'last-query' });
  const tableHost = el('div', { class: 'table-host' });
  const main = el('div', { class: 'main-panel' }, [lastQuery, tableHost]);
  root.append(sidebar, main);

  const controller = new SearchController(
    (text) => api.query(text),
    (query, table) => {
      lastQuery.textContent = query;
      clear(tableHost);
      tableHost.append(renderTable(table));
      renderHistory();
    },
  );

  function renderHistory(): void {
    clear(historyList);
    for (const past of controller.history) {
      const link = el('a', { href: '#' }, [past]);
      link.addEventListener('click', (event) => {
        event.preventDefault();
        void controller.submit(past); // resubmit verbatim
      });
      historyList.append(el('li', {}, [link]));
    }
  }

  function submitCurrent(): void {
    void controller.submit(input.value).then(() => {
      if (clearOnSubmit.checked) input.value = '';
    });
  }

  submit.addEventListener('click', submitCurrent);
  input.addEventListener('keydown', (event) => {
    if (event.key === 'Enter' && !event.shiftKey) {
      event.preventDefault();
      submitCurrent();
    }
  });

  return controller;
}
