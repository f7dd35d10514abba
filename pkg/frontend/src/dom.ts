// Small DOM helpers; all rendering goes through textContent (no innerHTML
// with data in it, so hostile field values cannot script the page).

import type { TableModel } from './tables.js';

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    if (name === 'class') node.className = value;
    else node.setAttribute(name, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export interface TableHooks {
  onHeaderClick?: (column: string) => void;
  onEntryClick?: (entryId: number) => void;
}

export function renderTable(model: TableModel, hooks: TableHooks = {}): HTMLElement {
  if (model.rows.length === 0) {
    return el('p', { class: 'empty-state' }, ['No entries match the current filters.']);
  }
  const headRow = el('tr');
  for (const column of model.columns) {
    const th = el('th', {}, [column]);
    if (hooks.onHeaderClick) {
      th.classList.add('sortable');
      th.addEventListener('click', () => hooks.onHeaderClick!(column));
    }
    headRow.append(th);
  }
  const body = el('tbody');
  model.rows.forEach((row, rowIndex) => {
    const tr = el('tr');
    row.forEach((cell, cellIndex) => {
      const td = el('td');
      if (cellIndex === 0 && hooks.onEntryClick && model.entryIds) {
        const entryId = model.entryIds[rowIndex];
        const link = el('a', { href: '#', class: 'entry-link' }, [cell]);
        link.addEventListener('click', (event) => {
          event.preventDefault();
          hooks.onEntryClick!(entryId);
        });
        td.append(link);
      } else {
        td.append(cell);
      }
      tr.append(td);
    });
    body.append(tr);
  });
  return el('table', { class: 'data-table' }, [el('thead', {}, [headRow]), body]);
}

export function showPopup(title: string, content: HTMLElement): void {
  const close = el('button', { class: 'popup-close' }, ['Close']);
  const box = el('div', { class: 'popup-box' }, [
    el('div', { class: 'popup-head' }, [el('strong', {}, [title]), close]),
    content,
  ]);
  const backdrop = el('div', { class: 'popup-backdrop' }, [box]);
  const dismiss = () => backdrop.remove();
  close.addEventListener('click', dismiss);
  backdrop.addEventListener('click', (event) => {
    if (event.target === backdrop) dismiss();
  });
  document.body.append(backdrop);
}
