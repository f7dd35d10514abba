// Tab shell: Overview (default), Search, Stats. Views mount once and toggle
// visibility; switching tabs never reloads the page.

import { ApiClient } from './api.js';
import { el } from './dom.js';
import { mountOverview } from './overview.js';
import { mountSearch } from './search.js';
import { mountStats } from './stats.js';

const VIEWS = ['Overview', 'Search', 'Stats'] as const;

function boot(): void {
  const api = new ApiClient();
  const root = document.getElementById('app')!;

  const tabBar = el('nav', { class: 'tab-bar' });
  const panels: Record<string, HTMLElement> = {};
  const buttons: Record<string, HTMLButtonElement> = {};

  for (const name of VIEWS) {
    const button = el('button', { class: 'tab' }, [name]);
    button.addEventListener('click', () => activate(name));
    tabBar.append(button);
    buttons[name] = button;
    panels[name] = el('div', { class: 'view' });
  }
  root.append(tabBar, panels.Overview, panels.Search, panels.Stats);

  function activate(name: (typeof VIEWS)[number]): void {
    for (const view of VIEWS) {
      panels[view].style.display = view === name ? 'flex' : 'none';
      buttons[view].classList.toggle('active', view === name);
    }
  }

  mountOverview(panels.Overview, api);
  mountSearch(panels.Search, api);
  mountStats(panels.Stats, api);
  activate('Overview');
}

document.addEventListener('DOMContentLoaded', boot);
