// Thin fetch wrapper. The fetch function is injectable so view controllers
// can be exercised without a browser or a server.

import type { ApiRequest } from './state.js';
import type { EntryDetail, QueryResponse } from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(private fetchFn: FetchLike = (...args) => fetch(...args)) {}

  async request<T>(req: ApiRequest): Promise<T> {
    const init: RequestInit =
      req.method === 'POST'
        ? {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(req.body),
          }
        : { method: 'GET' };
    const resp = await this.fetchFn(req.url, init);
    if (!resp.ok) {
      const detail = await resp.text();
      throw new Error(`${req.method} ${req.url} failed (${resp.status}): ${detail}`);
    }
    return (await resp.json()) as T;
  }

  entry(entryId: number): Promise<EntryDetail> {
    return this.request({ method: 'GET', url: `/api/entry/${entryId}` });
  }

  query(text: string): Promise<QueryResponse> {
    return this.request({ method: 'POST', url: '/api/query', body: { text } });
  }
}
