// Search-page submission history: most-recent-first, unique, capped at 10.
// Resubmitting an existing query moves it to the top rather than duplicating.

export const HISTORY_LIMIT = 10;

export function pushHistory(history: readonly string[], query: string): string[] {
  const withoutQuery = history.filter((q) => q !== query);
  return [query, ...withoutQuery].slice(0, HISTORY_LIMIT);
}
