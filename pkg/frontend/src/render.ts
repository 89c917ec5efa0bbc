/** DOM rendering for the search console. Pure functions over containers:
 * result ordering on screen always equals payload ordering — the console
 * never re-ranks. */

import type { ResultView, TableView } from "./api.js";

export const PREVIEW_ROW_LIMIT = 20;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Render result cards in exactly the order given by the payload. */
export function renderResults(container: HTMLElement, results: ResultView[]): void {
  container.replaceChildren();
  if (results.length === 0) {
    container.append(el("p", "empty-state", "No tables matched this question."));
    return;
  }
  for (const result of results) {
    const card = el("article", "result-card");
    card.dataset.tableId = result.table_id;
    const header = el("header", "result-header");
    header.append(el("h3", "result-title", result.title));
    header.append(el("span", "result-score", result.score.toFixed(4)));
    card.append(header);
    const snippets = el("ul", "triple-snippets");
    for (const triple of result.triples) {
      const item = el("li", "triple-snippet", triple.text);
      item.dataset.score = triple.score.toFixed(4);
      snippets.append(item);
    }
    card.append(snippets);
    const preview = el("button", "preview-button", "Preview table");
    preview.dataset.tableId = result.table_id;
    card.append(preview);
    container.append(card);
  }
}

export type ErrorState = "index-loading" | "not-found" | "network";

/** Replace the container with a visible error state; never leaves stale cards. */
export function renderError(
  container: HTMLElement,
  state: ErrorState,
  detail: string,
  onRetry?: () => void,
): void {
  container.replaceChildren();
  const banner = el("div", `error-banner error-${state}`);
  banner.setAttribute("role", "alert");
  const messages: Record<ErrorState, string> = {
    "index-loading": "Index loading — the service is not ready yet.",
    "not-found": "Not found.",
    network: "Could not reach the search service.",
  };
  banner.append(el("p", "error-message", messages[state]));
  if (detail) banner.append(el("p", "error-detail", detail));
  if (state === "network" && onRetry) {
    const retry = el("button", "retry-button", "Retry");
    retry.addEventListener("click", onRetry);
    banner.append(retry);
  }
  container.append(banner);
}

/** Table preview modal: header row plus at most PREVIEW_ROW_LIMIT data rows. */
export function renderTableModal(container: HTMLElement, table: TableView): void {
  container.replaceChildren();
  const modal = el("div", "table-modal");
  modal.append(el("h2", "modal-title", table.title));
  const grid = el("table", "preview-grid");
  const head = el("thead");
  const headRow = el("tr");
  for (const column of table.columns) headRow.append(el("th", "", column.name));
  head.append(headRow);
  grid.append(head);
  const body = el("tbody");
  for (const row of table.rows.slice(0, PREVIEW_ROW_LIMIT)) {
    const tr = el("tr");
    for (const cell of row) tr.append(el("td", "", cell));
    body.append(tr);
  }
  grid.append(body);
  modal.append(grid);
  if (table.rows.length > PREVIEW_ROW_LIMIT) {
    modal.append(
      el("p", "truncation-note", `Showing ${PREVIEW_ROW_LIMIT} of ${table.rows.length} rows.`),
    );
  }
  const close = el("button", "close-button", "Close");
  close.addEventListener("click", () => container.replaceChildren());
  modal.append(close);
  container.append(modal);
}

/** Inline not-found message inside the modal container. */
export function renderTableNotFound(container: HTMLElement, tableId: string): void {
  container.replaceChildren();
  const note = el("div", "table-not-found");
  note.setAttribute("role", "alert");
  note.append(el("p", "", `Table "${tableId}" was not found.`));
  container.append(note);
}

/** Session-only question history, newest first. */
export function renderHistory(
  container: HTMLElement,
  questions: string[],
  onPick: (question: string) => void,
): void {
  container.replaceChildren();
  for (const question of questions) {
    const item = el("li", "history-item", question);
    item.addEventListener("click", () => onPick(question));
    container.append(item);
  }
}
