/** Console wiring: form submission, k slider, preview modal, session history.
 * A request token discards superseded responses so only the latest query
 * renders. */

import { ApiClient, NetworkError, NotFoundError, ServiceUnavailableError } from "./api.js";
import {
  renderError,
  renderHistory,
  renderResults,
  renderTableModal,
  renderTableNotFound,
} from "./render.js";

export interface ConsoleElements {
  form: HTMLFormElement;
  questionInput: HTMLInputElement;
  kSlider: HTMLInputElement;
  kLabel: HTMLElement;
  results: HTMLElement;
  latency: HTMLElement;
  modal: HTMLElement;
  history: HTMLElement;
}

export function setupConsole(root: ConsoleElements, client: ApiClient): { submit: (q: string) => Promise<void> } {
  const sessionHistory: string[] = [];
  let requestToken = 0;

  async function submit(question: string): Promise<void> {
    const trimmed = question.trim();
    if (!trimmed) return;
    const token = ++requestToken;
    const k = Number(root.kSlider.value);
    const started = performance.now();
    try {
      const response = await client.query(trimmed, k);
      if (token !== requestToken) return; // superseded by a newer query
      renderResults(root.results, response.results);
      root.latency.textContent = `${(performance.now() - started).toFixed(0)} ms`;
      if (sessionHistory[0] !== trimmed) {
        sessionHistory.unshift(trimmed);
        renderHistory(root.history, sessionHistory, (q) => {
          root.questionInput.value = q;
          void submit(q);
        });
      }
    } catch (err) {
      if (token !== requestToken) return;
      root.latency.textContent = "";
      if (err instanceof ServiceUnavailableError) {
        renderError(root.results, "index-loading", err.message);
      } else if (err instanceof NetworkError) {
        renderError(root.results, "network", err.message, () => void submit(trimmed));
      } else {
        renderError(root.results, "network", String(err));
      }
    }
  }

  root.form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit(root.questionInput.value);
  });

  root.kSlider.addEventListener("input", () => {
    root.kLabel.textContent = root.kSlider.value;
    if (root.questionInput.value.trim()) void submit(root.questionInput.value);
  });

  root.results.addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    if (!target.classList.contains("preview-button")) return;
    const tableId = target.dataset.tableId;
    if (!tableId) return;
    try {
      const table = await client.table(tableId);
      renderTableModal(root.modal, table);
    } catch (err) {
      if (err instanceof NotFoundError) {
        renderTableNotFound(root.modal, tableId);
      } else {
        renderError(root.modal, "network", String(err));
      }
    }
  });

  return { submit };
}

export function bootstrap(): void {
  const byId = (id: string) => {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node;
  };
  setupConsole(
    {
      form: byId("query-form") as HTMLFormElement,
      questionInput: byId("question") as HTMLInputElement,
      kSlider: byId("k-slider") as HTMLInputElement,
      kLabel: byId("k-label"),
      results: byId("results"),
      latency: byId("latency"),
      modal: byId("modal"),
      history: byId("history"),
    },
    new ApiClient(""),
  );
}

if (typeof document !== "undefined" && document.getElementById("query-form")) {
  bootstrap();
}
