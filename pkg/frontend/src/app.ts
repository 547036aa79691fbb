/** Entry point: wires the three views into the tabbed shell in index.html. */
import { ApiClient } from "./api.js";
import { ChatPanel } from "./chat.js";
import { Dashboard } from "./dashboard.js";
import { ReportView } from "./report.js";

function mustFind(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in index.html`);
  return node;
}

export function boot(baseUrl: string): void {
  const api = new ApiClient(baseUrl);
  new ChatPanel(mustFind("chat"), api);
  const dashboard = new Dashboard(mustFind("dashboard"), api);
  dashboard.start();
  const report = new ReportView(mustFind("report"), api);

  for (const button of document.querySelectorAll<HTMLButtonElement>("[data-tab]")) {
    button.addEventListener("click", () => {
      for (const panel of document.querySelectorAll<HTMLElement>(".tab-panel")) {
        panel.classList.toggle("hidden", panel.id !== button.dataset.tab);
      }
      if (button.dataset.tab === "report") void report.load();
    });
  }
}

declare global {
  interface Window {
    FSM_BASE_URL?: string;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  const base = window.FSM_BASE_URL ?? window.location.origin;
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", () => boot(base));
  } else if (document.getElementById("chat")) {
    boot(base);
  }
}
