/**
 * Entry point: the URL hash carries the session id, so a mid-session
 * refresh restores the exact view from server state.
 */

import { ApiClient } from "./api.js";
import { IteratePanel } from "./panel.js";
import { SessionWizard } from "./wizard.js";

export async function mountApp(root: HTMLElement, apiBase = ""): Promise<void> {
  const api = new ApiClient(apiBase);

  async function show(): Promise<void> {
    root.innerHTML = "";
    const sessionId = window.location.hash.replace(/^#/, "");
    if (sessionId) {
      const panel = new IteratePanel(api, sessionId);
      root.appendChild(panel.element);
      try {
        await panel.restore();
      } catch (err) {
        const p = document.createElement("p");
        p.className = "error";
        p.textContent = `could not load session ${sessionId}: ${String(err)}`;
        root.appendChild(p);
      }
    } else {
      const wizard = new SessionWizard(api, (handle) => {
        window.location.hash = handle.id;
      });
      root.appendChild(wizard.element);
    }
  }

  window.addEventListener("hashchange", () => void show());
  await show();
}

declare global {
  interface Window {
    preydesignMount?: typeof mountApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.preydesignMount = mountApp;
  void mountApp(document.getElementById("app")!);
}
