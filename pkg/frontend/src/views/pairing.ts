/** Permit-join toggle with a server-authoritative countdown + join log. */

import type { ApiClient } from "../api.js";
import { remainingSeconds, type DashboardStore } from "../store.js";
import { showToast } from "../toast.js";

export class PairingView {
  private defaultDuration = 60;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly store: DashboardStore,
  ) {}

  render(): void {
    const container = document.createElement("div");
    container.className = "pairing";

    const status = document.createElement("p");
    const remaining = remainingSeconds(this.store.pairing, this.store.lastEventT);
    status.textContent = this.store.pairing.permit_join
      ? `pairing OPEN — ~${Math.round(remaining)} sim-seconds left`
      : "pairing closed";
    status.className = this.store.pairing.permit_join ? "open" : "closed";

    const duration = document.createElement("input");
    duration.type = "number";
    duration.min = "1";
    duration.max = "254";
    duration.value = String(this.defaultDuration);

    const toggle = document.createElement("button");
    toggle.textContent = this.store.pairing.permit_join ? "close pairing" : "open pairing";
    toggle.onclick = async () => {
      this.defaultDuration = Number(duration.value) || 60;
      const target = this.store.pairing.permit_join ? 0 : this.defaultDuration;
      try {
        await this.api.permitJoin(target);
        // no optimistic flip: the next bridge_state event re-renders us
      } catch (error) {
        showToast(`permit join failed: ${(error as Error).message}`);
      }
    };

    const log = document.createElement("ul");
    log.className = "joinlog";
    for (const entry of [...this.store.log].slice(-30).reverse()) {
      const li = document.createElement("li");
      li.textContent = `[t=${Math.round(entry.t)}] ${entry.text}`;
      log.appendChild(li);
    }

    container.append(status, duration, toggle, log);
    this.root.replaceChildren(container);
  }
}
