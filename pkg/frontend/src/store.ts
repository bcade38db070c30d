/** Server-authoritative view state.
 *
 * Rows exactly mirror GET /api/devices merged with WS state events;
 * nothing here invents client-side truth. Joins and removals trigger a
 * full REST refresh instead of synthesizing rows from event bodies. */

import type { ApiEvent, DeviceView, PairingState } from "./types.js";

export interface LogEntry {
  t: number;
  text: string;
}

export interface StoreHooks {
  onDevicesChanged(): void;
  onPairingChanged(): void;
  onMetric(series: string, t: number, value: number): void;
  onLog(entry: LogEntry): void;
  refreshRequested(): void;
}

export type SortKey = "friendly_name" | "model_id" | "last_seen" | "last_lqi";

export function sortRows(rows: DeviceView[], key: SortKey, ascending: boolean): DeviceView[] {
  const sorted = [...rows].sort((a, b) => {
    const va = a[key] ?? "";
    const vb = b[key] ?? "";
    if (va < vb) return -1;
    if (va > vb) return 1;
    return a.friendly_name < b.friendly_name ? -1 : 1;
  });
  return ascending ? sorted : sorted.reverse();
}

/** Seconds of pairing window left as of the latest server event. */
export function remainingSeconds(pairing: PairingState, lastEventT: number): number {
  if (!pairing.permit_join || pairing.until === null) return 0;
  return Math.max(0, pairing.until - lastEventT);
}

export class DashboardStore {
  devices: DeviceView[] = [];
  pairing: PairingState = { permit_join: false, until: null };
  lastEventT = 0;
  log: LogEntry[] = [];
  logLimit = 200;

  constructor(private readonly hooks: StoreHooks) {}

  /** Replace everything with the REST snapshot (page load, WS reopen). */
  snapshot(devices: DeviceView[]): void {
    this.devices = devices.map((d) => ({ ...d, state: { ...d.state } }));
    this.hooks.onDevicesChanged();
  }

  applyEvent(event: ApiEvent): void {
    this.lastEventT = Math.max(this.lastEventT, event.t);
    switch (event.type) {
      case "state": {
        const name = event.body.friendly_name as string;
        const state = event.body.state as Record<string, number | boolean | string>;
        const row = this.devices.find((d) => d.friendly_name === name);
        if (!row) {
          this.hooks.refreshRequested(); // a device we do not know: resync
          return;
        }
        row.state = { ...state };
        if (typeof state.linkquality === "number") row.last_lqi = state.linkquality;
        row.last_seen = event.t;
        this.hooks.onDevicesChanged();
        return;
      }
      case "device_joined":
      case "device_left":
        this.pushLog(event.t, `${event.type}: ${event.body.friendly_name ?? event.body.ieee_addr ?? ""}`);
        this.hooks.refreshRequested();
        return;
      case "bridge_state": {
        this.pairing = {
          permit_join: Boolean(event.body.permit_join),
          until: (event.body.until as number | null) ?? null,
        };
        this.hooks.onPairingChanged();
        return;
      }
      case "metric": {
        const body = event.body as { series: string; t: number; value: number };
        this.hooks.onMetric(body.series, body.t, body.value);
        return;
      }
      case "log":
        this.pushLog(event.t, JSON.stringify(event.body));
        return;
      case "heartbeat":
        return;
    }
  }

  private pushLog(t: number, text: string): void {
    this.log.push({ t, text });
    if (this.log.length > this.logLimit) this.log.shift();
    this.hooks.onLog({ t, text });
  }
}
