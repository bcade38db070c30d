/** Wires the store, API client, event stream, and the four views. */

import { ApiClient } from "./api.js";
import { EventSocket } from "./events.js";
import { DashboardStore } from "./store.js";
import { setStaleBanner, showToast } from "./toast.js";
import { CredentialsView } from "./views/credentials.js";
import { DevicesView } from "./views/devices.js";
import { MetricsView } from "./views/metrics.js";
import { PairingView } from "./views/pairing.js";

const TABS = ["devices", "pairing", "metrics", "credentials"] as const;
type Tab = (typeof TABS)[number];

function wsUrl(): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/api/events`;
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const content = document.getElementById("content")!;

  let active: Tab = "devices";
  let metricsView: MetricsView;

  const store = new DashboardStore({
    onDevicesChanged: () => active === "devices" && devicesView.render(),
    onPairingChanged: () => active === "pairing" && pairingView.render(),
    onMetric: (series, t, value) => {
      metricsView.onMetric(series, t, value);
      if (active === "metrics") metricsView.render();
    },
    onLog: () => active === "pairing" && pairingView.render(),
    refreshRequested: () => void refreshDevices(),
  });

  const devicesView = new DevicesView(content, api, store, () => void refreshDevices());
  const pairingView = new PairingView(content, api, store);
  metricsView = new MetricsView(content, api, store);
  const credentialsView = new CredentialsView(content, api);

  async function refreshDevices(): Promise<void> {
    try {
      store.snapshot(await api.devices());
    } catch (error) {
      showToast(`device list failed: ${(error as Error).message}`);
    }
  }

  async function show(tab: Tab): Promise<void> {
    active = tab;
    for (const t of TABS) {
      document.getElementById(`tab-${t}`)?.classList.toggle("active", t === tab);
    }
    if (tab === "devices") devicesView.render();
    if (tab === "pairing") pairingView.render();
    if (tab === "metrics") {
      await metricsView.load();
      metricsView.render();
    }
    if (tab === "credentials") credentialsView.render();
  }

  for (const tab of TABS) {
    document.getElementById(`tab-${tab}`)?.addEventListener("click", () => void show(tab));
  }

  const socket = new EventSocket(wsUrl(), {
    onEvent: (event) => store.applyEvent(event),
    onOpen: () => {
      setStaleBanner(false);
      void refreshDevices(); // replay snapshot, then resume the stream
    },
    onDrop: () => setStaleBanner(true),
  });

  await refreshDevices();
  socket.connect();
  await show("devices");
}

void boot();
