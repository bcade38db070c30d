/** Messages-per-hour bars and per-device link-quality lines.
 *
 * History comes from GET /api/metrics (bucketing is server-side so there
 * is exactly one implementation of it); WS metric events append live. */

import type { ApiClient } from "../api.js";
import { appendHourly, svgBarChart, svgLineChart, type LineSeries } from "../charts.js";
import type { DashboardStore } from "../store.js";
import { showToast } from "../toast.js";
import type { HourlyBucket } from "../types.js";

export class MetricsView {
  private buckets: HourlyBucket[] = [];
  private lqi = new Map<string, LineSeries>();
  private loaded = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly store: DashboardStore,
  ) {}

  /** Pull history once per page load; afterwards WS events keep us live. */
  async load(): Promise<void> {
    try {
      this.buckets = await this.api.metricsHourly("mqtt.messages");
      this.lqi.clear();
      for (const device of this.store.devices) {
        try {
          const samples = await this.api.metrics(`lqi.${device.friendly_name}`);
          this.lqi.set(device.friendly_name, { label: device.friendly_name, samples });
        } catch {
          // a device that has not reported yet has no series: fine
        }
      }
      this.loaded = true;
    } catch (error) {
      showToast(`metrics load failed: ${(error as Error).message}`);
    }
  }

  /** Live append from a WS metric event. */
  onMetric(series: string, t: number, value: number): void {
    if (!this.loaded) return;
    if (series === "mqtt.messages") {
      appendHourly(this.buckets, t);
      return;
    }
    if (series.startsWith("lqi.")) {
      const name = series.slice(4);
      const entry = this.lqi.get(name) ?? { label: name, samples: [] };
      entry.samples.push({ t, value });
      if (entry.samples.length > 2000) entry.samples.shift();
      this.lqi.set(name, entry);
    }
  }

  render(): void {
    const container = document.createElement("div");
    container.className = "metrics";
    const messagesHeader = document.createElement("h3");
    messagesHeader.textContent = "MQTT messages per hour";
    const bars = document.createElement("div");
    bars.innerHTML = svgBarChart(this.buckets);
    const lqiHeader = document.createElement("h3");
    lqiHeader.textContent = "Sensor link quality";
    const lines = document.createElement("div");
    lines.innerHTML = svgLineChart([...this.lqi.values()]);
    container.append(messagesHeader, bars, lqiHeader, lines);
    this.root.replaceChildren(container);
  }
}
