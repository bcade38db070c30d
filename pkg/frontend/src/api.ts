/** Thin REST client. Every UI action maps to exactly one call here;
 * `callCount` exists so tests can assert that (no optimistic UI, no
 * hidden retries). */

import type { CredentialRecord, DeviceView, HourlyBucket, MetricSample } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    reason: string,
  ) {
    super(reason);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  readonly callCount: Record<string, number> = {};

  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private count(key: string): void {
    this.callCount[key] = (this.callCount[key] ?? 0) + 1;
  }

  private async request<T>(key: string, path: string, init?: RequestInit): Promise<T> {
    this.count(key);
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) {
      let code = `HTTP${response.status}`;
      let reason = response.statusText;
      try {
        const body = await response.json();
        const detail = body?.detail ?? body;
        if (detail?.error) code = String(detail.error);
        if (detail?.reason) reason = String(detail.reason);
        else if (detail?.errors) reason = JSON.stringify(detail.errors);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, code, reason);
    }
    if (response.status === 204) return undefined as T;
    return (await response.json()) as T;
  }

  devices(): Promise<DeviceView[]> {
    return this.request("GET /api/devices", "/api/devices");
  }

  permitJoin(durationS: number): Promise<void> {
    return this.request("POST /api/permit_join", "/api/permit_join", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ duration_s: durationS }),
    });
  }

  setValues(name: string, values: Record<string, unknown>): Promise<{ transaction: number; status: string }> {
    return this.request("POST set", `/api/devices/${encodeURIComponent(name)}/set`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(values),
    });
  }

  rename(name: string, newName: string): Promise<void> {
    return this.request("POST rename", `/api/devices/${encodeURIComponent(name)}/rename`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ new: newName }),
    });
  }

  metrics(series: string, fromT?: number, toT?: number): Promise<MetricSample[]> {
    const params = new URLSearchParams();
    if (fromT !== undefined) params.set("from", String(fromT));
    if (toT !== undefined) params.set("to", String(toT));
    const query = params.size ? `?${params}` : "";
    return this.request("GET metrics", `/api/metrics/${encodeURIComponent(series)}${query}`);
  }

  metricsHourly(series: string): Promise<HourlyBucket[]> {
    return this.request("GET metrics hourly", `/api/metrics/${encodeURIComponent(series)}/hourly`);
  }

  parseCredential(qr: string): Promise<CredentialRecord> {
    const params = new URLSearchParams({ qr });
    return this.request("GET credentials", `/api/credentials/parse?${params}`);
  }
}
