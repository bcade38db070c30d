/** Shapes of the gateway HTTP/WS contract (see ../docs/openapi.json). */

export interface ExposeInfo {
  name: string;
  kind: "numeric" | "binary" | "enum";
  unit: string;
  min: number | null;
  max: number | null;
  writable: boolean;
}

export interface DeviceView {
  ieee_addr: string;
  friendly_name: string;
  model_id: string | null;
  joined_at: number;
  last_seen: number;
  last_lqi: number;
  state: Record<string, number | boolean | string>;
  exposes: ExposeInfo[];
}

export type ApiEventType =
  | "device_joined"
  | "device_left"
  | "state"
  | "bridge_state"
  | "log"
  | "metric"
  | "heartbeat";

export interface ApiEvent {
  type: ApiEventType;
  body: Record<string, unknown>;
  t: number;
}

export interface MetricSample {
  t: number;
  value: number;
}

export interface HourlyBucket {
  hour: number;
  count: number;
}

export interface CredentialRecord {
  kind: "install_code" | "pre_hashed_key";
  code_hex: string;
  vendor_format: string;
  crc_hex?: string;
  crc_valid?: boolean;
  link_key_hex?: string;
}

export interface PairingState {
  permit_join: boolean;
  until: number | null;
}
