/** Device table: sortable columns, inline rename, per-device command
 * forms generated from the definition's writable exposes. */

import type { ApiClient } from "../api.js";
import { sortRows, type DashboardStore, type SortKey } from "../store.js";
import { showToast } from "../toast.js";
import type { DeviceView, ExposeInfo } from "../types.js";

const COLUMNS: { key: SortKey; label: string }[] = [
  { key: "friendly_name", label: "device" },
  { key: "model_id", label: "model" },
  { key: "last_seen", label: "last seen (sim s)" },
  { key: "last_lqi", label: "lqi" },
];

export class DevicesView {
  private sortKey: SortKey = "friendly_name";
  private ascending = true;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly store: DashboardStore,
    private readonly refresh: () => void,
  ) {}

  render(): void {
    const rows = sortRows(this.store.devices, this.sortKey, this.ascending);
    const table = document.createElement("table");
    table.className = "devices";
    table.appendChild(this.header());
    const body = document.createElement("tbody");
    for (const row of rows) body.appendChild(this.row(row));
    table.appendChild(body);
    this.root.replaceChildren(table);
  }

  private header(): HTMLElement {
    const tr = document.createElement("tr");
    for (const column of COLUMNS) {
      const th = document.createElement("th");
      const marker = this.sortKey === column.key ? (this.ascending ? " ↑" : " ↓") : "";
      th.textContent = column.label + marker;
      th.onclick = () => {
        this.ascending = this.sortKey === column.key ? !this.ascending : true;
        this.sortKey = column.key;
        this.render();
      };
      tr.appendChild(th);
    }
    tr.appendChild(document.createElement("th")).textContent = "state";
    tr.appendChild(document.createElement("th")).textContent = "actions";
    const head = document.createElement("thead");
    head.appendChild(tr);
    return head;
  }

  private row(device: DeviceView): HTMLElement {
    const tr = document.createElement("tr");
    const name = tr.insertCell();
    name.textContent = device.friendly_name;
    tr.insertCell().textContent = device.model_id ?? "?";
    tr.insertCell().textContent = String(Math.round(device.last_seen));
    tr.insertCell().textContent = String(device.last_lqi);
    const state = tr.insertCell();
    state.className = "state";
    state.textContent = Object.entries(device.state)
      .map(([k, v]) => `${k}=${v}`)
      .join("  ") || "—";

    const actions = tr.insertCell();
    const rename = document.createElement("button");
    rename.textContent = "rename";
    rename.onclick = async () => {
      const next = window.prompt(`rename ${device.friendly_name} to:`, device.friendly_name);
      if (!next || next === device.friendly_name) return;
      try {
        await this.api.rename(device.friendly_name, next);
        this.refresh();
      } catch (error) {
        showToast(`rename failed: ${(error as Error).message}`);
      }
    };
    actions.appendChild(rename);
    for (const expose of device.exposes.filter((e) => e.writable)) {
      actions.appendChild(this.commandForm(device, expose));
    }
    return tr;
  }

  private commandForm(device: DeviceView, expose: ExposeInfo): HTMLElement {
    const form = document.createElement("form");
    form.className = "command";
    const input = document.createElement("input");
    if (expose.kind === "numeric") {
      input.type = "number";
      input.step = "0.5";
      if (expose.min !== null) input.min = String(expose.min);
      if (expose.max !== null) input.max = String(expose.max);
      input.placeholder = `${expose.name}${expose.unit ? ` (${expose.unit})` : ""}`;
    } else {
      input.type = "checkbox";
      input.title = expose.name;
    }
    const submit = document.createElement("button");
    submit.textContent = `set ${expose.name}`;
    form.append(input, submit);
    form.onsubmit = async (ev) => {
      ev.preventDefault();
      const value = expose.kind === "numeric" ? Number(input.value) : input.checked;
      try {
        const result = await this.api.setValues(device.friendly_name, { [expose.name]: value });
        showToast(`${device.friendly_name}: ${result.status} (tx ${result.transaction})`);
      } catch (error) {
        showToast(`set failed: ${(error as Error).message}`);
      }
    };
    return form;
  }
}
