/** Paste-a-QR credential checker. */

import { ApiError, type ApiClient } from "../api.js";
import type { CredentialRecord } from "../types.js";

export class CredentialsView {
  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  render(): void {
    const container = document.createElement("div");
    container.className = "credentials";
    const input = document.createElement("textarea");
    input.placeholder = "paste a vendor QR string, e.g. |X|675F...24B5|";
    const button = document.createElement("button");
    button.textContent = "parse";
    const output = document.createElement("pre");
    button.onclick = async () => {
      try {
        const record = await this.api.parseCredential(input.value);
        output.textContent = this.describe(record);
        output.className = "ok";
      } catch (error) {
        const apiError = error as ApiError;
        output.textContent = `parse error: ${apiError.code ?? ""} ${apiError.message}`;
        output.className = "err";
      }
    };
    container.append(input, button, output);
    this.root.replaceChildren(container);
  }

  private describe(record: CredentialRecord): string {
    const lines = [
      `kind:          ${record.kind === "pre_hashed_key" ? "pre-hashed key" : "install code"}`,
      `payload:       ${record.code_hex}`,
      `vendor format: ${record.vendor_format}`,
    ];
    if (record.kind === "install_code") {
      lines.push(`printed CRC:   ${record.crc_hex}  (${record.crc_valid ? "valid" : "INVALID"})`);
    }
    if (record.link_key_hex) lines.push(`link key:      ${record.link_key_hex}`);
    if (record.kind === "pre_hashed_key") {
      lines.push(
        "",
        "note: this vendor prints the derived link key itself instead of",
        "an install code, so it is registered verbatim (no CRC to check).",
      );
    } else if (!record.crc_valid) {
      lines.push("", "note: CRC mismatch - the trust center will refuse this code.");
    }
    return lines.join("\n");
  }
}
