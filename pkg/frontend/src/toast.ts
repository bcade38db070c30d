/** Non-blocking error toasts and the stale-stream banner. */

export function showToast(message: string): void {
  const host = document.getElementById("toasts");
  if (!host) return;
  const node = document.createElement("div");
  node.className = "toast";
  node.textContent = message;
  host.appendChild(node);
  setTimeout(() => node.remove(), 6000);
}

export function setStaleBanner(visible: boolean): void {
  const banner = document.getElementById("stale-banner");
  if (banner) banner.hidden = !visible;
}
