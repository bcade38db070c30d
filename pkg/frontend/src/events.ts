/** Single WS connection with automatic reconnect.
 *
 * On drop the UI shows stale data (onDrop -> banner) until the socket
 * reopens; onOpen the caller re-pulls the REST snapshot before trusting
 * the stream again, so no event gap can fabricate client-side state. */

import type { ApiEvent } from "./types.js";

export interface WsLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
  close(): void;
}

export interface EventSocketHooks {
  onEvent(event: ApiEvent): void;
  onOpen(): void;
  onDrop(): void;
}

export class EventSocket {
  private ws: WsLike | null = null;
  private closed = false;
  reconnectDelayMs = 1000;

  constructor(
    private readonly url: string,
    private readonly hooks: EventSocketHooks,
    private readonly wsFactory: (url: string) => WsLike = (u) => new WebSocket(u) as unknown as WsLike,
    private readonly schedule: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  connect(): void {
    if (this.closed) return;
    const ws = this.wsFactory(this.url);
    this.ws = ws;
    ws.onopen = () => this.hooks.onOpen();
    ws.onmessage = (message) => {
      let event: ApiEvent;
      try {
        event = JSON.parse(message.data) as ApiEvent;
      } catch {
        return; // not ours to crash on
      }
      if (event.type !== "heartbeat") this.hooks.onEvent(event);
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.closed) return;
      this.hooks.onDrop();
      this.schedule(() => this.connect(), this.reconnectDelayMs);
    };
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
