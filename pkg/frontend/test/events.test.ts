import { describe, expect, it, vi } from "vitest";

import { EventSocket, type WsLike } from "../src/events.js";
import type { ApiEvent } from "../src/types.js";

class FakeWs implements WsLike {
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onopen: (() => void) | null = null;
  closedByClient = false;

  close(): void {
    this.closedByClient = true;
    this.onclose?.();
  }

  emit(event: ApiEvent): void {
    this.onmessage?.({ data: JSON.stringify(event) });
  }
}

function makeSocket() {
  const sockets: FakeWs[] = [];
  const pending: Array<() => void> = [];
  const hooks = { onEvent: vi.fn(), onOpen: vi.fn(), onDrop: vi.fn() };
  const socket = new EventSocket(
    "ws://test/api/events",
    hooks,
    () => {
      const ws = new FakeWs();
      sockets.push(ws);
      return ws;
    },
    (fn) => pending.push(fn),
  );
  return { socket, sockets, pending, hooks };
}

describe("EventSocket", () => {
  it("dispatches parsed events and swallows heartbeats", () => {
    const { socket, sockets, hooks } = makeSocket();
    socket.connect();
    sockets[0].onopen?.();
    expect(hooks.onOpen).toHaveBeenCalledOnce();
    sockets[0].emit({ type: "state", body: { friendly_name: "x", state: {} }, t: 1 });
    sockets[0].emit({ type: "heartbeat", body: {}, t: 2 });
    expect(hooks.onEvent).toHaveBeenCalledOnce();
    expect(hooks.onEvent.mock.calls[0][0].type).toBe("state");
  });

  it("ignores malformed frames", () => {
    const { socket, sockets, hooks } = makeSocket();
    socket.connect();
    sockets[0].onmessage?.({ data: "{nope" });
    expect(hooks.onEvent).not.toHaveBeenCalled();
  });

  it("reconnects after a drop and reports staleness once", () => {
    const { socket, sockets, pending, hooks } = makeSocket();
    socket.connect();
    sockets[0].onclose?.();
    expect(hooks.onDrop).toHaveBeenCalledOnce();
    expect(pending).toHaveLength(1);
    pending.shift()!(); // the scheduled reconnect
    expect(sockets).toHaveLength(2);
    sockets[1].onopen?.();
    expect(hooks.onOpen).toHaveBeenCalledOnce(); // fresh snapshot pull happens here
  });

  it("a deliberate close does not reconnect", () => {
    const { socket, sockets, pending, hooks } = makeSocket();
    socket.connect();
    socket.close();
    expect(sockets[0].closedByClient).toBe(true);
    expect(pending).toHaveLength(0);
    expect(hooks.onDrop).not.toHaveBeenCalled();
  });
});
