/** Fetch stubbing for view tests: routes keyed by "METHOD url". */

export interface RecordedCall {
  method: string;
  url: string;
  body: unknown;
}

export interface Reply {
  status?: number;
  body: unknown;
}

export type Handler = Reply | Reply[] | ((call: RecordedCall) => Reply | Promise<Reply>);

export interface FetchMock {
  calls: RecordedCall[];
  set(method: string, url: string, handler: Handler): void;
  restore(): void;
}

export function installFetchMock(routes: Record<string, Handler> = {}): FetchMock {
  const table = new Map<string, Handler>(Object.entries(routes));
  const calls: RecordedCall[] = [];
  const original = globalThis.fetch;

  const mock = async (input: unknown, init?: { method?: string; body?: unknown }) => {
    const url = String(input);
    const method = (init?.method ?? "GET").toUpperCase();
    let body: unknown = null;
    if (typeof init?.body === "string" && init.body.length > 0) {
      body = JSON.parse(init.body);
    }
    const call: RecordedCall = { method, url, body };
    calls.push(call);
    const key = `${method} ${url}`;
    const handler = table.get(key);
    if (handler === undefined) {
      throw new Error(`unmocked request: ${key}`);
    }
    let reply: Reply;
    if (typeof handler === "function") {
      reply = await handler(call);
    } else if (Array.isArray(handler)) {
      const next = handler.shift();
      if (next === undefined) {
        throw new Error(`route exhausted: ${key}`);
      }
      reply = next;
    } else {
      reply = handler;
    }
    const status = reply.status ?? 200;
    // minimal Response surface: the client only touches ok/status/json()
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => reply.body,
    };
  };

  globalThis.fetch = mock as unknown as typeof fetch;
  return {
    calls,
    set(method: string, url: string, handler: Handler): void {
      table.set(`${method.toUpperCase()} ${url}`, handler);
    },
    restore(): void {
      globalThis.fetch = original;
    },
  };
}

/** Let queued microtasks and zero-delay timers run. */
export async function flush(times = 2): Promise<void> {
  for (let i = 0; i < times; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}
