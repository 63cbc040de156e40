/** Shared test helpers: a route-table fetch stub for unit tests. */

export type RouteTable = Record<string, unknown | ((init?: RequestInit) => unknown)>;

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

export function installFetchStub(routes: RouteTable): RecordedCall[] {
  const calls: RecordedCall[] = [];
  globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    calls.push({ url: path, method, body: init?.body ? JSON.parse(String(init.body)) : undefined });
    const key = `${method} ${path}`;
    const exact = routes[key] ?? routes[path];
    if (exact === undefined) {
      return new Response(JSON.stringify({ detail: `no stub for ${key}` }), { status: 404 });
    }
    const value = typeof exact === "function" ? (exact as (i?: RequestInit) => unknown)(init) : exact;
    if (value instanceof Response) return value;
    return new Response(JSON.stringify(value), {
      status: 200,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return calls;
}

export function mount(): HTMLElement {
  document.body.innerHTML = "";
  const root = document.createElement("div");
  document.body.append(root);
  return root;
}

export async function settle(): Promise<void> {
  // let queued microtasks from async mounts finish
  for (let i = 0; i < 10; i++) await Promise.resolve();
  await new Promise((resolve) => setTimeout(resolve, 0));
}
