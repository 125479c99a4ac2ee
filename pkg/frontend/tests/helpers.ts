import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { JSDOM } from "jsdom";

const here = dirname(fileURLToPath(import.meta.url));

export function fixturePath(name: string): string {
  return join(here, "fixtures", name);
}

export function loadFixture(name: string): unknown {
  return JSON.parse(readFileSync(fixturePath(name), "utf8"));
}

export interface TestDom {
  dom: JSDOM;
  document: Document;
  root: HTMLElement;
}

export function makeDom(): TestDom {
  const dom = new JSDOM('<!doctype html><html><body><div id="app"></div></body></html>');
  const document = dom.window.document;
  return { dom, document, root: document.getElementById("app") as HTMLElement };
}

export interface RecordedRequest {
  method: string;
  path: string;
  url: string;
  headers: Record<string, string>;
  body: unknown;
}

export type RouteResult = { status?: number; body?: unknown } | Error;
export type Route = RouteResult | ((req: RecordedRequest) => RouteResult);

/**
 * Minimal fetch stand-in keyed by "METHOD /path" (query string ignored).
 * Routes returning an Error reject the fetch promise, which is how a dead
 * network presents to the client.
 */
export function fakeFetch(routes: Record<string, Route>) {
  const calls: RecordedRequest[] = [];
  const impl = async (url: string | URL, init?: RequestInit): Promise<Response> => {
    const text = String(url);
    const parsed = new URL(text, "http://fake.test");
    const req: RecordedRequest = {
      method: init?.method ?? "GET",
      path: parsed.pathname,
      url: text,
      headers: { ...((init?.headers as Record<string, string>) ?? {}) },
      body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
    };
    calls.push(req);
    const route = routes[`${req.method} ${req.path}`];
    if (route === undefined) {
      return new Response(JSON.stringify({ error: `no route for ${req.method} ${req.path}` }), {
        status: 404,
        headers: { "content-type": "application/json" },
      });
    }
    const result = typeof route === "function" ? route(req) : route;
    if (result instanceof Error) throw result;
    return new Response(JSON.stringify(result.body ?? {}), {
      status: result.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
  return { impl, calls };
}

/** Resolves once pending microtasks (queued promise callbacks) have run. */
export function flushAsync(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
