import type { FetchLike } from '../src/api.js';

export interface RecordedRequest {
  method: string;
  url: string;
  body: unknown;
}

export interface Route {
  method: string;
  pattern: RegExp;
  /** nth is how many times this route has matched before (0-based). */
  handler: (
    match: RegExpExecArray,
    body: unknown,
    nth: number,
  ) => { status?: number; json: unknown };
}

export interface ScriptedBackend {
  fetch: FetchLike;
  requests: RecordedRequest[];
}

/** A scripted backend: ordered routes, recorded requests, JSON responses. */
export function scriptedBackend(routes: Route[]): ScriptedBackend {
  const requests: RecordedRequest[] = [];
  const hits = new Map<Route, number>();

  const fetchImpl: FetchLike = async (url, init) => {
    const method = (init?.method ?? 'GET').toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    requests.push({ method, url, body });
    for (const route of routes) {
      if (route.method !== method) continue;
      const match = route.pattern.exec(url);
      if (!match) continue;
      const nth = hits.get(route) ?? 0;
      hits.set(route, nth + 1);
      const { status = 200, json } = route.handler(match, body, nth);
      return new Response(JSON.stringify(json), {
        status,
        headers: { 'Content-Type': 'application/json' },
      });
    }
    return new Response(JSON.stringify({ detail: `no route for ${method} ${url}` }), {
      status: 404,
      headers: { 'Content-Type': 'application/json' },
    });
  };

  return { fetch: fetchImpl, requests };
}

export const jsonRoute = (
  method: string,
  pattern: RegExp,
  json: unknown,
  status = 200,
): Route => ({ method, pattern, handler: () => ({ status, json }) });

/** Route that replays a sequence of bodies, sticking on the last one. */
export const sequenceRoute = (method: string, pattern: RegExp, bodies: unknown[]): Route => ({
  method,
  pattern,
  handler: (_match, _body, nth) => ({ json: bodies[Math.min(nth, bodies.length - 1)] }),
});

export const immediateSleep = () => Promise.resolve();
