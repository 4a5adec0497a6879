/**
 * Browser entry point.  Query parameters select the run and role:
 *
 *   console.html?api=http://127.0.0.1:8000&run=run-1&role=consumer
 *   console.html?api=http://127.0.0.1:8000&run=run-1&role=expert&agent=doc-expert
 */
import { HttpApiClient } from './api';
import { runSessionLoop, SessionController, type Role } from './session';
import { createConsoleView } from './ui';

export function bootstrap(root: HTMLElement, search: string): Promise<string> {
  const params = new URLSearchParams(search);
  const api = new HttpApiClient(params.get('api') ?? 'http://127.0.0.1:8000');
  const runId = params.get('run');
  if (!runId) throw new Error('missing ?run= parameter');
  const roleName = params.get('role') ?? 'consumer';
  const role: Role =
    roleName === 'consumer'
      ? { kind: 'consumer' }
      : { kind: 'expert', agentId: params.get('agent') ?? '' };
  if (role.kind === 'expert' && !role.agentId) {
    throw new Error('expert role needs an ?agent= parameter');
  }
  const controller = new SessionController(api, runId, role);
  const view = createConsoleView(root, controller);
  return runSessionLoop(controller, { onDelta: (delta) => view.update(delta) });
}

declare global {
  interface Window {
    agoraConsole?: typeof bootstrap;
  }
}

if (typeof window !== 'undefined') {
  window.agoraConsole = bootstrap;
}
