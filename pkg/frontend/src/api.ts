/**
 * Typed client for the agora control API.
 *
 * Every method maps one-to-one onto a harness endpoint; the console speaks
 * no other protocol.  Engine-side rejections (HTTP 409) are returned as
 * values so the UI can surface the reason verbatim instead of throwing.
 */

export interface EngineEvent {
  tick: number;
  event: string;
  envelope?: Record<string, unknown>;
  detail?: Record<string, unknown>;
}

export interface PendingPrompt {
  type: 'consumer-input' | 'expert-feedback' | 'workflow-critique';
  agent_id?: string;
  missing?: string[];
  round?: number;
}

export interface RunState {
  run_id: string;
  phase: string | null;
  outcome: string | null;
  pending_prompt: PendingPrompt | null;
  event_count: number;
}

export interface EventPage {
  since: number;
  events: EngineEvent[];
  next: number;
}

/** 200 -> { ok: true }; 409 -> { ok: false, reason } straight from the engine. */
export type SubmitResult = { ok: true } | { ok: false; reason: string };

export interface ApiClient {
  createRun(scenario: unknown, mode: 'scripted' | 'interactive'): Promise<string>;
  getState(runId: string): Promise<RunState>;
  getEvents(runId: string, since: number, waitSeconds?: number): Promise<EventPage>;
  postConsumerInput(runId: string, body: Record<string, unknown>): Promise<SubmitResult>;
  postExpertFeedback(
    runId: string,
    expertId: string,
    verdict: string,
    payload?: Record<string, unknown>,
  ): Promise<SubmitResult>;
  postCritique(runId: string, expertId: string, edits: unknown[]): Promise<SubmitResult>;
  getRecord(runId: string): Promise<string>;
}

export class HttpApiClient implements ApiClient {
  constructor(private readonly baseUrl: string) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await fetch(`${this.baseUrl}${path}`, init);
    // 409 carries an engine reason and is handled by the caller
    if (!resp.ok && resp.status !== 409) {
      throw new Error(`${init?.method ?? 'GET'} ${path} failed: ${resp.status}`);
    }
    return resp;
  }

  private async submit(path: string, body: unknown): Promise<SubmitResult> {
    const resp = await this.request(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (resp.status === 409) {
      const payload = (await resp.json()) as { reason?: string };
      return { ok: false, reason: payload.reason ?? 'Conflict' };
    }
    return { ok: true };
  }

  async createRun(scenario: unknown, mode: 'scripted' | 'interactive'): Promise<string> {
    const resp = await this.request('/runs', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ scenario, mode }),
    });
    const payload = (await resp.json()) as { run_id: string };
    return payload.run_id;
  }

  async getState(runId: string): Promise<RunState> {
    const resp = await this.request(`/runs/${runId}/state`);
    return (await resp.json()) as RunState;
  }

  async getEvents(runId: string, since: number, waitSeconds = 0): Promise<EventPage> {
    const query = waitSeconds > 0 ? `?since=${since}&wait=${waitSeconds}` : `?since=${since}`;
    const resp = await this.request(`/runs/${runId}/events${query}`);
    return (await resp.json()) as EventPage;
  }

  async postConsumerInput(runId: string, body: Record<string, unknown>): Promise<SubmitResult> {
    return this.submit(`/runs/${runId}/consumer-input`, body);
  }

  async postExpertFeedback(
    runId: string,
    expertId: string,
    verdict: string,
    payload: Record<string, unknown> = {},
  ): Promise<SubmitResult> {
    return this.submit(`/runs/${runId}/expert-feedback`, {
      expert_id: expertId,
      verdict,
      payload,
    });
  }

  async postCritique(runId: string, expertId: string, edits: unknown[]): Promise<SubmitResult> {
    return this.submit(`/runs/${runId}/workflow-critique`, {
      expert_id: expertId,
      edits,
    });
  }

  async getRecord(runId: string): Promise<string> {
    const resp = await this.request(`/runs/${runId}/record`);
    const payload = (await resp.json()) as { jsonl: string };
    return payload.jsonl;
  }
}
