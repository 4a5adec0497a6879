/**
 * Session state machine: one browser session plays one role against one run.
 *
 * The controller owns the event cursor and the pending-prompt lifecycle.
 * Prompts are numbered by their appearance ("epoch"), and a submitted epoch
 * can never be submitted again, which gives exactly-once semantics even if
 * the UI double-fires.
 */
import type {
  ApiClient,
  EngineEvent,
  PendingPrompt,
  RunState,
  SubmitResult,
} from './api';

export type Role =
  | { kind: 'consumer' }
  | { kind: 'expert'; agentId: string };

export interface SessionDelta {
  newEvents: EngineEvent[];
  state: RunState;
  /** Prompt addressed to this session's role, or null if the engine is
   * parked on someone else (or not parked at all). */
  activePrompt: PendingPrompt | null;
  promptEpoch: number | null;
}

export class PromptAlreadySubmitted extends Error {}
export class NoActivePrompt extends Error {}

export class SessionController {
  private cursor = 0;
  private events: EngineEvent[] = [];
  private lastState: RunState | null = null;
  private epoch = 0;
  private lastPromptJson: string | null = null;
  private submittedEpochs = new Set<number>();

  constructor(
    private readonly api: ApiClient,
    readonly runId: string,
    readonly role: Role,
  ) {}

  get eventFeed(): readonly EngineEvent[] {
    return this.events;
  }

  get eventCursor(): number {
    return this.cursor;
  }

  get outcome(): string | null {
    return this.lastState?.outcome ?? null;
  }

  /** Fetch state plus any events past the cursor.  The cursor only moves
   * forward; an empty page leaves the feed untouched. */
  async pollOnce(waitSeconds = 0): Promise<SessionDelta> {
    const state = await this.api.getState(this.runId);
    const page = await this.api.getEvents(this.runId, this.cursor, waitSeconds);
    if (page.next < this.cursor) {
      throw new Error(`event cursor moved backwards: ${page.next} < ${this.cursor}`);
    }
    this.cursor = page.next;
    this.events.push(...page.events);
    this.lastState = state;

    const promptJson = state.pending_prompt ? JSON.stringify(state.pending_prompt) : null;
    if (promptJson !== this.lastPromptJson) {
      if (promptJson !== null) this.epoch += 1;
      this.lastPromptJson = promptJson;
    }
    const active = this.promptForRole(state.pending_prompt);
    return {
      newEvents: page.events,
      state,
      activePrompt: active,
      promptEpoch: active ? this.epoch : null,
    };
  }

  private promptForRole(prompt: PendingPrompt | null): PendingPrompt | null {
    if (!prompt) return null;
    if (this.role.kind === 'consumer') {
      return prompt.type === 'consumer-input' ? prompt : null;
    }
    if (prompt.type === 'expert-feedback' || prompt.type === 'workflow-critique') {
      return prompt.agent_id === this.role.agentId ? prompt : null;
    }
    return null;
  }

  canSubmit(epoch: number): boolean {
    return !this.submittedEpochs.has(epoch);
  }

  private markSubmitted(epoch: number): void {
    if (this.submittedEpochs.has(epoch)) {
      throw new PromptAlreadySubmitted(`prompt ${epoch} was already answered`);
    }
    this.submittedEpochs.add(epoch);
  }

  private async guarded(
    epoch: number,
    send: () => Promise<SubmitResult>,
  ): Promise<SubmitResult> {
    this.markSubmitted(epoch);
    const result = await send();
    if (!result.ok) {
      // a rejected submission does not consume the prompt
      this.submittedEpochs.delete(epoch);
    }
    return result;
  }

  async submitConsumerInput(
    epoch: number,
    attributes: Record<string, string>,
    confirm: boolean,
  ): Promise<SubmitResult> {
    if (this.role.kind !== 'consumer') throw new NoActivePrompt('not a consumer session');
    return this.guarded(epoch, () =>
      this.api.postConsumerInput(this.runId, { attributes, confirm }),
    );
  }

  /** Abandonment is not prompt-bound: the consumer may fire it anytime and
   * the engine decides whether the contract gate has closed. */
  async submitAbandon(): Promise<SubmitResult> {
    if (this.role.kind !== 'consumer') throw new NoActivePrompt('not a consumer session');
    return this.api.postConsumerInput(this.runId, { abandon: true });
  }

  async submitFeedback(
    epoch: number,
    verdict: string,
    payload: Record<string, unknown> = {},
  ): Promise<SubmitResult> {
    if (this.role.kind !== 'expert') throw new NoActivePrompt('not an expert session');
    const expertId = this.role.agentId;
    return this.guarded(epoch, () =>
      this.api.postExpertFeedback(this.runId, expertId, verdict, payload),
    );
  }

  async submitCritique(epoch: number, edits: unknown[]): Promise<SubmitResult> {
    if (this.role.kind !== 'expert') throw new NoActivePrompt('not an expert session');
    const expertId = this.role.agentId;
    return this.guarded(epoch, () => this.api.postCritique(this.runId, expertId, edits));
  }
}

export interface LoopOptions {
  /** Called after every successful poll. */
  onDelta: (delta: SessionDelta) => void | Promise<void>;
  /** Transport backoff schedule in milliseconds. */
  backoffMs?: number[];
  pollWaitSeconds?: number;
  sleep?: (ms: number) => Promise<void>;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 4000];

/** Poll until the run reaches an outcome, retrying transport failures with
 * exponential backoff.  Rethrows once the schedule is exhausted. */
export async function runSessionLoop(
  controller: SessionController,
  options: LoopOptions,
): Promise<string> {
  const backoff = options.backoffMs ?? DEFAULT_BACKOFF;
  const sleep =
    options.sleep ?? ((ms: number) => new Promise<void>((r) => setTimeout(r, ms)));
  let failures = 0;
  for (;;) {
    let delta: SessionDelta;
    try {
      delta = await controller.pollOnce(options.pollWaitSeconds ?? 2);
      failures = 0;
    } catch (err) {
      if (failures >= backoff.length) throw err;
      await sleep(backoff[failures] ?? 4000);
      failures += 1;
      continue;
    }
    await options.onDelta(delta);
    if (delta.state.outcome) return delta.state.outcome;
  }
}
