import { describe, expect, it } from 'vitest';

import {
  PromptAlreadySubmitted,
  runSessionLoop,
  SessionController,
} from '../src/session';
import { MockApi } from './mock';

function consumerSession(api: MockApi): SessionController {
  return new SessionController(api, 'run-1', { kind: 'consumer' });
}

function expertSession(api: MockApi, agentId = 'doc-expert'): SessionController {
  return new SessionController(api, 'run-1', { kind: 'expert', agentId });
}

describe('cursor and feed', () => {
  it('advances the cursor monotonically and appends events once', async () => {
    const api = new MockApi();
    const session = consumerSession(api);
    api.push({ tick: 0, event: 'phase', detail: { phase: 'identification' } });
    api.push({ tick: 1, event: 'deliver' });
    const first = await session.pollOnce();
    expect(first.newEvents).toHaveLength(2);
    expect(session.eventCursor).toBe(2);
    const second = await session.pollOnce();
    expect(second.newEvents).toHaveLength(0);
    expect(session.eventFeed).toHaveLength(2);
  });

  it('rejects a cursor that moves backwards', async () => {
    const api = new MockApi();
    api.getEvents = async () => ({ since: 5, events: [], next: -1 });
    await expect(consumerSession(api).pollOnce()).rejects.toThrow('cursor');
  });
});

describe('prompt routing', () => {
  it('shows consumer prompts only to the consumer', async () => {
    const api = new MockApi();
    api.prompt = { type: 'consumer-input', missing: ['age', 'location'] };
    const consumer = await consumerSession(api).pollOnce();
    expect(consumer.activePrompt?.missing).toEqual(['age', 'location']);
    const expert = await expertSession(api).pollOnce();
    expect(expert.activePrompt).toBeNull();
  });

  it('routes expert prompts by agent id', async () => {
    const api = new MockApi();
    api.prompt = { type: 'expert-feedback', agent_id: 'doc-expert', round: 0 };
    expect((await expertSession(api, 'doc-expert').pollOnce()).activePrompt).not.toBeNull();
    expect((await expertSession(api, 'gp-expert').pollOnce()).activePrompt).toBeNull();
  });
});

describe('exactly-once submission', () => {
  it('refuses to submit the same prompt epoch twice', async () => {
    const api = new MockApi();
    api.prompt = { type: 'consumer-input', missing: ['age'] };
    const session = consumerSession(api);
    const delta = await session.pollOnce();
    const epoch = delta.promptEpoch!;
    expect(session.canSubmit(epoch)).toBe(true);
    await session.submitConsumerInput(epoch, { age: '54' }, true);
    expect(session.canSubmit(epoch)).toBe(false);
    await expect(session.submitConsumerInput(epoch, { age: '54' }, true)).rejects.toThrow(
      PromptAlreadySubmitted,
    );
    expect(api.submissions).toHaveLength(1);
  });

  it('a rejected submission leaves the prompt answerable', async () => {
    const api = new MockApi();
    api.prompt = { type: 'expert-feedback', agent_id: 'doc-expert', round: 0 };
    api.rejectNext = 'NoFeedbackPromptPending';
    const session = expertSession(api);
    const delta = await session.pollOnce();
    const result = await session.submitFeedback(delta.promptEpoch!, 'Approve');
    expect(result).toEqual({ ok: false, reason: 'NoFeedbackPromptPending' });
    expect(session.canSubmit(delta.promptEpoch!)).toBe(true);
  });

  it('distinct solicitations get distinct epochs', async () => {
    const api = new MockApi();
    api.prompt = { type: 'expert-feedback', agent_id: 'doc-expert', round: 0 };
    const session = expertSession(api);
    const first = await session.pollOnce();
    await session.submitFeedback(first.promptEpoch!, 'Approve');
    api.prompt = { type: 'expert-feedback', agent_id: 'doc-expert', round: 1 };
    const second = await session.pollOnce();
    expect(second.promptEpoch).not.toBe(first.promptEpoch);
    expect(session.canSubmit(second.promptEpoch!)).toBe(true);
  });
});

describe('abandonment', () => {
  it('surfaces the engine reason verbatim after a contract', async () => {
    const api = new MockApi();
    api.hasContract = true;
    const result = await consumerSession(api).submitAbandon();
    expect(result).toEqual({ ok: false, reason: 'AbandonAfterContract' });
  });
});

describe('session loop', () => {
  it('runs until the outcome and retries transport failures with backoff', async () => {
    const api = new MockApi();
    let polls = 0;
    const realGetState = api.getState.bind(api);
    api.getState = async (runId) => {
      polls += 1;
      if (polls === 2) throw new Error('connection reset');
      if (polls >= 4) api.outcome = 'Provisioned';
      return realGetState(runId);
    };
    const sleeps: number[] = [];
    const outcome = await runSessionLoop(consumerSession(api), {
      onDelta: () => {},
      backoffMs: [10, 20],
      pollWaitSeconds: 0,
      sleep: async (ms) => {
        sleeps.push(ms);
      },
    });
    expect(outcome).toBe('Provisioned');
    expect(sleeps).toEqual([10]);
  });

  it('gives up after the backoff schedule is exhausted', async () => {
    const api = new MockApi();
    api.getState = async () => {
      throw new Error('down');
    };
    await expect(
      runSessionLoop(consumerSession(api), {
        onDelta: () => {},
        backoffMs: [1],
        sleep: async () => {},
      }),
    ).rejects.toThrow('down');
  });
});
