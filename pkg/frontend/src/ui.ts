/**
 * DOM layer: renders the event feed and exactly the form matching the
 * prompt the engine is parked on for this session's role.
 *
 * Nothing here invents state.  Every rendered fact is either an event from
 * the feed or a field of the latest state snapshot; forms are enabled only
 * while the corresponding prompt is pending.
 */
import type { PendingPrompt } from './api';
import type { SessionController, SessionDelta } from './session';

export interface ConsoleView {
  /** Apply one poll delta to the DOM. */
  update(delta: SessionDelta): void;
  root: HTMLElement;
}

function el(doc: Document, tag: string, className: string, text = ''): HTMLElement {
  const node = doc.createElement(tag);
  node.className = className;
  if (text) node.textContent = text;
  return node;
}

export function createConsoleView(
  root: HTMLElement,
  controller: SessionController,
): ConsoleView {
  const doc = root.ownerDocument;
  const status = el(doc, 'div', 'status', 'connecting…');
  const banner = el(doc, 'div', 'banner');
  banner.hidden = true;
  const feed = el(doc, 'ul', 'event-feed');
  const promptBox = el(doc, 'div', 'prompt-box');
  const abandonButton = el(doc, 'button', 'abandon') as HTMLButtonElement;
  abandonButton.textContent = 'Abandon request';
  abandonButton.hidden = controller.role.kind !== 'consumer';
  abandonButton.addEventListener('click', async () => {
    const result = await controller.submitAbandon();
    if (!result.ok) {
      banner.textContent = result.reason;
      banner.hidden = false;
      abandonButton.disabled = true;
    }
  });
  root.replaceChildren(status, banner, feed, promptBox, abandonButton);

  function renderFeed(delta: SessionDelta): void {
    for (const event of delta.newEvents) {
      const line = el(doc, 'li', `event event-${event.event}`);
      line.textContent = `[${event.tick}] ${event.event}`;
      if (event.detail) line.textContent += ` ${JSON.stringify(event.detail)}`;
      feed.appendChild(line);
    }
  }

  function renderConsumerForm(prompt: PendingPrompt, epoch: number): void {
    const form = el(doc, 'form', 'consumer-form') as HTMLFormElement;
    const missing = prompt.missing ?? [];
    for (const name of missing) {
      const label = el(doc, 'label', 'field', name);
      const input = doc.createElement('input');
      input.name = name;
      label.appendChild(input);
      form.appendChild(label);
    }
    const confirm = doc.createElement('input');
    confirm.type = 'checkbox';
    confirm.name = 'confirm';
    const confirmLabel = el(doc, 'label', 'field', 'confirm understanding');
    confirmLabel.appendChild(confirm);
    form.appendChild(confirmLabel);
    const send = el(doc, 'button', 'send', 'Send') as HTMLButtonElement;
    send.type = 'submit';
    form.appendChild(send);
    form.addEventListener('submit', async (ev) => {
      ev.preventDefault();
      if (!controller.canSubmit(epoch)) return;
      send.disabled = true;
      const attributes: Record<string, string> = {};
      for (const name of missing) {
        const input = form.querySelector<HTMLInputElement>(`input[name="${name}"]`);
        if (input && input.value) attributes[name] = input.value;
      }
      await controller.submitConsumerInput(epoch, attributes, confirm.checked);
    });
    promptBox.replaceChildren(form);
  }

  function renderFeedbackForm(prompt: PendingPrompt, epoch: number): void {
    const form = el(doc, 'div', 'feedback-form');
    form.appendChild(
      el(doc, 'div', 'prompt-title', `feedback requested (round ${prompt.round ?? 0})`),
    );
    for (const verdict of ['Approve', 'Reject', 'NeedMoreData', 'ReferDomain']) {
      const button = el(doc, 'button', `verdict verdict-${verdict}`, verdict) as HTMLButtonElement;
      button.addEventListener('click', async () => {
        if (!controller.canSubmit(epoch)) return;
        form.querySelectorAll('button').forEach((b) => ((b as HTMLButtonElement).disabled = true));
        await controller.submitFeedback(epoch, verdict);
      });
      form.appendChild(button);
    }
    promptBox.replaceChildren(form);
  }

  function renderCritiqueForm(prompt: PendingPrompt, epoch: number): void {
    const form = el(doc, 'div', 'critique-form');
    form.appendChild(
      el(doc, 'div', 'prompt-title', `workflow critique (round ${prompt.round ?? 0})`),
    );
    const textarea = doc.createElement('textarea');
    textarea.className = 'edits';
    textarea.value = '[]';
    form.appendChild(textarea);
    const approve = el(doc, 'button', 'approve-workflow', 'Approve workflow') as HTMLButtonElement;
    approve.addEventListener('click', async () => {
      if (!controller.canSubmit(epoch)) return;
      approve.disabled = true;
      let edits: unknown[] = [];
      try {
        edits = JSON.parse(textarea.value || '[]');
      } catch {
        banner.textContent = 'edits must be a JSON list';
        banner.hidden = false;
        approve.disabled = false;
        return;
      }
      await controller.submitCritique(epoch, edits);
    });
    form.appendChild(approve);
    promptBox.replaceChildren(form);
  }

  function update(delta: SessionDelta): void {
    status.textContent = delta.state.outcome
      ? `finished: ${delta.state.outcome}`
      : `phase: ${delta.state.phase ?? 'starting'}`;
    if (delta.state.outcome === 'Unresolvable') {
      banner.textContent = 'Unresolvable';
      banner.hidden = false;
    }
    renderFeed(delta);
    if (!delta.activePrompt || delta.promptEpoch === null) {
      promptBox.replaceChildren();
      return;
    }
    if (!controller.canSubmit(delta.promptEpoch)) return; // already answered, keep quiet
    switch (delta.activePrompt.type) {
      case 'consumer-input':
        renderConsumerForm(delta.activePrompt, delta.promptEpoch);
        break;
      case 'expert-feedback':
        renderFeedbackForm(delta.activePrompt, delta.promptEpoch);
        break;
      case 'workflow-critique':
        renderCritiqueForm(delta.activePrompt, delta.promptEpoch);
        break;
    }
  }

  return { update, root };
}
