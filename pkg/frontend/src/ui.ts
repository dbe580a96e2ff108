// DOM layer: renders the single-page review flow and wires events.
// Candidates render in served order (A left, B right) with no model
// branding; winner buttons stay disabled until both relevance flags are
// set, and a not-relevant candidate's button never enables. Keyboard
// shortcuts: 1 = A, 2 = B, 0 = tie.

import { NoItemsRemaining } from "./api.js";
import type { ReviewClient } from "./api.js";
import type { Choice } from "./api.js";
import {
  SessionState,
  beginItem,
  buildVerdict,
  choiceEnabled,
  completeItem,
  finishSession,
  newSession,
  setRelevance,
} from "./session.js";

const KEY_TO_CHOICE: Record<string, Choice> = { "1": "A", "2": "B", "0": "tie" };

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export class ReviewApp {
  state: SessionState;
  status = "";
  private readonly keyHandler: (event: KeyboardEvent) => void;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ReviewClient,
    token: string,
  ) {
    this.state = newSession(token);
    this.keyHandler = (event) => {
      const choice = KEY_TO_CHOICE[event.key];
      if (choice) void this.submitChoice(choice);
    };
    root.ownerDocument.addEventListener("keydown", this.keyHandler);
  }

  destroy(): void {
    this.root.ownerDocument.removeEventListener("keydown", this.keyHandler);
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    try {
      const item = await this.client.fetchNext(this.state.token);
      this.state = beginItem(this.state, item);
      this.status = "";
    } catch (error) {
      if (error instanceof NoItemsRemaining) {
        this.state = finishSession(this.state);
        this.status = "";
      } else {
        this.status = String(error);
      }
    }
    this.render();
  }

  markRelevance(side: "A" | "B", value: boolean): void {
    if (!this.state.item) return;
    this.state = setRelevance(this.state, side, value);
    this.render();
  }

  /** Submit if the choice is enabled; silently ignores disabled choices. */
  async submitChoice(choice: Choice): Promise<void> {
    if (!choiceEnabled(this.state, choice)) return;
    try {
      await this.client.submitVerdict(buildVerdict(this.state, choice));
    } catch (error) {
      this.status = String(error); // server re-validated and refused
      this.render();
      return;
    }
    this.state = completeItem(this.state);
    await this.loadNext();
  }

  progressView(): { completed: number; active: boolean } {
    return { completed: this.state.completed, active: this.state.item !== null };
  }

  private candidateCard(side: "A" | "B", text: string): string {
    const relevance = side === "A" ? this.state.relevanceA : this.state.relevanceB;
    const mark = (value: boolean) => (relevance === value ? "checked" : "");
    return `
      <section class="candidate" data-role="candidate-${side.toLowerCase()}">
        <h3>候选 ${side}</h3>
        <div class="response">${escapeHtml(text)}</div>
        <fieldset class="relevance">
          <legend>相关性</legend>
          <label><input type="radio" name="rel-${side}" data-action="rel-${side}-yes" ${mark(true)}> 相关</label>
          <label><input type="radio" name="rel-${side}" data-action="rel-${side}-no" ${mark(false)}> 不相关</label>
        </fieldset>
      </section>`;
  }

  render(): void {
    const { item, completed, finished } = this.state;
    if (finished) {
      this.root.innerHTML = `
        <main class="done">
          <h2>评审完成</h2>
          <p data-role="progress">已完成 ${completed} 条。感谢参与！</p>
        </main>`;
      return;
    }
    if (!item) {
      this.root.innerHTML = `<main><p data-role="status">${escapeHtml(this.status || "加载中…")}</p></main>`;
      return;
    }
    const button = (choice: Choice, label: string) => {
      const disabled = choiceEnabled(this.state, choice) ? "" : "disabled";
      return `<button data-action="choose-${choice}" ${disabled}>${label}</button>`;
    };
    this.root.innerHTML = `
      <main>
        <header>
          <span data-role="progress">已完成 ${completed} 条</span>
          <span data-role="item-id">${escapeHtml(item.item_id)}</span>
        </header>
        <section class="context">
          <h3>历史对话</h3>
          <pre data-role="history">${escapeHtml(item.history)}</pre>
          <h3>患者最新消息</h3>
          <p data-role="latest">${escapeHtml(item.latest_message)}</p>
        </section>
        <div class="candidates">
          ${this.candidateCard("A", item.candidate_a)}
          ${this.candidateCard("B", item.candidate_b)}
        </div>
        <footer class="verdict">
          ${button("A", "A 更好 (1)")}
          ${button("B", "B 更好 (2)")}
          ${button("tie", "平局 (0)")}
          <span data-role="status">${escapeHtml(this.status)}</span>
        </footer>
      </main>`;
    this.wire();
  }

  private wire(): void {
    const on = (selector: string, handler: () => void) => {
      const node = this.root.querySelector(selector);
      if (node) node.addEventListener("click", handler);
    };
    on('[data-action="rel-A-yes"]', () => this.markRelevance("A", true));
    on('[data-action="rel-A-no"]', () => this.markRelevance("A", false));
    on('[data-action="rel-B-yes"]', () => this.markRelevance("B", true));
    on('[data-action="rel-B-no"]', () => this.markRelevance("B", false));
    on('[data-action="choose-A"]', () => void this.submitChoice("A"));
    on('[data-action="choose-B"]', () => void this.submitChoice("B"));
    on('[data-action="choose-tie"]', () => void this.submitChoice("tie"));
  }
}
