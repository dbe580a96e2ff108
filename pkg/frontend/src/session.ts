// Session state for one reviewer: the current item, its relevance flags,
// and progress. Pure functions, no DOM — the rules that keep a verdict
// honest live here so they can be tested in isolation:
//   * a verdict is submittable only after BOTH relevance flags are set;
//   * a candidate marked not-relevant can never be chosen as winner
//     (ties over two irrelevant candidates are allowed).

import type { Choice, ReviewItemView, VerdictPayload } from "./api.js";

export type Relevance = boolean | null; // null = not decided yet

export interface SessionState {
  token: string;
  item: ReviewItemView | null;
  relevanceA: Relevance;
  relevanceB: Relevance;
  completed: number;
  finished: boolean;
}

export function newSession(token: string): SessionState {
  return {
    token,
    item: null,
    relevanceA: null,
    relevanceB: null,
    completed: 0,
    finished: false,
  };
}

export function beginItem(state: SessionState, item: ReviewItemView): SessionState {
  return { ...state, item, relevanceA: null, relevanceB: null };
}

export function setRelevance(
  state: SessionState,
  side: "A" | "B",
  value: boolean,
): SessionState {
  if (!state.item) throw new Error("no active item");
  return side === "A" ? { ...state, relevanceA: value } : { ...state, relevanceB: value };
}

export function relevanceComplete(state: SessionState): boolean {
  return state.relevanceA !== null && state.relevanceB !== null;
}

export function choiceEnabled(state: SessionState, choice: Choice): boolean {
  if (!state.item || !relevanceComplete(state)) return false;
  if (choice === "A") return state.relevanceA === true;
  if (choice === "B") return state.relevanceB === true;
  return true; // tie is always available once both flags are set
}

/** The verdict the UI may submit; throws if the choice is not enabled. */
export function buildVerdict(state: SessionState, choice: Choice): VerdictPayload {
  if (!state.item) throw new Error("no active item");
  if (!choiceEnabled(state, choice)) {
    throw new Error(`choice ${choice} is not selectable in the current state`);
  }
  return {
    item_id: state.item.item_id,
    reviewer: state.token,
    choice,
    relevance_pass_a: state.relevanceA === true,
    relevance_pass_b: state.relevanceB === true,
  };
}

export function completeItem(state: SessionState): SessionState {
  return {
    ...state,
    item: null,
    relevanceA: null,
    relevanceB: null,
    completed: state.completed + 1,
  };
}

export function finishSession(state: SessionState): SessionState {
  return { ...state, item: null, finished: true };
}
