// End-to-end: a scripted browser session against a live review service.
// The service is the real Python process; the browser is jsdom. Reviewer 1
// works through the UI; reviewers 2 and 3 submit over the API; the final
// aggregate must match the hand-counted outcome of the verdict plan.

import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ReviewApiClient } from "../src/api.js";
import { ReviewApp } from "../src/ui.js";

const PORT = 8400 + Math.floor(Math.random() * 2000);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

async function waitForService(): Promise<void> {
  const deadline = Date.now() + 20_000;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/export`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("review service did not come up");
}

// it-0: harness on side A; it-1: harness on side B; it-2: harness on side A.
const ITEMS = [
  { item_id: "it-0", harness_side: "A" },
  { item_id: "it-1", harness_side: "B" },
  { item_id: "it-2", harness_side: "A" },
].map((entry, i) => ({
  ...entry,
  history: `患者：主诉${i}。\n医生：请描述症状。`,
  latest_message: `患者的最新消息${i}。`,
  candidate_a: `候选A的回复${i}`,
  candidate_b: `候选B的回复${i}`,
  baseline_model_id: "gpt-base",
  seed: 7,
}));

// Verdict plan per item and reviewer. Hand count (harness outcome):
//   it-0 harness=A: A, A, B  -> majority A -> WIN
//   it-1 harness=B: A, A, A  -> majority A -> LOSS
//   it-2 harness=A: tie, B, tie -> majority tie -> TIE
// Expected: wins=1, losses=1, ties=1.
const PLAN: Record<string, [string, string, string]> = {
  "it-0": ["A", "A", "B"],
  "it-1": ["A", "A", "A"],
  "it-2": ["tie", "B", "tie"],
};

beforeAll(async () => {
  service = spawn("review-service", ["serve", "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForService();
  const response = await fetch(`${BASE}/items`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(ITEMS),
  });
  expect(response.ok).toBe(true);
});

afterAll(() => {
  service?.kill();
});

describe("live review session", () => {
  it("completes 3 items end-to-end and the aggregate matches the hand count", async () => {
    const client = new ReviewApiClient(BASE);
    const token = await client.registerReviewer("前端评审员");

    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;

    // Refresh mid-item: a new app instance with the same token resumes the
    // same claimed item (server-side sticky claims).
    const firstLook = new ReviewApp(root, client, token);
    await firstLook.start();
    const claimedId = root.querySelector('[data-role="item-id"]')!.textContent;
    firstLook.destroy();

    const app = new ReviewApp(root, client, token);
    await app.start();
    expect(root.querySelector('[data-role="item-id"]')!.textContent).toBe(claimedId);

    const click = (selector: string) => {
      (root.querySelector(selector) as HTMLElement).dispatchEvent(
        new MouseEvent("click", { bubbles: true }),
      );
    };

    // Reviewer 1 plays through all three items in the UI.
    for (let step = 0; step < 3; step++) {
      const itemId = root.querySelector('[data-role="item-id"]')!.textContent!;
      const choice = PLAN[itemId][0];

      if (itemId === "it-1") {
        // Exercise the relevance gate: mark B irrelevant, confirm it is
        // unselectable by button and by keyboard, then pick A.
        click('[data-action="rel-A-yes"]');
        click('[data-action="rel-B-no"]');
        const buttonB = root.querySelector('[data-action="choose-B"]') as HTMLButtonElement;
        expect(buttonB.disabled).toBe(true);
        document.dispatchEvent(new KeyboardEvent("keydown", { key: "2" }));
        await new Promise((resolve) => setTimeout(resolve, 50));
        expect(root.querySelector('[data-role="item-id"]')!.textContent).toBe("it-1");
        await app.submitChoice("B"); // still a no-op
        expect(root.querySelector('[data-role="item-id"]')!.textContent).toBe("it-1");
      } else {
        click('[data-action="rel-A-yes"]');
        click('[data-action="rel-B-yes"]');
      }
      await app.submitChoice(choice as "A" | "B" | "tie");
    }
    expect(root.textContent).toContain("评审完成");
    expect(app.progressView().completed).toBe(3);
    app.destroy();

    // Reviewers 2 and 3 submit through the API.
    for (const reviewerIndex of [1, 2] as const) {
      const extra = await client.registerReviewer(`评审员${reviewerIndex + 1}`);
      for (let step = 0; step < 3; step++) {
        const view = await client.fetchNext(extra);
        const choice = PLAN[view.item_id][reviewerIndex] as "A" | "B" | "tie";
        await client.submitVerdict({
          item_id: view.item_id,
          reviewer: extra,
          choice,
          relevance_pass_a: true,
          relevance_pass_b: choice === "B" ? true : true,
        });
      }
    }

    const aggregate = await client.aggregate("gpt-base");
    expect(aggregate.wins).toBe(1);
    expect(aggregate.losses).toBe(1);
    expect(aggregate.ties).toBe(1);
    expect(aggregate.items_fully_reviewed).toBe(3);
    expect(aggregate.win_rate_excluding_ties).toBeCloseTo(0.5, 12);
    expect(aggregate.win_rate_including_ties).toBeCloseTo(1 / 3, 12);
  });

  it("served payloads stay blinded over the wire", async () => {
    const response = await fetch(
      `${BASE}/next?reviewer=${await new ReviewApiClient(BASE).registerReviewer("晚到")}`,
    );
    // All items already have three verdicts; whatever the status, the body
    // must not leak mappings.
    const body = await response.text();
    for (const fragment of ["harness_side", "baseline_model_id", "gpt-base"]) {
      expect(body).not.toContain(fragment);
    }
  });
});
