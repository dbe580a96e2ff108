// Boot: resolve the service URL, reuse or create the reviewer token, and
// mount the app. The token persists in localStorage, so a mid-item refresh
// resumes the same claimed item (the server keeps claims sticky until
// their TTL expires).

import { ReviewApiClient } from "./api.js";
import { ReviewApp } from "./ui.js";

const TOKEN_KEY = "review-ui.token";
const SERVICE_KEY = "review-ui.service";
const DEFAULT_SERVICE = "http://127.0.0.1:8390";

function serviceUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("service");
  if (fromQuery) {
    window.localStorage.setItem(SERVICE_KEY, fromQuery);
    return fromQuery;
  }
  return window.localStorage.getItem(SERVICE_KEY) ?? DEFAULT_SERVICE;
}

async function reviewerToken(client: ReviewApiClient): Promise<string> {
  const existing = window.localStorage.getItem(TOKEN_KEY);
  if (existing) return existing;
  const name = window.prompt("评审员姓名 / Reviewer name:") ?? "anonymous";
  const token = await client.registerReviewer(name);
  window.localStorage.setItem(TOKEN_KEY, token);
  return token;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const client = new ReviewApiClient(serviceUrl());
  const token = await reviewerToken(client);
  const app = new ReviewApp(root, client, token);
  await app.start();
}

void boot();
