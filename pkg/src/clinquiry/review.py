"""Blinded pairwise review: item storage, reviewer assignment, verdict aggregation.

Each item pairs two candidate responses (A left, B right) for the same
dialogue context; which side is the harness model stays hidden from
reviewers.  Every item is judged by up to three distinct reviewers, each
first gating both candidates on relevance and then picking a winner or a
tie.  Verdicts append to a durable log; aggregates are a pure function of
that log.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

MAX_REVIEWERS_PER_ITEM = 3

CHOICES = ("A", "B", "tie")


class ReviewError(Exception):
    pass


class DuplicateIdConflict(ReviewError):
    pass


class NoItemsRemaining(ReviewError):
    pass


class UnknownItem(ReviewError):
    pass


class UnknownReviewer(ReviewError):
    pass


class AlreadyJudged(ReviewError):
    pass


class ItemFullyReviewed(ReviewError):
    pass


class RelevanceContradiction(ReviewError):
    pass


class NotServed(ReviewError):
    pass


@dataclass(frozen=True)
class ReviewItem:
    """A blinded candidate pair; ``harness_side`` is never shown to reviewers."""

    item_id: str
    history: str
    latest_message: str
    candidate_a: str
    candidate_b: str
    harness_side: str  # "A" | "B"
    baseline_model_id: str
    seed: int = 0

    def __post_init__(self):
        if self.harness_side not in ("A", "B"):
            raise ValueError("harness_side must be 'A' or 'B'")

    def reviewer_view(self) -> dict:
        """The reviewer-facing projection: no mapping, no model identities."""
        return {
            "item_id": self.item_id,
            "history": self.history,
            "latest_message": self.latest_message,
            "candidate_a": self.candidate_a,
            "candidate_b": self.candidate_b,
        }

    def to_dict(self) -> dict:
        return {
            "kind": "review_item",
            "item_id": self.item_id,
            "history": self.history,
            "latest_message": self.latest_message,
            "candidate_a": self.candidate_a,
            "candidate_b": self.candidate_b,
            "harness_side": self.harness_side,
            "baseline_model_id": self.baseline_model_id,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewItem":
        return cls(
            item_id=str(data["item_id"]),
            history=str(data.get("history", "")),
            latest_message=str(data.get("latest_message", "")),
            candidate_a=str(data["candidate_a"]),
            candidate_b=str(data["candidate_b"]),
            harness_side=str(data["harness_side"]),
            baseline_model_id=str(data["baseline_model_id"]),
            seed=int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class Verdict:
    """One reviewer's decision; relevance gates which candidates may win."""

    item_id: str
    reviewer_id: str
    choice: str  # "A" | "B" | "tie"
    relevance_pass_a: bool
    relevance_pass_b: bool
    timestamp: str = ""

    def __post_init__(self):
        if self.choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}")
        if self.choice == "A" and not self.relevance_pass_a:
            raise RelevanceContradiction("choice A named a relevance-failed candidate")
        if self.choice == "B" and not self.relevance_pass_b:
            raise RelevanceContradiction("choice B named a relevance-failed candidate")

    def to_dict(self) -> dict:
        return {
            "kind": "verdict",
            "item_id": self.item_id,
            "reviewer_id": self.reviewer_id,
            "choice": self.choice,
            "relevance_pass_a": self.relevance_pass_a,
            "relevance_pass_b": self.relevance_pass_b,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        return cls(
            item_id=str(data["item_id"]),
            reviewer_id=str(data["reviewer_id"]),
            choice=str(data["choice"]),
            relevance_pass_a=bool(data["relevance_pass_a"]),
            relevance_pass_b=bool(data["relevance_pass_b"]),
            timestamp=str(data.get("timestamp", "")),
        )


@dataclass(frozen=True)
class SatisfactionAggregate:
    """Win/loss/tie counts for the harness model against one baseline."""

    baseline_model_id: str
    wins: int
    losses: int
    ties: int
    win_rate_excluding_ties: float
    win_rate_including_ties: float
    items_fully_reviewed: int

    def to_dict(self) -> dict:
        return {
            "baseline_model_id": self.baseline_model_id,
            "wins": self.wins,
            "losses": self.losses,
            "ties": self.ties,
            "win_rate_excluding_ties": self.win_rate_excluding_ties,
            "win_rate_including_ties": self.win_rate_including_ties,
            "items_fully_reviewed": self.items_fully_reviewed,
        }


def majority_outcome(choices: list[str], harness_side: str) -> str:
    """Decide win/loss/tie for the harness model from three un-blinded choices.

    Two matching choices carry the item; any 1-1-1 split counts as a tie.
    """
    mapped = []
    for choice in choices:
        if choice == "tie":
            mapped.append("tie")
        elif choice == harness_side:
            mapped.append("win")
        else:
            mapped.append("loss")
    for outcome in ("win", "loss", "tie"):
        if mapped.count(outcome) >= 2:
            return outcome
    return "tie"


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class ReviewStore:
    """Thread-safe item/verdict store with an append-only verdict log.

    With ``data_dir`` set, items and reviewers persist as snapshots and
    verdicts as a log; a fresh store pointed at the same directory replays
    into the identical state.
    """

    def __init__(self, data_dir: str | Path | None = None, *, claim_ttl: float = 900.0):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.claim_ttl = claim_ttl
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {}
        self._verdicts: dict[str, dict[str, Verdict]] = {}  # item_id -> reviewer -> verdict
        self._reviewers: dict[str, str] = {}  # token -> display name
        self._claims: dict[str, tuple[str, float]] = {}  # reviewer -> (item_id, expiry)
        self._served: dict[str, set[str]] = {}  # reviewer -> item ids ever served
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._replay()

    # -- persistence --

    def _items_path(self) -> Path:
        return self.data_dir / "items.jsonl"

    def _verdicts_path(self) -> Path:
        return self.data_dir / "verdicts.jsonl"

    def _reviewers_path(self) -> Path:
        return self.data_dir / "reviewers.jsonl"

    def _replay(self) -> None:
        if self._items_path().exists():
            for line in self._items_path().read_text(encoding="utf-8").splitlines():
                if line.strip():
                    item = ReviewItem.from_dict(json.loads(line))
                    self._items[item.item_id] = item
        if self._reviewers_path().exists():
            for line in self._reviewers_path().read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._reviewers[rec["token"]] = rec["name"]
        if self._verdicts_path().exists():
            for line in self._verdicts_path().read_text(encoding="utf-8").splitlines():
                if line.strip():
                    verdict = Verdict.from_dict(json.loads(line))
                    self._verdicts.setdefault(verdict.item_id, {})[verdict.reviewer_id] = verdict
                    self._served.setdefault(verdict.reviewer_id, set()).add(verdict.item_id)

    def _write_items_snapshot(self) -> None:
        if self.data_dir is None:
            return
        with self._items_path().open("w", encoding="utf-8") as fh:
            for item_id in sorted(self._items):
                fh.write(json.dumps(self._items[item_id].to_dict(), ensure_ascii=False) + "\n")

    def _append(self, filename: str, payload: dict) -> None:
        if self.data_dir is None:
            return
        with (self.data_dir / filename).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")

    # -- reviewers --

    def register_reviewer(self, name: str) -> str:
        token = secrets.token_hex(16)
        with self._lock:
            self._reviewers[token] = name
            self._append("reviewers.jsonl", {"token": token, "name": name})
        return token

    def _require_reviewer(self, token: str) -> None:
        if token not in self._reviewers:
            raise UnknownReviewer(f"unregistered reviewer token")

    # -- items --

    def ingest_items(self, items: list[ReviewItem]) -> int:
        """Idempotent on identical re-ingest; same id with new content conflicts."""
        with self._lock:
            fresh = 0
            for item in items:
                existing = self._items.get(item.item_id)
                if existing is None:
                    self._items[item.item_id] = item
                    fresh += 1
                elif existing != item:
                    raise DuplicateIdConflict(
                        f"item '{item.item_id}' already ingested with different content"
                    )
            if fresh:
                self._write_items_snapshot()
            return fresh

    def _participants(self, item_id: str, now: float) -> set[str]:
        judged = set(self._verdicts.get(item_id, {}))
        claiming = {
            reviewer
            for reviewer, (claimed_id, expiry) in self._claims.items()
            if claimed_id == item_id and expiry > now and reviewer not in judged
        }
        return judged | claiming

    def next_item(self, reviewer_token: str) -> dict:
        """Claim and return the least-reviewed item this reviewer can judge.

        Returns the reviewer-facing projection; a live claim is sticky, so a
        refresh before expiry resumes the same item.
        """
        now = time.monotonic()
        with self._lock:
            self._require_reviewer(reviewer_token)
            claim = self._claims.get(reviewer_token)
            if claim is not None and claim[1] > now and reviewer_token not in self._verdicts.get(claim[0], {}):
                return self._items[claim[0]].reviewer_view()
            candidates = []
            for item_id, item in self._items.items():
                verdicts = self._verdicts.get(item_id, {})
                if reviewer_token in verdicts:
                    continue
                participants = self._participants(item_id, now)
                if reviewer_token not in participants and len(participants) >= MAX_REVIEWERS_PER_ITEM:
                    continue
                if len(verdicts) >= MAX_REVIEWERS_PER_ITEM:
                    continue
                candidates.append((len(verdicts), len(participants), item_id))
            if not candidates:
                raise NoItemsRemaining("no reviewable items for this reviewer")
            _, _, best = min(candidates)
            self._claims[reviewer_token] = (best, now + self.claim_ttl)
            self._served.setdefault(reviewer_token, set()).add(best)
            return self._items[best].reviewer_view()

    def submit_verdict(self, verdict: Verdict) -> None:
        with self._lock:
            self._require_reviewer(verdict.reviewer_id)
            if verdict.item_id not in self._items:
                raise UnknownItem(f"unknown item '{verdict.item_id}'")
            if verdict.item_id not in self._served.get(verdict.reviewer_id, set()):
                raise NotServed("reviewer was never served this item")
            existing = self._verdicts.setdefault(verdict.item_id, {})
            if verdict.reviewer_id in existing:
                raise AlreadyJudged(f"reviewer already judged '{verdict.item_id}'")
            if len(existing) >= MAX_REVIEWERS_PER_ITEM:
                raise ItemFullyReviewed(f"item '{verdict.item_id}' already has 3 verdicts")
            if not verdict.timestamp:
                verdict = Verdict(
                    item_id=verdict.item_id,
                    reviewer_id=verdict.reviewer_id,
                    choice=verdict.choice,
                    relevance_pass_a=verdict.relevance_pass_a,
                    relevance_pass_b=verdict.relevance_pass_b,
                    timestamp=_now_iso(),
                )
            existing[verdict.reviewer_id] = verdict
            self._append("verdicts.jsonl", verdict.to_dict())
            claim = self._claims.get(verdict.reviewer_id)
            if claim is not None and claim[0] == verdict.item_id:
                del self._claims[verdict.reviewer_id]

    def aggregate(self, baseline_model_id: str) -> SatisfactionAggregate:
        """Majority-rule win/loss/tie over fully reviewed items for a baseline."""
        with self._lock:
            wins = losses = ties = 0
            for item_id, item in self._items.items():
                if item.baseline_model_id != baseline_model_id:
                    continue
                verdicts = self._verdicts.get(item_id, {})
                if len(verdicts) != MAX_REVIEWERS_PER_ITEM:
                    continue
                outcome = majority_outcome(
                    [v.choice for v in verdicts.values()], item.harness_side
                )
                if outcome == "win":
                    wins += 1
                elif outcome == "loss":
                    losses += 1
                else:
                    ties += 1
            decided = wins + losses
            total = wins + losses + ties
            return SatisfactionAggregate(
                baseline_model_id=baseline_model_id,
                wins=wins,
                losses=losses,
                ties=ties,
                win_rate_excluding_ties=wins / decided if decided else 0.0,
                win_rate_including_ties=wins / total if total else 0.0,
                items_fully_reviewed=total,
            )

    def baselines(self) -> list[str]:
        with self._lock:
            return sorted({item.baseline_model_id for item in self._items.values()})

    def export(self) -> dict:
        """Full operator-facing log: items with mappings plus all verdicts."""
        with self._lock:
            return {
                "items": [self._items[i].to_dict() for i in sorted(self._items)],
                "verdicts": [
                    v.to_dict()
                    for item_id in sorted(self._verdicts)
                    for _, v in sorted(self._verdicts[item_id].items())
                ],
            }
