"""HTTP surface for the review workflow, consumed by the browser UI.

Endpoints (all JSON):
  POST /reviewers              {"name"} -> {"token"}
  POST /items                  [item, ...] -> {"ingested": n}
  GET  /next?reviewer=<token>  -> reviewer-facing item projection
  POST /verdicts               {item_id, reviewer, choice, relevance_pass_a/b}
  GET  /aggregate?baseline=<id>
  GET  /export                 full operator log (includes hidden mappings)

Reviewer-facing payloads never carry the hidden A/B mapping or model ids.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import review
from .review import ReviewItem, ReviewStore, Verdict


class ReviewerIn(BaseModel):
    name: str


class ItemIn(BaseModel):
    item_id: str
    history: str = ""
    latest_message: str = ""
    candidate_a: str
    candidate_b: str
    harness_side: str
    baseline_model_id: str
    seed: int = 0


class VerdictIn(BaseModel):
    item_id: str
    reviewer: str
    choice: str
    relevance_pass_a: bool
    relevance_pass_b: bool


_CONFLICTS = (
    review.DuplicateIdConflict,
    review.AlreadyJudged,
    review.ItemFullyReviewed,
    review.NotServed,
)


def create_app(store: ReviewStore | None = None) -> FastAPI:
    store = store if store is not None else ReviewStore()
    app = FastAPI(title="pairwise-review")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.post("/reviewers")
    def register(body: ReviewerIn):
        return {"token": store.register_reviewer(body.name)}

    @app.post("/items")
    def ingest(items: list[ItemIn]):
        try:
            parsed = [ReviewItem.from_dict(item.model_dump()) for item in items]
            count = store.ingest_items(parsed)
        except review.DuplicateIdConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"ingested": count}

    @app.get("/next")
    def next_item(reviewer: str = Query(...)):
        try:
            return store.next_item(reviewer)
        except review.UnknownReviewer as exc:
            raise HTTPException(status_code=401, detail=str(exc)) from exc
        except review.NoItemsRemaining as exc:
            raise HTTPException(status_code=404, detail="no_items_remaining") from exc

    @app.post("/verdicts")
    def submit(body: VerdictIn):
        try:
            verdict = Verdict(
                item_id=body.item_id,
                reviewer_id=body.reviewer,
                choice=body.choice,
                relevance_pass_a=body.relevance_pass_a,
                relevance_pass_b=body.relevance_pass_b,
            )
            store.submit_verdict(verdict)
        except review.UnknownReviewer as exc:
            raise HTTPException(status_code=401, detail=str(exc)) from exc
        except review.UnknownItem as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except _CONFLICTS as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except (review.RelevanceContradiction, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"status": "recorded"}

    @app.get("/aggregate")
    def aggregate(baseline: str = Query(...)):
        return store.aggregate(baseline).to_dict()

    @app.get("/export")
    def export():
        return store.export()

    return app
