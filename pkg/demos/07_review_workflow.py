"""The blinded pairwise review protocol, in process.

Items pair the harness model's response with one baseline's response in a
randomized A/B order.  Three reviewers each gate both candidates on
relevance and pick a winner or tie; majority decides each item, 1-1-1
splits count as ties, and aggregates report both win rates.
"""

from clinquiry import ReviewItem, ReviewStore, Verdict

store = ReviewStore()  # in-memory; pass a directory for durable logs

items = [
    ReviewItem(
        item_id=f"item-{i}",
        history="患者：左右肩膀后背疼痛一个月，偶尔胸口疼，有高血压病史。\n医生：血压控制得如何？",
        latest_message="血压就高时候一百五左右，低压九十或者一百。",
        candidate_a=["建议尽快做心电图和血脂检查。", "多休息就好。", "建议监测血压并复诊。"][i],
        candidate_b=["注意饮食清淡即可。", "建议完善心电图检查。", "可以先观察观察。"][i],
        harness_side=["A", "B", "A"][i],
        baseline_model_id="baseline-demo",
        seed=7,
    )
    for i in range(3)
]
print(f"ingested {store.ingest_items(items)} items")

reviewers = [store.register_reviewer(name) for name in ("王医生", "李医生", "赵医生")]
# verdict plan per item: a clear win, a clear loss, and a 1-1-1 split
plan = {
    "item-0": ["A", "A", "tie"],   # harness=A -> win
    "item-1": ["A", "A", "B"],     # harness=B -> loss
    "item-2": ["A", "B", "tie"],   # 1-1-1 -> tie
}

for reviewer_index, token in enumerate(reviewers):
    while True:
        try:
            view = store.next_item(token)
        except Exception:
            break
        choice = plan[view["item_id"]][reviewer_index]
        print(f"reviewer {reviewer_index + 1} sees {view['item_id']} "
              f"(blinded keys: {sorted(view)}) -> {choice}")
        store.submit_verdict(
            Verdict(
                item_id=view["item_id"],
                reviewer_id=token,
                choice=choice,
                relevance_pass_a=True,
                relevance_pass_b=True,
            )
        )

agg = store.aggregate("baseline-demo")
print(f"\nwins {agg.wins}  losses {agg.losses}  ties {agg.ties}")
print(f"win rate excluding ties: {agg.win_rate_excluding_ties:.2f}")
print(f"win rate including ties: {agg.win_rate_including_ties:.2f}")
