"""Composite step reward: weighted judge scores minus the divergence penalty.

Seven parts are scored 0-10 against the reference turn.  The first three
(known information, user intention, provided information) weigh 0.1 each;
diagnoses, information-to-collect, and response strategy weigh 0.3; the
final inquiry weighs 0.6.  Every off-CDRD item costs 5.
"""

from clinquiry import DivergenceCount, JudgeScores, RewardWeights, compute_reward

print("=== a mixed-quality turn ===")
scores = JudgeScores((8, 7, 9, 6, 5, 7, 8))
breakdown = compute_reward(scores, DivergenceCount(0))
print(f"scores          {scores.r}")
print(f"reasoning part  0.1*(8+7+9) + 0.3*(6+5+7) = {breakdown.r_comp_r}")
print(f"inquiry part    0.6*8                     = {breakdown.r_comp_i}")
print(f"composite       {breakdown.r_comp}")
print(f"step reward     {breakdown.r_step}")

print("\n=== perfect scores, two hallucinated items ===")
breakdown = compute_reward(JudgeScores((10,) * 7), DivergenceCount(2))
print(f"composite  {breakdown.r_comp}   penalty {breakdown.r_div}   step reward {breakdown.r_step}")

print("\n=== reward range with default weights ===")
lo = compute_reward(JudgeScores((0,) * 7), DivergenceCount(0)).r_step
hi = compute_reward(JudgeScores((10,) * 7), DivergenceCount(0)).r_step
print(f"score-only range: [{lo}, {hi}]; each divergence subtracts 5 more")

print("\n=== custom weights ===")
inquiry_heavy = RewardWeights(w_reason=(0.05,) * 6, w_inquiry=(1.0,), divergence_weight=2.0)
breakdown = compute_reward(JudgeScores((8, 7, 9, 6, 5, 7, 8)), DivergenceCount(1), inquiry_heavy)
print(f"inquiry-heavy weighting: composite {breakdown.r_comp:.2f}, step {breakdown.r_step:.2f}")
