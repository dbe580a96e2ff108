"""Walk the five-level ICD-10 similarity and the set-level recall/precision.

Two codes are compared level by level: exact code, 4-character subcategory,
3-character category, tabular block (e.g. J40-J47), chapter letter.  The
first level that matches decides the score.
"""

from clinquiry import DiagnosisSet, default_blocks, icd_precision, icd_recall, normalize, sim

blocks = default_blocks()

print("=== normalization ===")
for raw in ("J45.9", "j20.9", " i10 "):
    print(f"{raw!r:10} -> {normalize(raw)}")

print("\n=== pairwise similarity levels ===")
pairs = [
    ("J459", "J459", "identical code"),
    ("J4590", "J4591", "same 4-char subcategory"),
    ("J451", "J459", "same 3-char category"),
    ("J42", "J450", "same block J40-J47"),
    ("J189", "J950", "same chapter, different blocks"),
    ("J459", "K219", "different chapters"),
]
for p, g, why in pairs:
    print(f"sim({p:5}, {g:5}) = {sim(p, g, blocks):.1f}   # {why}")

print("\n=== a small diagnosis-set scenario ===")
# The model suspected a subtype of the right asthma category plus reflux;
# the ground truth is allergic asthma alone.
predicted = DiagnosisSet.from_raw(["J45.1", "K21.0"], ["哮喘（变异型）", "反流性食管炎"])
truth = DiagnosisSet.from_raw(["J45.9"], ["过敏性哮喘"])

print(f"predicted: {predicted.codes}")
print(f"truth:     {truth.codes}")
print(f"recall    = {icd_recall(predicted, truth, blocks):.4f}  (best match per truth code)")
print(f"precision = {icd_precision(predicted, truth, blocks):.4f}  (best match per prediction)")

print("\nrecall rewards near misses: J451 vs J459 scores 0.6, so a")
print("category-level hypothesis still earns credit toward coverage.")
