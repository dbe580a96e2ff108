"""The staged dataset pipeline with a scripted model and file checkpoints.

Stage one proposes core symptoms from a guideline chapter; stage two lists
candidate diseases per symptom; stage three completes evidence dimensions
and differentials.  Between stages, a reviewer edits the checkpoint file
and approves it; here the script plays both the model and the reviewer.
"""

import json
import tempfile
from pathlib import Path

from clinquiry import ScriptedBackend
from clinquiry.gateway import request
from clinquiry.prompts import PromptLibrary
from clinquiry.synthesis import (
    GuidelineDoc,
    approve_checkpoint,
    complete_logic,
    extract_symptoms,
    load_checkpoint,
    match_diseases,
    synthesize_qa,
)

prompts = PromptLibrary()
workdir = Path(tempfile.mkdtemp(prefix="synthesis-demo-"))
guideline = GuidelineDoc(
    id="g-resp",
    chapter_text="咳嗽是呼吸系统疾病的常见症状。上呼吸道感染起病较急……急性支气管炎常发生于寒冷季节……",
)

backend = ScriptedBackend()


def script(prompt_name: str, response: str, **values):
    backend.add_request(
        request("demo-model", [("user", prompts.render(prompt_name, **values))]), response
    )


script("cdrd_symptoms", '["咳嗽", "咳嗽"]', guideline=guideline.chapter_text)  # dupe folds away
script(
    "cdrd_diseases", '["上呼吸道感染", "急性支气管炎"]',
    guideline=guideline.chapter_text, symptom="咳嗽",
)
completion = {
    "differentials": [
        {"disease_name": "上呼吸道感染", "features": ["起病较急，几天", "伴鼻塞、流清涕"], "examinations": ["血常规"]},
        {"disease_name": "急性支气管炎", "features": ["初为干咳或少量黏痰"], "examinations": ["X线胸片"]},
    ],
    "evidence_dimensions": [
        {"name": "病程", "direction": "持续几天还是几周"},
        {"name": "伴随症状", "direction": "是否发热、胸痛"},
    ],
}
script(
    "cdrd_logic", json.dumps(completion, ensure_ascii=False),
    guideline=guideline.chapter_text, symptom="咳嗽",
    disease_list=json.dumps(["上呼吸道感染", "急性支气管炎"], ensure_ascii=False),
)

print("=== stage one: symptom extraction ===")
cp1 = extract_symptoms(guideline, backend, model_id="demo-model",
                       out_path=workdir / "symptoms.json", prompts=prompts)
_, payload = load_checkpoint(cp1.payload_path)
print(f"candidates: {payload['symptoms']}  status: {cp1.status}")
approve_checkpoint(cp1.payload_path)
print("reviewer approved the symptom list")

print("\n=== stage two: disease matching ===")
cp2 = match_diseases(guideline, cp1.payload_path, backend, model_id="demo-model",
                     out_path=workdir / "diseases.json", prompts=prompts)
_, payload = load_checkpoint(cp2.payload_path)
print(f"pairs: {payload['pairs']}")
approve_checkpoint(cp2.payload_path)

print("\n=== stage three: logic completion ===")
entries = complete_logic(guideline, cp2.payload_path, backend, model_id="demo-model", prompts=prompts)
entry = entries[0]
print(f"entry {entry.entry_id}: {len(entry.evidence_dimensions)} dimensions, "
      f"{len(entry.differentials)} differentials")
print("differential set matches the approved list exactly (enforced)")

print("\n=== QA synthesis from fragments ===")
import random

rng = random.Random(0)
fragments = entry.fragments()
for i in range(2):
    fid, text = rng.choice(fragments)
    answer = f"在评估咳嗽时，应关注：{text}。"
    script("qa_answer", answer, fragment=text, symptom=entry.symptom)
    script("qa_question", f"问题{i + 1}：问诊时应如何评估相关表现？", answer=answer, symptom=entry.symptom)

pairs = synthesize_qa(entry, 2, backend, model_id="demo-model", prompts=prompts, seed=0)
for pair in pairs:
    print(f"[{pair.source_entry_fragment_id}] {pair.question}")
print(f"\ncheckpoints and entries written under {workdir}")
