"""A fully scripted benchmark case, end to end.

The model under test and the patient simulator are both scripted backends,
so the whole run is deterministic: dialogue rounds, diagnosis extraction
from the final turn, name-to-code mapping through a lookup table, and
hierarchical recall/precision against the profile's ground truth.
"""

from clinquiry import LookupMapper, PatientProfile, ScriptedBackend
from clinquiry.bench import (
    BenchCase,
    build_report,
    emit_report,
    parse_physician_turn,
    patient_bench_request,
    physician_bench_request,
    run_case,
)
from clinquiry.prompts import PromptLibrary

prompts = PromptLibrary()

profile = PatientProfile(
    profile_id="demo-0001",
    age=45,
    sex="male",
    personality="较为顺从，但因病情反复而略显沮丧。",
    tone="语气平和但带有担忧。",
    utterance_length_hint=(25, 45),
    symptoms="长期干咳，夜间加重，有过敏性鼻炎史，吸烟。",
    ground_truth_diagnoses=("咳嗽变异性哮喘", "肺部磨玻璃结节"),
    other_history="使用吸入性糖皮质激素后症状减轻，停药后复发。",
    opening_line="最近三个月一直干咳乏力。",
)
case = BenchCase(case_id="demo-0001", profile=profile, department="呼吸内科")
mapper = LookupMapper({
    "咳嗽变异性哮喘": ["J45.9"],
    "肺部磨玻璃结节": ["R91"],
    "上呼吸道感染": ["J06.9"],
})

# Script the dialogue by mirroring the request the runner will build at
# each turn: same history in, canned response out.
physician = ScriptedBackend()
patient = ScriptedBackend()
rounds = 3
doctor_lines = [
    ("上呼吸道感染", "咳嗽多久了？夜间会加重吗？"),
    ("咳嗽变异性哮喘", "用过吸入激素类药物吗？效果如何？"),
    ("咳嗽变异性哮喘、肺部磨玻璃结节", "建议完善肺功能检查与胸部CT随访。"),
]
patient_lines = ["三个月了，夜里咳得厉害。", "用过布地奈德，吸的时候明显好转。"]

history = [("patient", profile.opening_line)]
for k in range(1, rounds + 1):
    diagnoses, reply = doctor_lines[k - 1]
    physician.add_request(
        physician_bench_request(history, model_id="demo-phys", prompts=prompts),
        f"【诊断】{diagnoses}\n【回复】{reply}",
    )
    history.append(("doctor", reply))
    if k < rounds:
        patient.add_request(
            patient_bench_request(profile, history, model_id="demo-pat", prompts=prompts),
            patient_lines[k - 1],
        )
        history.append(("patient", patient_lines[k - 1]))

record = run_case(
    case, physician, patient, mapper,
    rounds=rounds, prompts=prompts,
    physician_model="demo-phys", patient_model="demo-pat",
)

print("=== dialogue ===")
for turn in record.transcript.turns:
    print(f"患者：{turn.patient_utterance}")
    print(f"医生：{turn.physician_block.inquiry}   (诊断: {turn.physician_block.diagnoses})")

print("\n=== scoring ===")
print(f"final hypotheses -> {record.predicted.codes}  (audit: {record.predicted.unresolved})")
print(f"ground truth     -> {record.truth.codes}")
print(f"recall {record.recall:.4f}   precision {record.precision:.4f}")

print("\n=== one-case report ===")
print(emit_report(build_report([record], "demo-phys"), "table-text"))
