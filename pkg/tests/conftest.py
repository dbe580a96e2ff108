from __future__ import annotations

import pytest

from clinquiry.prompts import PromptLibrary
from clinquiry.records import CdrdEntry, DifferentialEntry, EvidenceDimension, PatientProfile


@pytest.fixture(scope="session")
def cough_entry() -> CdrdEntry:
    """Well-formed cough entry: six evidence dimensions, three differentials."""
    return CdrdEntry(
        entry_id="g-resp:咳嗽",
        symptom="咳嗽",
        source_guideline_id="g-resp",
        evidence_dimensions=(
            EvidenceDimension("咳嗽的性质", "干咳、有痰"),
            EvidenceDimension("咳嗽的时间", "几天、几个月、几年加重几天"),
            EvidenceDimension("咳嗽的音色", "咳嗽嘶哑、鸡鸣样咳嗽、咳嗽声音低微"),
            EvidenceDimension("痰的性质", "粘液性痰、泡沫样痰、脓性痰、痰中带血"),
            EvidenceDimension("痰量", "少、多"),
            EvidenceDimension("伴随症状", "伴发热、伴胸痛、伴咳血、伴脓痰、伴哮喘、伴呼吸困难"),
        ),
        differentials=(
            DifferentialEntry(
                disease_name="上呼吸道感染",
                features=("起病较急，几天", "咳嗽、咽干、咽痒，伴鼻塞、喷嚏、流清涕"),
                examinations=("血常规：白细胞计数正常或偏低，淋巴细胞比例偏高",),
            ),
            DifferentialEntry(
                disease_name="急性支气管炎",
                features=("常起病较急，发生于寒冷季节或气候突变时", "初为干咳或少量黏痰"),
                examinations=("血常规", "X线胸片：肺纹理增强"),
            ),
            DifferentialEntry(
                disease_name="肺部感染性疾病",
                features=("咳嗽、咳痰或原有呼吸道症状加重", "脓性痰或血痰，大多数病人有发热"),
                examinations=("血培养和痰培养", "X线胸片：肺实质浸润"),
            ),
        ),
    )


@pytest.fixture(scope="session")
def zh_block_text() -> str:
    """Canonical Chinese seven-field physician turn."""
    return (
        "【已知信息】\n"
        "咳嗽3-4天，干咳伴咽痒，无痰、无发热、无鼻塞流涕，术后伤口无胸痛或呼吸困难，未接触过敏原。\n\n"
        "【待解决用户需求】\n"
        "明确咳嗽病因，排除感染或术后并发症，指导用药及伤口护理。\n\n"
        "【已提供给用户信息】\n"
        "已排除过敏性鼻炎典型症状（鼻塞流涕），建议使用右美沙芬止咳，伤口需碘伏消毒。\n\n"
        "【诊断】\n"
        "急性支气管炎\n\n"
        "【待收集信息】\n"
        "咳嗽是否伴有胸痛或呼吸困难？术后伤口是否有红肿加重或脓液？\n\n"
        "【回复策略】\n"
        "聚焦关键点（胸痛/呼吸困难提示肺部感染，伤口感染需急诊），同步强化居家护理建议。\n\n"
        "【回复】\n"
        "请问咳嗽时是否伴有胸痛或呼吸困难？术后伤口目前是否有红肿加重或脓液？\n\n"
        "建议继续使用右美沙芬止咳糖浆（具体用法遵说明书），保持空气湿润，多饮温水。"
        "术后伤口需每日碘伏消毒，若出现红肿加重、脓液或发热，请立即就医。\n"
    )


@pytest.fixture(scope="session")
def en_block_text() -> str:
    """English-dialect physician turn."""
    return (
        "[Known Information]\n"
        "Cough for 3-4 days, dry cough with itchy throat, no sputum, no fever.\n\n"
        "[User Needs to Address]\n"
        "Identify the cause of cough, exclude infection, provide guidance.\n\n"
        "[Information Provided to User]\n"
        "Excluded typical allergic rhinitis symptoms, advised a cough suppressant.\n\n"
        "[Diagnosis]\n"
        "Acute Bronchitis\n\n"
        "[Information to Collect]\n"
        "Chest pain or difficulty breathing? Worsening redness or pus at the wound?\n\n"
        "[Response Strategy]\n"
        "Focus on key red flags while reinforcing home care advice.\n\n"
        "[Response]\n"
        "Does the cough come with chest pain or difficulty breathing?\n"
    )


@pytest.fixture(scope="session")
def sample_profile() -> PatientProfile:
    return PatientProfile(
        profile_id="case-0001",
        age=45,
        sex="male",
        personality="较为顺从，对医生建议接受度高，但因病情反复而略显沮丧。",
        tone="语气平和但带有担忧，对治疗效果和未来预后表示关心。",
        utterance_length_hint=(25, 45),
        symptoms="右肺中叶见磨玻璃样小结节，伴有长期干咳，夜间加重，有过敏性鼻炎史，偶有咽痛，吸烟。",
        ground_truth_diagnoses=("咳嗽变异性哮喘", "肺部磨玻璃结节"),
        other_history="使用吸入性糖皮质激素后症状减轻，但停药后易复发，有10年吸烟史。",
        opening_line="最近三个月一直干咳乏力。",
    )


@pytest.fixture(scope="session")
def prompt_lib() -> PromptLibrary:
    return PromptLibrary()
