"""Parsing the seven-field physician turn and extracting diagnosis names."""

from clinquiry import ZH_DIALECT, extract_diagnosis_names, parse_block, serialize_block
from clinquiry.template import EN_DIALECT

raw = """好的，我按照模板来回答。

【已知信息】
咳嗽3-4天，干咳伴咽痒，无痰、无发热。

【待解决用户需求】
明确咳嗽病因，指导用药。

【已提供给用户信息】
已建议多饮温水、保持空气湿润。

【诊断】
初步诊断：急性支气管炎。

【待收集信息】
是否伴胸痛或呼吸困难。

【回复策略】
聚焦关键确认问题，同步给出居家护理建议。

【回复】
请问咳嗽时是否伴有胸痛或呼吸困难？建议多饮温水，若症状加重请及时就医。
"""

block = parse_block(raw, ZH_DIALECT)
print("parsed fields:")
for name, value in block.as_dict().items():
    print(f"  {name:22} {value[:30]}{'…' if len(value) > 30 else ''}")

print("\ndiagnosis names (qualifier prefixes and trailing punctuation stripped):")
print(" ", extract_diagnosis_names(block))

multi = parse_block(raw.replace("初步诊断：急性支气管炎。", "上呼吸道感染、急性支气管炎；肺炎"), ZH_DIALECT)
print(" ", extract_diagnosis_names(multi))

print("\nround trip: serialize then reparse gives the identical block")
assert parse_block(serialize_block(block, ZH_DIALECT), ZH_DIALECT) == block
print("  ok (zh)")
assert parse_block(serialize_block(block, EN_DIALECT), EN_DIALECT) == block
print("  ok (en markers, same content)")
