from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from clinquiry.template import (
    EN_DIALECT,
    FIELD_NAMES,
    ZH_DIALECT,
    DuplicateField,
    MissingField,
    ReasoningBlock,
    TemplateDialect,
    TemplateError,
    extract_diagnosis_names,
    get_dialect,
    load_dialect,
    parse_block,
    serialize_block,
    validate_block,
)


class TestParse:
    def test_canonical_zh_fixture(self, zh_block_text):
        block = parse_block(zh_block_text, ZH_DIALECT)
        assert "急性支气管炎" in block.diagnoses
        assert block.known_information.startswith("咳嗽3-4天")
        assert "伤口感染需急诊" in block.response_strategy
        assert block.inquiry.endswith("请立即就医。")

    def test_canonical_en_fixture(self, en_block_text):
        block = parse_block(en_block_text, EN_DIALECT)
        assert "Acute Bronchitis" in block.diagnoses
        assert block.inquiry.startswith("Does the cough")

    def test_leading_and_trailing_chatter_tolerated(self, zh_block_text):
        noisy = "好的，我来按模板回答。\n\n" + zh_block_text
        block = parse_block(noisy, ZH_DIALECT)
        assert "急性支气管炎" in block.diagnoses

    def test_missing_response_marker(self, zh_block_text):
        truncated = zh_block_text[: zh_block_text.index("【回复】")]
        with pytest.raises(MissingField) as exc_info:
            parse_block(truncated, ZH_DIALECT)
        assert exc_info.value.field_name == "inquiry"

    @pytest.mark.parametrize("drop_index", range(7))
    def test_missing_any_marker(self, zh_block_text, drop_index):
        marker = ZH_DIALECT.markers[drop_index]
        broken = zh_block_text.replace(marker, "※※", 1)
        with pytest.raises(MissingField) as exc_info:
            parse_block(broken, ZH_DIALECT)
        assert exc_info.value.field_name == FIELD_NAMES[drop_index]

    def test_duplicate_marker(self, zh_block_text):
        doubled = zh_block_text + "\n【诊断】\n再次诊断\n"
        with pytest.raises(DuplicateField) as exc_info:
            parse_block(doubled, ZH_DIALECT)
        assert exc_info.value.field_name == "diagnoses"

    def test_unknown_markers_kept_as_content(self):
        text = "".join(
            f"{marker}\n内容{i}【注意】保留\n" for i, marker in enumerate(ZH_DIALECT.markers)
        )
        block = parse_block(text, ZH_DIALECT)
        assert "【注意】" in block.known_information

    def test_parse_is_total(self):
        # Arbitrary junk either parses or raises a TemplateError, never crashes.
        for junk in ("", "随便说点什么", "【已知信息】only one marker", "{}[]【】"):
            with pytest.raises(TemplateError):
                parse_block(junk, ZH_DIALECT)


class TestRoundTrip:
    def test_fixture_round_trip(self, zh_block_text):
        block = parse_block(zh_block_text, ZH_DIALECT)
        assert parse_block(serialize_block(block, ZH_DIALECT), ZH_DIALECT) == block

    def test_cross_dialect_round_trip(self, en_block_text):
        block = parse_block(en_block_text, EN_DIALECT)
        # Serializing under zh and reparsing preserves content.
        assert parse_block(serialize_block(block, ZH_DIALECT), ZH_DIALECT) == block

    # Field content free of this dialect's markers and already trimmed;
    # parse always trims, so that is the canonical form.
    _field_text = st.text(
        alphabet=st.characters(blacklist_characters="【】[]"), min_size=0, max_size=40
    ).map(str.strip)

    @given(values=st.lists(_field_text, min_size=7, max_size=7))
    def test_generated_round_trip(self, values):
        block = ReasoningBlock(**dict(zip(FIELD_NAMES, values)))
        for dialect in (ZH_DIALECT, EN_DIALECT):
            assert parse_block(serialize_block(block, dialect), dialect) == block


class TestDialect:
    def test_markers_must_be_distinct(self):
        with pytest.raises(ValueError):
            TemplateDialect(locale="bad", markers=("【a】",) * 7)

    def test_marker_count_enforced(self):
        with pytest.raises(ValueError):
            TemplateDialect(locale="bad", markers=("【a】", "【b】"))

    def test_load_dialect_from_file(self, tmp_path):
        path = tmp_path / "pirate.json"
        path.write_text(
            json.dumps({"locale": "pirate", "markers": [f"<<{n}>>" for n in FIELD_NAMES]}),
            encoding="utf-8",
        )
        dialect = load_dialect(path)
        assert dialect.locale == "pirate"
        block = ReasoningBlock(inquiry="arr", diagnoses="scurvy")
        assert parse_block(serialize_block(block, dialect), dialect) == block

    def test_builtin_registry(self):
        assert get_dialect("zh") is ZH_DIALECT
        assert get_dialect("en") is EN_DIALECT
        with pytest.raises(KeyError):
            get_dialect("klingon")


class TestValidation:
    def test_empty_inquiry_flagged(self):
        assert validate_block(ReasoningBlock(diagnoses="x")) != []
        assert validate_block(ReasoningBlock(inquiry="请问？")) == []


class TestDiagnosisExtraction:
    def test_qualifier_prefix_stripped(self):
        block = ReasoningBlock(diagnoses="Preliminary diagnosis: Allergic rhinitis.", inquiry="q")
        assert extract_diagnosis_names(block) == ["Allergic rhinitis"]

    def test_zh_qualifier_prefix_stripped(self):
        block = ReasoningBlock(diagnoses="初步诊断：过敏性鼻炎。", inquiry="q")
        assert extract_diagnosis_names(block) == ["过敏性鼻炎"]

    def test_delimiter_split(self):
        block = ReasoningBlock(diagnoses="A、B；C", inquiry="q")
        assert extract_diagnosis_names(block) == ["A", "B", "C"]

    def test_empty_is_legal(self):
        assert extract_diagnosis_names(ReasoningBlock(inquiry="q")) == []

    def test_mixed_delimiters_and_blanks(self):
        block = ReasoningBlock(diagnoses="疑似肺炎,  \n急性支气管炎；；", inquiry="q")
        assert extract_diagnosis_names(block) == ["肺炎", "急性支气管炎"]

    def test_custom_prefix_list(self):
        block = ReasoningBlock(diagnoses="maybe flu", inquiry="q")
        assert extract_diagnosis_names(block, qualifier_prefixes=("maybe",)) == ["flu"]
