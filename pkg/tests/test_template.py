import pytest
from hypothesis import given
from hypothesis import strategies as st

from clozecast.errors import (
    EmptyInput,
    MissingEntity,
    SequenceTooLong,
    TemplateMalformed,
)
from clozecast.template import DOC_TEMPLATE, ENTITY_TEMPLATE, Template
from clozecast.tokenizer import Tokenizer

from .conftest import make_vocab


@pytest.fixture
def tokenizer(italian_tokenizer):
    return italian_tokenizer


class TestParse:
    def test_doc_template(self):
        template = Template.parse(DOC_TEMPLATE)
        assert not template.needs_entity

    def test_entity_template(self):
        template = Template.parse(ENTITY_TEMPLATE)
        assert template.needs_entity

    @pytest.mark.parametrize(
        "source",
        [
            "{text} senza maschera",
            "{text} due {mask} {mask}",
            "{mask} senza testo",
            "{text} {mask} {unknown}",
            "{text} {mask} parentesi { sciolta",
        ],
    )
    def test_malformed_rejected(self, source):
        with pytest.raises(TemplateMalformed):
            Template.parse(source)


class TestRenderDoc:
    def test_matches_manual_tokenization(self, tokenizer):
        template = Template.parse(DOC_TEMPLATE)
        prompt = template.render(tokenizer, "il comune delibera")
        vocab = tokenizer.vocab
        expected = (
            [vocab.cls_id]
            + tokenizer.text_ids("il comune delibera")
            + tokenizer.text_ids(". Questo documento parla di")
            + [vocab.mask_id]
            + tokenizer.text_ids(".")
            + [vocab.sep_id]
        )
        assert list(prompt.ids) == expected
        assert prompt.ids[prompt.mask_position] == vocab.mask_id
        assert not prompt.text_truncated

    def test_mask_id_inserted_directly(self, tokenizer):
        # The mask surface "[MASK]" would shatter under punctuation isolation,
        # so rendering must place the id itself.
        template = Template.parse("{text} {mask}")
        prompt = template.render(tokenizer, "comune")
        assert prompt.ids.count(tokenizer.vocab.mask_id) == 1

    def test_empty_text_rejected(self, tokenizer):
        template = Template.parse(DOC_TEMPLATE)
        with pytest.raises(EmptyInput):
            template.render(tokenizer, "  \n ")

    def test_long_text_truncates_but_keeps_mask(self, tokenizer):
        template = Template.parse(DOC_TEMPLATE)
        text = " ".join(["comune"] * 600)
        prompt = template.render(tokenizer, text)
        assert prompt.text_truncated
        assert len(prompt.ids) <= tokenizer.vocab.max_len
        assert prompt.ids[prompt.mask_position] == tokenizer.vocab.mask_id

    def test_budget_too_small_rejected(self, tokenizer):
        template = Template.parse(DOC_TEMPLATE)
        with pytest.raises(SequenceTooLong):
            template.render(tokenizer, "comune", max_len=9)

    def test_multiple_text_slots_share_budget(self, tokenizer):
        template = Template.parse("{text} {mask} {text}")
        # fixed = CLS + SEP + mask = 3; two slots; max_len 9 -> 3 each
        prompt = template.render(tokenizer, " ".join(["comune"] * 5), max_len=9)
        assert prompt.text_truncated
        assert len(prompt.ids) == 3 + 2 * 3


class TestRenderEntity:
    def test_entity_filled(self, tokenizer):
        template = Template.parse(ENTITY_TEMPLATE)
        prompt = template.render(tokenizer, "la delibera del comune", entity="comune")
        vocab = tokenizer.vocab
        assert prompt.ids[prompt.mask_position] == vocab.mask_id
        assert vocab.id_of("esempio") in prompt.ids

    def test_missing_entity_rejected(self, tokenizer):
        template = Template.parse(ENTITY_TEMPLATE)
        with pytest.raises(MissingEntity):
            template.render(tokenizer, "la delibera del comune")
        with pytest.raises(MissingEntity):
            template.render(tokenizer, "la delibera del comune", entity="   ")

    def test_entity_never_truncated(self, tokenizer):
        template = Template.parse(ENTITY_TEMPLATE)
        entity = "comune di natura"
        long_text = " ".join(["comune"] * 200)
        prompt = template.render(tokenizer, long_text, entity=entity)
        entity_ids = tokenizer.text_ids(entity)
        joined = ",".join(map(str, prompt.ids))
        assert ",".join(map(str, entity_ids)) in joined


class TestContentFree:
    def test_only_scaffolding_remains(self, tokenizer):
        template = Template.parse(DOC_TEMPLATE)
        prompt = template.render_content_free(tokenizer)
        vocab = tokenizer.vocab
        expected = (
            [vocab.cls_id]
            + tokenizer.text_ids(". Questo documento parla di")
            + [vocab.mask_id]
            + tokenizer.text_ids(".")
            + [vocab.sep_id]
        )
        assert list(prompt.ids) == expected
        assert prompt.ids[prompt.mask_position] == vocab.mask_id

    def test_scaffolding_overflow_rejected(self, tokenizer):
        template = Template.parse(DOC_TEMPLATE)
        with pytest.raises(SequenceTooLong):
            template.render_content_free(tokenizer, max_len=3)


class TestProperties:
    @given(n_words=st.integers(1, 120), max_len=st.integers(16, 64))
    def test_rendered_length_within_budget_with_mask(self, n_words, max_len):
        tokenizer = Tokenizer(
            make_vocab(
                [".", "questo", "documento", "parla", "di", "comune"], max_len=64
            )
        )
        template = Template.parse(DOC_TEMPLATE)
        prompt = template.render(
            tokenizer, " ".join(["comune"] * n_words), max_len=max_len
        )
        assert len(prompt.ids) <= max_len
        assert prompt.ids.count(tokenizer.vocab.mask_id) == 1
        assert prompt.ids[prompt.mask_position] == tokenizer.vocab.mask_id
