import json

import pytest

from smda.augment import (
    AugmentError,
    ParaphraseProvider,
    balance_minority,
    load_lexicon,
    load_paraphrase_table,
    pair_unlabeled,
    paraphrase,
)
from smda.corpus import SUPPORT_TASKS, TASKS, make_example

IDENTITY = ParaphraseProvider(mode="rule", swap_prob=0.0, drop_prob=0.0, lexicon={})


def _labels(**on):
    return {t: int(on.get(t, 0)) for t in TASKS}


def test_file_backed_returns_table_entry():
    provider = ParaphraseProvider(mode="file", table={"s1": ["I hope you have a good day."]})
    (out,) = paraphrase(make_example("s1", "Hope you have a nice day."), provider, 1)
    assert out.text == "I hope you have a good day."
    assert out.id == "s1#aug0"


def test_file_backed_miss_names_id():
    provider = ParaphraseProvider(mode="file", table={"s1": ["x"]})
    with pytest.raises(AugmentError, match="s2"):
        paraphrase(make_example("s2", "y"), provider, 1)
    with pytest.raises(AugmentError, match="s1"):
        paraphrase(make_example("s1", "y"), provider, 2)


def test_identity_rule_provider():
    ex = make_example("a", "Hope you have a nice day.")
    assert [p.text for p in paraphrase(ex, IDENTITY, 3)] == [ex.text] * 3


def test_rule_provider_is_deterministic_and_varies():
    provider = ParaphraseProvider(mode="rule", swap_prob=0.3, drop_prob=0.2, lexicon={"nice": ["good", "pleasant"]}, seed=5)
    ex = make_example("a", "hope you have a really nice and calm day today")
    first = [p.text for p in paraphrase(ex, provider, 4)]
    assert first == [p.text for p in paraphrase(ex, provider, 4)]
    assert len(set(first)) > 1
    assert all(t.strip() for t in first)


def test_paraphrase_copies_labels():
    ex = make_example("a", "some text here", _labels(Support=1))
    for p in paraphrase(ex, IDENTITY, 2):
        assert p.labels == ex.labels


def test_balance_count_law_single_task():
    train = [make_example(f"p{i}", "x y", _labels(Information_support=1)) for i in range(10)]
    train += [make_example(f"n{i}", "x y", _labels()) for i in range(7)]
    out = balance_minority(train, ["Information_support"], IDENTITY, k=4)
    assert sum(e.labels["Information_support"] for e in out) == 50
    assert len(out) == 17 + 40
    assert out[:17] == train


def test_balance_k_zero_is_identity():
    train = [make_example("a", "x", _labels(General_support=1))]
    assert balance_minority(train, SUPPORT_TASKS, IDENTITY, k=0) == train


def test_multi_positive_example_augmented_once():
    # counting oracle on a 5-example toy set
    toy = [
        make_example("a", "t", _labels(General_support=1, Emotional_support=1)),
        make_example("b", "t", _labels(Information_support=1)),
        make_example("c", "t", _labels(Support=1)),
        make_example("d", "t", _labels()),
        make_example("e", "t", _labels(General_support=1, Information_support=1, Emotional_support=1)),
    ]
    out = balance_minority(toy, SUPPORT_TASKS, IDENTITY, k=4)
    qualifying = [ex for ex in toy if any(ex.labels[t] for t in SUPPORT_TASKS)]
    assert len(qualifying) == 3
    assert len(out) == 5 + 4 * len(qualifying)
    assert sum(1 for e in out if e.id.startswith("a#")) == 4
    for e in out[5:]:
        assert e.labels == next(x for x in toy if e.id.startswith(x.id + "#")).labels


def test_balance_rejects_unknown_task():
    with pytest.raises(AugmentError):
        balance_minority([], ["Nope"], IDENTITY)


def test_pair_unlabeled_bijection():
    unl = [make_example(f"u{i}", f"sentence number {i}") for i in range(100)]
    pairs = pair_unlabeled(unl, IDENTITY)
    assert len(pairs) == 100
    assert [p.original.id for p in pairs] == [u.id for u in unl]
    assert len({p.augmented.id for p in pairs}) == 100
    assert all(p.augmented.text == p.original.text for p in pairs)
    assert all(p.augmented.labels is None for p in pairs)
    assert pair_unlabeled([], IDENTITY) == []


def test_table_and_lexicon_files(tmp_path):
    (tmp_path / "p.jsonl").write_text(json.dumps({"id": "a", "paraphrases": ["x", "y"]}) + "\n", encoding="utf-8")
    assert load_paraphrase_table(tmp_path / "p.jsonl") == {"a": ["x", "y"]}
    (tmp_path / "bad.jsonl").write_text('{"id": "a"}\n', encoding="utf-8")
    with pytest.raises(AugmentError, match="line 1"):
        load_paraphrase_table(tmp_path / "bad.jsonl")
    (tmp_path / "lex.tsv").write_text("nice\tgood\nnice\tfine\n", encoding="utf-8")
    assert load_lexicon(tmp_path / "lex.tsv") == {"nice": ["good", "fine"]}
