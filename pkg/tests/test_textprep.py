import numpy as np
import pytest
from hypothesis import given, strategies as st

from hinglishqe.corpus import Example
from hinglishqe.errors import DataError
from hinglishqe.seeding import substream
from hinglishqe.textprep import (
    PAD_INDEX, PAD_TOKEN, UNK_INDEX, UNK_TOKEN, EmbeddingSet, VocabSet,
    build_vocab, build_vocabs, encode_example, encode_multihot,
    encode_sequence, export_vocabulary, load_embeddings, random_table,
    tokenize,
)


def test_tokenize_cases():
    assert tokenize("I am going home.") == ["i", "am", "going", "home"]
    assert tokenize("") == []
    assert tokenize("main ghar ja raha hoon") == ["main", "ghar", "ja", "raha", "hoon"]


def test_tokenize_devanagari_untouched():
    assert tokenize("मैं घर जा रहा हूँ।") == ["मैं", "घर", "जा", "रहा", "हूँ"]


def test_tokenize_keeps_internal_punctuation():
    assert tokenize("don't stop!") == ["don't", "stop"]
    assert tokenize("...  ,,") == []


def test_build_vocab_ordering():
    vocab = build_vocab(["a b", "a c"], min_count=1)
    assert vocab.token_to_index == {PAD_TOKEN: 0, UNK_TOKEN: 1, "a": 2, "b": 3, "c": 4}


def test_build_vocab_min_count_filter():
    vocab = build_vocab(["a b", "a c"], min_count=2)
    assert vocab.token_to_index == {PAD_TOKEN: 0, UNK_TOKEN: 1, "a": 2}
    assert vocab.counts["b"] == 1  # counts retained even when filtered


def test_build_vocab_empty_corpus():
    vocab = build_vocab([], min_count=1)
    assert vocab.token_to_index == {PAD_TOKEN: 0, UNK_TOKEN: 1}


def test_build_vocab_deterministic():
    texts = ["d c b a", "b a", "c a b"]
    v1, v2 = build_vocab(texts), build_vocab(texts)
    assert v1.token_to_index == v2.token_to_index


def test_vocab_export_and_hash(tmp_path):
    vocab = build_vocab(["b a a"])
    out = tmp_path / "vocab.txt"
    export_vocabulary(vocab, out)
    assert out.read_text(encoding="utf-8").splitlines() == [PAD_TOKEN, UNK_TOKEN, "a", "b"]
    assert vocab.sha256() == build_vocab(["a b a"]).sha256()


def write_vectors(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_embeddings_direct_copy(tmp_path):
    vocab = build_vocab(["home sweet"])
    path = write_vectors(tmp_path / "glove.txt",
                         ["home 0.1 0.2 0.3", "unrelated 9 9 9"])
    table = load_embeddings(path, vocab, 3, substream(0, "embedding-fallback"))
    np.testing.assert_array_equal(table.vectors[vocab.index("home")], [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(table.vectors[PAD_INDEX], np.zeros(3))


def test_load_embeddings_fallback_seeded(tmp_path):
    vocab = build_vocab(["home sweet"])
    path = write_vectors(tmp_path / "glove.txt", ["home 0.1 0.2 0.3"])
    t1 = load_embeddings(path, vocab, 3, substream(7, "embedding-fallback"))
    t2 = load_embeddings(path, vocab, 3, substream(7, "embedding-fallback"))
    missing = vocab.index("sweet")
    np.testing.assert_array_equal(t1.vectors[missing], t2.vectors[missing])
    assert (np.abs(t1.vectors[missing]) <= 0.05).all()
    assert (t1.vectors[missing] != 0).any()
    assert (t1.vectors[UNK_INDEX] != 0).any()  # UNK also gets a fallback row


def test_load_embeddings_coverage(tmp_path):
    vocab = build_vocab(["a b c d"])  # 4 regular tokens
    path = write_vectors(tmp_path / "g.txt", ["a 1.0", "b 2.0", "zzz 3.0"])
    table = load_embeddings(path, vocab, 1, substream(0, "embedding-fallback"))
    assert table.coverage == pytest.approx(2 / 4)


def test_load_embeddings_dimension_mismatch(tmp_path):
    vocab = build_vocab(["home"])
    path = write_vectors(tmp_path / "g.txt", ["home 1 2 3 4"])
    with pytest.raises(DataError, match=r"g\.txt:1: 4 values, expected 3"):
        load_embeddings(path, vocab, 3, substream(0, "x"))


def test_load_embeddings_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_embeddings(tmp_path / "none.txt", build_vocab([]), 3, substream(0, "x"))


def test_random_table_covers_everything_but_pad():
    vocab = build_vocab(["a b"])
    table = random_table(vocab, 4, substream(1, "embedding-fallback"))
    np.testing.assert_array_equal(table.vectors[PAD_INDEX], np.zeros(4))
    assert (table.vectors[1:] != 0).any(axis=1).all()
    assert table.coverage == 0.0


def make_table(vocab, dim=3, seed=0):
    return random_table(vocab, dim, substream(seed, "embedding-fallback"))


def test_encode_sequence_padding_and_truncation():
    vocab = build_vocab(["home alone again today forever more"])
    table = make_table(vocab)
    seq, length = encode_sequence(["home"], vocab, table, max_len=3)
    assert length == 1
    np.testing.assert_array_equal(seq[0], table.vectors[vocab.index("home")])
    np.testing.assert_array_equal(seq[1:], np.zeros((2, 3)))

    seq, length = encode_sequence([], vocab, table, max_len=3)
    assert length == 0
    np.testing.assert_array_equal(seq, np.zeros((3, 3)))

    tokens = ["home", "alone", "again", "today", "forever"]
    seq, length = encode_sequence(tokens, vocab, table, max_len=3)
    assert length == 3
    for t, tok in enumerate(tokens[:3]):
        np.testing.assert_array_equal(seq[t], table.vectors[vocab.index(tok)])


def test_encode_sequence_unknown_token_uses_unk_row():
    vocab = build_vocab(["home"])
    table = make_table(vocab)
    seq, _ = encode_sequence(["mystery"], vocab, table, max_len=2)
    np.testing.assert_array_equal(seq[0], table.vectors[UNK_INDEX])


def test_encode_multihot_cases():
    vocab = build_vocab(["a a b c"])  # {pad, unk, a, b, c}
    np.testing.assert_array_equal(encode_multihot(["a", "a", "b"], vocab),
                                  [0, 0, 1, 1, 0])
    np.testing.assert_array_equal(encode_multihot([], vocab), np.zeros(5))
    np.testing.assert_array_equal(encode_multihot(["z"], vocab), [0, 1, 0, 0, 0])


@given(st.lists(st.sampled_from(["a", "b", "c", "z", "q"]), max_size=12))
def test_encode_multihot_order_and_multiplicity_invariant(tokens):
    vocab = build_vocab(["a b c"])
    base = encode_multihot(tokens, vocab)
    np.testing.assert_array_equal(base, encode_multihot(sorted(tokens), vocab))
    np.testing.assert_array_equal(base, encode_multihot(tokens + tokens, vocab))
    assert set(np.unique(base)) <= {0.0, 1.0}


@given(st.lists(st.sampled_from(["a", "b", "c", "d", "zz"]), max_size=9),
       st.integers(min_value=1, max_value=6))
def test_encode_sequence_rows_beyond_length_zero(tokens, max_len):
    vocab = build_vocab(["a b c d"])
    table = make_table(vocab)
    seq, length = encode_sequence(tokens, vocab, table, max_len)
    assert length == min(len(tokens), max_len)
    assert (seq[length:] == 0).all()


def test_encode_example_selects_task_label():
    ex = Example("go home", "घर जाओ", "ghar jao", avg_rating_label=7, disagreement_label=2)
    vocabs = build_vocabs([ex])
    embeddings = EmbeddingSet(english=make_table(vocabs.english, dim=4),
                              hindi=make_table(vocabs.hindi, dim=4, seed=1))
    enc_avg = encode_example(ex, "average_rating", vocabs, embeddings, max_len=5)
    enc_dis = encode_example(ex, "disagreement", vocabs, embeddings, max_len=5)
    assert enc_avg.label == 7 and enc_dis.label == 2
    assert enc_avg.english_seq.shape == (5, 4)
    assert enc_avg.english_len == 2 and enc_avg.hindi_len == 2
    assert enc_avg.hinglish_multihot.sum() == 2
    with pytest.raises(ValueError, match="unknown task"):
        encode_example(ex, "nope", vocabs, embeddings, 5)


def test_build_vocabs_streams_are_separate():
    ex = Example("home", "घर", "ghar", 0, 0)
    vocabs = build_vocabs([ex])
    assert isinstance(vocabs, VocabSet)
    assert "home" in vocabs.english and "home" not in vocabs.hindi
    assert "ghar" in vocabs.hinglish
