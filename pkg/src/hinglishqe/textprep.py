"""Tokenization, vocabularies, embedding tables and input encoding.

English and Hindi sentences become padded sequences of pretrained word
vectors (GloVe text layout); Hinglish sentences become a bag-of-tokens
multi-hot presence vector over their own vocabulary.
"""

import hashlib
import logging
import unicodedata
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list:
    """Lowercase, whitespace-split, strip edge punctuation, drop empties.

    Lowercasing only affects cased scripts; Devanagari passes through.
    """
    tokens = []
    for piece in text.lower().split():
        piece = _strip_punct(piece)
        if piece:
            tokens.append(piece)
    return tokens


@dataclass
class Vocabulary:
    """Dense token->index map; index 0 is padding, index 1 the OOV bucket."""
    token_to_index: dict
    counts: dict

    def __len__(self):
        return len(self.token_to_index)

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_INDEX)

    def __contains__(self, token):
        return token in self.token_to_index

    def tokens(self) -> list:
        """All tokens ordered by index (PAD and UNK included)."""
        return sorted(self.token_to_index, key=self.token_to_index.get)

    def sha256(self) -> str:
        payload = "\n".join(self.tokens()).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_vocab(texts, min_count: int = 1) -> Vocabulary:
    """Count tokens over `texts`; keep those seen >= min_count times.

    Indices follow descending count, ties broken lexicographically, after
    the two reserved slots.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = {}
    for text in texts:
        for token in tokenize(text):
            counts[token] = counts.get(token, 0) + 1
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    token_to_index = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
    for token in kept:
        token_to_index[token] = len(token_to_index)
    return Vocabulary(token_to_index=token_to_index, counts=counts)


def export_vocabulary(vocab: Vocabulary, path) -> None:
    Path(path).write_text("\n".join(vocab.tokens()) + "\n", encoding="utf-8")


@dataclass
class EmbeddingTable:
    dimension: int
    vectors: np.ndarray  # vocab size x dimension, row PAD_INDEX all zero
    coverage: float      # fraction of non-special vocab tokens found in the file


def _fallback_rows(table: np.ndarray, missing, rng: np.random.Generator) -> None:
    for idx in missing:
        table[idx] = rng.uniform(-0.05, 0.05, size=table.shape[1])


def load_embeddings(path, vocab: Vocabulary, dimension: int,
                    rng: np.random.Generator) -> EmbeddingTable:
    """Load word vectors in text layout: token then `dimension` reals per line.

    Vocab tokens absent from the file (including the OOV bucket) get seeded
    uniform [-0.05, 0.05] rows; the padding row stays zero.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    if dimension < 1:
        raise ValueError(f"dimension must be >= 1, got {dimension}")
    vectors = np.zeros((len(vocab), dimension), dtype=np.float64)
    found = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) <= 1 and not line.strip():
                continue
            if len(parts) != dimension + 1:
                raise DataError(f"{path}:{line_num}: {len(parts) - 1} values, "
                                f"expected {dimension}")
            token = parts[0]
            if token not in vocab.token_to_index or token in (PAD_TOKEN,):
                continue
            idx = vocab.token_to_index[token]
            try:
                vectors[idx] = [float(v) for v in parts[1:]]
            except ValueError:
                raise DataError(f"{path}:{line_num}: non-numeric vector entry") from None
            found.add(idx)
    missing = [i for i in range(len(vocab))
               if i != PAD_INDEX and i not in found]
    _fallback_rows(vectors, missing, rng)
    n_regular = len(vocab) - 2
    coverage = (len(found - {UNK_INDEX}) / n_regular) if n_regular > 0 else 0.0
    log.info("embeddings %s: dimension=%d coverage=%.3f", path.name, dimension, coverage)
    return EmbeddingTable(dimension=dimension, vectors=vectors, coverage=coverage)


def random_table(vocab: Vocabulary, dimension: int,
                 rng: np.random.Generator) -> EmbeddingTable:
    """Fully seeded-random table for streams without a pretrained file."""
    vectors = np.zeros((len(vocab), dimension), dtype=np.float64)
    _fallback_rows(vectors, [i for i in range(len(vocab)) if i != PAD_INDEX], rng)
    return EmbeddingTable(dimension=dimension, vectors=vectors, coverage=0.0)


def encode_sequence(tokens, vocab: Vocabulary, table: EmbeddingTable,
                    max_len: int):
    """Pack token embeddings into a max_len x dimension matrix.

    Sequences longer than max_len keep their first max_len tokens; rows
    past the returned length are zero.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    out = np.zeros((max_len, table.dimension), dtype=np.float64)
    length = min(len(tokens), max_len)
    for t in range(length):
        out[t] = table.vectors[vocab.index(tokens[t])]
    return out, length


def encode_multihot(tokens, vocab: Vocabulary) -> np.ndarray:
    """Binary presence vector over the vocabulary; OOV tokens light the UNK slot."""
    out = np.zeros(len(vocab), dtype=np.float64)
    for token in tokens:
        out[vocab.index(token)] = 1.0
    out[PAD_INDEX] = 0.0
    return out


@dataclass
class EncodedExample:
    english_seq: np.ndarray   # max_len x dim
    hindi_seq: np.ndarray     # max_len x dim
    english_len: int
    hindi_len: int
    hinglish_multihot: np.ndarray
    label: int                # class index 0-9 for the selected task


@dataclass
class VocabSet:
    english: Vocabulary
    hindi: Vocabulary
    hinglish: Vocabulary


@dataclass
class EmbeddingSet:
    english: EmbeddingTable
    hindi: EmbeddingTable


def build_vocabs(examples, min_count: int = 1) -> VocabSet:
    return VocabSet(
        english=build_vocab((e.english for e in examples), min_count),
        hindi=build_vocab((e.hindi for e in examples), min_count),
        hinglish=build_vocab((e.hinglish for e in examples), min_count),
    )


def encode_example(example, task: str, vocabs: VocabSet,
                   embeddings: EmbeddingSet, max_len: int) -> EncodedExample:
    from . import TASK_AVERAGE_RATING, TASKS
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    eng, eng_len = encode_sequence(tokenize(example.english), vocabs.english,
                                   embeddings.english, max_len)
    hin, hin_len = encode_sequence(tokenize(example.hindi), vocabs.hindi,
                                   embeddings.hindi, max_len)
    multihot = encode_multihot(tokenize(example.hinglish), vocabs.hinglish)
    label = (example.avg_rating_label if task == TASK_AVERAGE_RATING
             else example.disagreement_label)
    return EncodedExample(english_seq=eng, hindi_seq=hin,
                          english_len=eng_len, hindi_len=hin_len,
                          hinglish_multihot=multihot, label=label)
