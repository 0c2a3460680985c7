import numpy as np
import pytest

from hinglishqe.corpus import DatasetSplit, to_example
from hinglishqe.seeding import substream
from hinglishqe.textprep import EmbeddingSet, build_vocabs, random_table
from hinglishqe.training import TrainConfig

from synthcorpus import synth_records


def tiny_train_config(**overrides):
    base = dict(batch_size=8, epochs=4, seed=11, embedding_dim=6, hidden=4,
                hidden2=4, dense=5, max_len=8, min_count=1)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def tiny_setup():
    """A small synthetic split with vocabularies and random embedding tables."""
    config = tiny_train_config()
    train = [to_example(r) for r in synth_records(48, seed=1)]
    val = [to_example(r) for r in synth_records(16, seed=2)]
    test = [to_example(r) for r in synth_records(16, seed=3)]
    split = DatasetSplit(train=train, validation=val, test=test)
    vocabs = build_vocabs(train, min_count=config.min_count)
    embeddings = EmbeddingSet(
        english=random_table(vocabs.english, config.embedding_dim,
                             substream(config.seed, "emb-en")),
        hindi=random_table(vocabs.hindi, config.embedding_dim,
                           substream(config.seed, "emb-hi")),
    )
    return config, split, vocabs, embeddings
