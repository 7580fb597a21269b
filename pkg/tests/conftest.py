import warnings

import numpy as np
import pytest

from learned_joins import DatasetSpec, Relation, gen_dataset, make_relation

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session")
def dataset_cache():
    """Session-wide memo of generated datasets keyed by spec fields."""
    cache = {}

    def get(kind, n, seed, **kw) -> np.ndarray:
        key = (kind, n, seed, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = gen_dataset(DatasetSpec(kind, n, seed, **kw))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def relation_cache(dataset_cache):
    cache = {}

    def get(kind, n, seed, payload_seed=1) -> Relation:
        key = (kind, n, seed, payload_seed)
        if key not in cache:
            cache[key] = make_relation(dataset_cache(kind, n, seed), payload_seed)
        return cache[key]

    return get
