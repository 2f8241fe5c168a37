import numpy as np
import pytest

from tmct.data_model import LabelSpace, PrototypeBank, StreamSample
from tmct.numerics import l2_normalize


def make_space(n_a=2, n_o=3, n_seen=3):
    pairs = [(a, o) for a in range(n_a) for o in range(n_o)]
    return LabelSpace(
        attributes=[f"a{i}" for i in range(n_a)],
        objects=[f"o{j}" for j in range(n_o)],
        seen_pairs=pairs[:n_seen],
        unseen_pairs=pairs[n_seen:],
        test_pairs=pairs,
    )


def make_bank(space, dim=8, tau=0.1, seed=0):
    rng = np.random.default_rng(seed)
    proto = rng.normal(size=(space.num_test, dim))
    proto /= np.linalg.norm(proto, axis=1, keepdims=True)
    return PrototypeBank(proto=proto, temperature=tau)


def make_samples(space, dim=8, per_pair=4, seed=1):
    rng = np.random.default_rng(seed)
    out = []
    for a, o in space.test_pairs:
        for _ in range(per_pair):
            out.append(StreamSample(feature=l2_normalize(rng.normal(size=dim)),
                                    attr_idx=a, obj_idx=o))
    return out


@pytest.fixture
def small_space():
    return make_space()


@pytest.fixture
def small_bank(small_space):
    return make_bank(small_space)
