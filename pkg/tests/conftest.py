import numpy as np
import pytest

from scfem import sparsegrid as sg


def random_monotone_set(rng, dim, n_extra):
    """Grow a monotone index set from the root by repeatedly adding a
    uniformly chosen reduced-margin index."""
    s = sg.MultiIndexSet.root(dim)
    for _ in range(n_extra):
        rm = sg.reduced_margin(s)
        s = s.union([rm[rng.integers(len(rm))]])
    return s


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
