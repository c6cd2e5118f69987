import numpy as np
import pytest

from gtwc.model import ChannelParams, EncoderPair, NativeEncoderPair, subdiag_matrix


def random_encoder(rng, n, scale=0.5, structured=False, sigmas=(1.0, 0.5)):
    """Encoder with Gaussian entries; ``structured`` keeps a single relay subdiagonal."""
    g1 = rng.normal(size=n)
    g2 = rng.normal(size=n)
    f1 = np.tril(rng.normal(0.0, scale, (n, n)), -1)
    if structured:
        f2 = subdiag_matrix(rng.normal(0.0, scale, n - 1), n)
    else:
        f2 = np.tril(rng.normal(0.0, scale, (n, n)), -1)
    return EncoderPair(g1, f1, g2, f2, f2_structured=structured), ChannelParams(n, *sigmas)


def random_native(rng, n, scale=0.5):
    return NativeEncoderPair(
        rng.normal(size=n),
        np.tril(rng.normal(0.0, scale, (n, n)), -1),
        rng.normal(size=n),
        np.tril(rng.normal(0.0, scale, (n, n)), -1),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
