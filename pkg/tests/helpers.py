import numpy as np

from simtrx.cascade import BasebandChannelStats


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_stats(rng, U=3, M=4, distortion=0.1) -> BasebandChannelStats:
    h = crandn(rng, U, M)
    C = np.empty((U, M, M), dtype=complex)
    for u in range(U):
        B = crandn(rng, M, M)
        C[u] = distortion * B @ B.conj().T / M
    return BasebandChannelStats(h, C)
