"""Pure-numpy fallback for the SIC chain kernel in ``_sic.pyx``."""
import numpy as np


def _one_trial(d2, fading, half_alpha, K):
    out = np.full(K, np.inf)
    npts = d2.size
    kk = min(K, npts)
    if kk == 0:
        return out
    if kk < npts:
        near = np.argpartition(d2, kk - 1)[:kk]
    else:
        near = np.arange(npts)
    near = near[np.argsort(d2[near], kind="stable")]

    power = fading * d2**-half_alpha
    far = np.ones(npts, dtype=bool)
    far[near] = False
    interf = float(power[far].sum())
    for j in range(kk - 1, -1, -1):
        p = power[near[j]]
        out[j] = p / interf if interf > 0.0 else np.inf
        interf += p
    return out


def sir_layers_batch(d2, fading, offsets, alpha, K):
    d2 = np.asarray(d2, dtype=np.float64)
    fading = np.asarray(fading, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    T = offsets.size - 1
    result = np.empty((T, K))
    half_alpha = 0.5 * alpha
    for t in range(T):
        lo, hi = offsets[t], offsets[t + 1]
        result[t] = _one_trial(d2[lo:hi], fading[lo:hi], half_alpha, K)
    return result
