"""Pure-NumPy implementations of the per-sample hot kernels.

Mirrors the signatures of the compiled extension `oda._kernels`; one of the
two is selected at import time by `oda._backend`. Arrays are float64,
C-contiguous, and modified in place.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def divergence_row(kind_code, floor, x, mu, out):
    """out[i] = d(x, mu[i]). kind_code 0: squared Euclidean, 1: generalized KL."""
    if kind_code == 0:
        diff = mu - x
        np.einsum("ij,ij->i", diff, diff, out=out)
    else:
        xc = np.maximum(x, floor)
        yc = np.maximum(mu, floor)
        np.sum(xc * (np.log(xc) - np.log(yc)) - xc + yc, axis=1, out=out)


def gibbs_weights(div, rho, temperature, out):
    """Mass-weighted Gibbs association over one divergence row.

    out[i] = rho[i] * exp(-div[i]/T), normalized; the max exponent is
    subtracted before exponentiation. Returns the unnormalized total
    (0.0 signals a degenerate state; out is then unspecified).
    """
    e = div * (-1.0 / temperature)
    e -= e.max()
    np.exp(e, out=e)
    np.multiply(rho, e, out=out)
    total = out.sum()
    if total > 0.0:
        out /= total
    return float(total)


def sa_update(kind_code, floor, x, mu, rho, sigma, smask, temperature, alpha, work):
    """One fused stochastic-approximation step for a single observation.

    Computes the divergence row and Gibbs association into `work`, then
    applies, for every codevector i:

        rho[i]   += alpha * (smask[i] * p[i] - rho[i])
        sigma[i] += alpha * (smask[i] * p[i] * x - sigma[i])
        mu[i]     = sigma[i] / rho[i]          (skipped where rho[i] == 0)

    Returns the unnormalized Gibbs total; 0.0 means the state was
    degenerate and nothing was updated.
    """
    divergence_row(kind_code, floor, x, mu, work)
    total = gibbs_weights(work, rho, temperature, work)
    if total <= 0.0:
        return 0.0
    gain = alpha * smask * work
    rho *= 1.0 - alpha
    rho += gain
    sigma *= 1.0 - alpha
    sigma += gain[:, None] * x[None, :]
    live = rho > 0.0
    np.divide(sigma, rho[:, None], out=mu, where=live[:, None])
    return total
