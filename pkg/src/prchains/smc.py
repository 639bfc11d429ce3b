"""Sequential Monte Carlo primitives: weight normalization, effective sample
size, multinomial resampling with weight reset, and parallel random-walk
Metropolis-Hastings rejuvenation.

All weight arithmetic is done in log space; ``normalize_log_weights`` is the
single place where weights are exponentiated, after subtracting the maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateWeightsError(RuntimeError):
    """Every log-weight is -inf; the particle cloud carries no mass."""


@dataclass(frozen=True)
class MHConfig:
    """Random-walk Metropolis-Hastings settings.

    ``steps`` chains steps are applied to every particle independently, with
    a symmetric Gaussian proposal of scale ``proposal_std``.
    """

    steps: int = 0
    proposal_std: float = 0.1

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.proposal_std <= 0:
            raise ValueError("proposal_std must be > 0")


def normalize_log_weights(log_weights):
    """Return (normalized weights summing to 1, log of the total weight).

    Stable for large negative inputs; -inf entries get weight 0. Raises
    DegenerateWeightsError when no entry is finite.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise ValueError("empty weight vector")
    m = np.max(lw)
    if not np.isfinite(m):
        raise DegenerateWeightsError("all log-weights are -inf")
    shifted = np.exp(lw - m)
    total = shifted.sum()
    return shifted / total, m + np.log(total)


def ess_inverse_sum(normalized_weights) -> float:
    """ESS estimate 1 / sum(w_i^2); equals M iff the weights are uniform."""
    w = np.asarray(normalized_weights, dtype=float)
    return 1.0 / np.sum(w * w)


def ess_inverse_max(normalized_weights) -> float:
    """ESS estimate 1 / max(w_i); equals M iff the weights are uniform."""
    w = np.asarray(normalized_weights, dtype=float)
    return 1.0 / np.max(w)


ESS_ESTIMATORS = {"sum": ess_inverse_sum, "max": ess_inverse_max}


def resample_multinomial(paths, normalized_weights, log_norm, m, rng):
    """Draw ``m`` particles with replacement proportional to the weights.

    Returns (resampled paths, reset log-weights, ancestor indices). Every
    reset log-weight equals ``log_norm - log(m)``, so the total weight mass
    is conserved exactly.
    """
    paths = np.asarray(paths)
    w = np.asarray(normalized_weights, dtype=float)
    ancestors = rng.choice(w.size, size=m, p=w)
    reset = np.full(m, log_norm - np.log(m))
    return paths[ancestors].copy(), reset, ancestors


def mh_rejuvenate(values, target_logpdf, config: MHConfig, rng):
    """Run ``config.steps`` random-walk MH steps on each value in parallel.

    ``target_logpdf`` must map an array of candidate values to their
    log-densities; each entry may carry its own (fixed) conditioning. With
    the symmetric Gaussian proposal the acceptance probability reduces to
    the density ratio target(z)/target(current). Proposals with -inf
    log-density are always rejected.
    """
    x = np.array(values, dtype=float)
    if config.steps == 0:
        return x
    lp = np.asarray(target_logpdf(x), dtype=float)
    if not np.all(np.isfinite(lp)):
        raise ValueError("target_logpdf must be finite at every starting value")
    n = x.size
    for _ in range(config.steps):
        z = x + config.proposal_std * rng.standard_normal(n)
        lpz = np.asarray(target_logpdf(z), dtype=float)
        log_u = np.log(rng.random(n))
        accept = log_u < (lpz - lp)
        x[accept] = z[accept]
        lp[accept] = lpz[accept]
    return x
