"""Method keys and fitted-method wrappers.

Keys follow the ``<family>.<learners>`` convention: ``IR.B`` independent
Bayesian regression, ``RC.K`` greedy chain of grid-searched kernel ridge
models, ``MC.D`` Monte Carlo chain over conditional KDEs, ``PF.R/B`` a
particle-filter chain sampling from a discretized random forest and
evaluating with Bayesian regression. A slash-free PF key (``PF.B``) uses
one density model for both roles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import chains
from .data import Dataset
from .learners import KernelRidgeCV, LearnerConfigError, make_learner

FAMILIES = ("IR", "RC", "MC", "PF")
_LEARNER_KEYS = ("B", "K", "R", "N", "D", "KDE")


@dataclass(frozen=True)
class MethodKey:
    family: str
    sampler: str
    evaluator: Optional[str] = None

    def __str__(self):
        if self.family == "PF" and self.evaluator is not None:
            return f"PF.{self.sampler}/{self.evaluator}"
        return f"{self.family}.{self.sampler}"


def parse_method_key(key: str) -> MethodKey:
    parts = key.strip().split(".", 1)
    if len(parts) != 2 or parts[0].upper() not in FAMILIES:
        raise LearnerConfigError(
            f"bad method key {key!r}; expected IR.<l>, RC.<l>, MC.<l> or PF.<s>/<e>")
    family = parts[0].upper()
    rest = parts[1]
    if family == "PF" and "/" in rest:
        s, e = rest.split("/", 1)
        mk = MethodKey(family, s.upper(), e.upper())
    else:
        mk = MethodKey(family, rest.upper())
    for lk in (mk.sampler, mk.evaluator):
        if lk is not None and lk not in _LEARNER_KEYS:
            raise LearnerConfigError(f"unknown learner key {lk!r} in method {key!r}")
    return mk


@dataclass(frozen=True)
class MethodConfig:
    """Hyperparameters shared by the method families.

    ``n_particles`` and ``eta`` drive the MC/PF cloud sizes and the
    resampling trigger; the remaining fields configure the base learners.
    """

    n_particles: int = 100
    eta: float = 0.1
    ess: str = "sum"
    mh_steps: int = 0
    mh_sigma: Optional[float] = None
    estimator: str = "map"
    bins: int = 30
    bin_mode: str = "jitter"
    prior_precision: float = 1.0
    bandwidth: Optional[float] = None
    rf_trees: int = 100
    krr_alphas: tuple = KernelRidgeCV.DEFAULT_ALPHAS
    krr_gammas: tuple = KernelRidgeCV.DEFAULT_GAMMAS
    chain_order: Optional[tuple] = None


DEFAULT_CONFIG = MethodConfig()


def _learner_factory(learner_key: str, role: str, cfg: MethodConfig):
    def factory(seed, role=role):
        return make_learner(
            learner_key, role=role, seed=seed, bins=cfg.bins,
            prior_precision=cfg.prior_precision, bandwidth=cfg.bandwidth,
            bin_mode=cfg.bin_mode, rf_trees=cfg.rf_trees,
            krr_alphas=cfg.krr_alphas, krr_gammas=cfg.krr_gammas)

    return factory


@dataclass
class FittedMethod:
    """A fitted method: predicts an (N, L) matrix for an (N, D) input."""

    key: MethodKey
    config: MethodConfig
    model: object

    def predict(self, X, rng=None) -> np.ndarray:
        return self.predict_with_clouds(X, rng)[0]

    def predict_with_clouds(self, X, rng=None):
        """Predict and, for the sampling families, also return the clouds."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        fam = self.key.family
        if fam == "IR":
            return self.model.predict(X), None
        if fam == "RC":
            return chains.predict_greedy(self.model, X), None
        if rng is None:
            rng = np.random.default_rng()
        cfg = self.config
        preds = np.zeros((X.shape[0], self.model.n_targets))
        clouds = []
        for i, x in enumerate(X):
            if fam == "MC":
                p = chains.predict_mc(self.model, x, n_samples=cfg.n_particles,
                                      rng=rng, estimator=cfg.estimator)
            else:
                pf_cfg = chains.PFConfig(n_particles=cfg.n_particles, eta=cfg.eta,
                                         ess=cfg.ess, mh_steps=cfg.mh_steps,
                                         mh_sigma=cfg.mh_sigma)
                p = chains.predict_pf(self.model, x, config=pf_cfg, rng=rng,
                                      estimator=cfg.estimator)
            preds[i] = p.y_hat
            clouds.append(p.cloud)
        return preds, clouds


def fit_method(train: Dataset, key, config: MethodConfig = DEFAULT_CONFIG,
               seed: int = 0) -> FittedMethod:
    """Fit a method by key on a (typically standardized) training set."""
    mk = parse_method_key(key) if isinstance(key, str) else key
    cfg = config
    order = cfg.chain_order
    if mk.family == "IR":
        model = chains.fit_independent(train, _learner_factory(mk.sampler, "point", cfg),
                                       seed=seed)
    elif mk.family == "RC":
        model = chains.fit_chain(train, _learner_factory(mk.sampler, "point", cfg),
                                 mode="point", order=order, seed=seed)
    elif mk.family == "MC":
        model = chains.fit_chain(train, _learner_factory(mk.sampler, "density", cfg),
                                 mode="density", order=order, seed=seed)
    else:  # PF
        if mk.evaluator is None:
            model = chains.fit_chain(train, _learner_factory(mk.sampler, "density", cfg),
                                     mode="density", order=order, seed=seed)
        else:
            model = chains.fit_chain(train,
                                     _learner_factory(mk.sampler, "density", cfg),
                                     _learner_factory(mk.evaluator, "density", cfg),
                                     mode="pf", order=order, seed=seed)
    return FittedMethod(mk, cfg, model)
