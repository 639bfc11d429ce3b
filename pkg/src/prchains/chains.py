"""Chain construction and the four inference regimes.

A chain orders the targets and trains one stage model per target, each
consuming the input plus the true values of the earlier targets. Inference
is either greedy (point predictions cascaded as fixed inputs), Monte Carlo
(ancestral sampling of whole paths, weighted by the stage densities), or a
particle filter that separates the sampling model from the evaluation
model and controls weight degeneracy with ESS-triggered multinomial
resampling plus optional Metropolis-Hastings rejuvenation.

Weight bookkeeping is in log space throughout. Per-stage log-weights store
the evaluator log-density of each particle's (ancestral) path, so their row
sums are exact joint path log-densities; the running cloud weights
additionally reflect resampling resets, which ``ResampleEvent`` records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Dataset
from .learners import LearnerConfigError, make_learner
from .smc import (
    ESS_ESTIMATORS,
    MHConfig,
    mh_rejuvenate,
    normalize_log_weights,
    resample_multinomial,
)


class ChainConfigError(ValueError):
    """Learner/mode incompatibility or an invalid chain configuration."""


class ChainDivergenceError(RuntimeError):
    """A greedy chain produced a non-finite intermediate prediction."""


class DegenerateCloudError(RuntimeError):
    """Every particle in a cloud lost all weight."""


@dataclass(frozen=True)
class ResampleEvent:
    """One resampling step: the stage it fired at and the log total weight
    that the reset spread uniformly over the particles."""

    stage: int
    log_norm: float


@dataclass
class ParticleCloud:
    """M weighted paths through target space, in chain order.

    ``per_stage_log_weights[m, j]`` is the evaluator log-density of particle
    m's value at stage j along its ancestral path, refreshed after any
    rejuvenation move, so ``path_log_densities`` is exact. ``log_weights``
    are the running weights including resampling resets.
    """

    paths: np.ndarray
    log_weights: np.ndarray
    per_stage_log_weights: np.ndarray
    resample_events: list
    ess_trace: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def n_particles(self) -> int:
        return self.paths.shape[0]

    @property
    def n_stages(self) -> int:
        return self.paths.shape[1]

    def path_log_densities(self) -> np.ndarray:
        """Joint log-density of each complete path under the evaluators."""
        return self.per_stage_log_weights.sum(axis=1)

    def reconstruct_log_weights(self) -> np.ndarray:
        """Recompute the running weights from per-stage weights and resets.

        After the last reset only the subsequent stage increments matter;
        without resets this is just the per-stage row sum.
        """
        if not self.resample_events:
            return self.per_stage_log_weights.sum(axis=1)
        last = self.resample_events[-1]
        base = last.log_norm - np.log(self.n_particles)
        tail = self.per_stage_log_weights[:, last.stage + 1:].sum(axis=1)
        return base + tail


@dataclass(frozen=True)
class Prediction:
    """A selected path (in natural target order) plus how it was chosen."""

    y_hat: np.ndarray
    estimator: str
    cloud: Optional[ParticleCloud] = None


@dataclass(frozen=True)
class PFConfig:
    """Particle-filter settings: particle count, the ESS fraction ``eta``
    below which resampling fires, the ESS estimator, and rejuvenation."""

    n_particles: int = 100
    eta: float = 0.1
    ess: str = "sum"
    mh_steps: int = 0
    mh_sigma: Optional[float] = None

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must be in [0, 1]")
        if self.ess not in ESS_ESTIMATORS:
            raise ValueError(f"unknown ESS estimator {self.ess!r}")
        if self.mh_steps < 0:
            raise ValueError("mh_steps must be >= 0")


def _resolve_factory(learner) -> Callable[[int], object]:
    """Accept a learner key or a seed->model factory callable."""
    if isinstance(learner, str):
        key = learner

        def factory(seed, role="density"):
            return make_learner(key, role=role, seed=seed)

        return factory
    if callable(learner):
        return lambda seed, role="density": learner(seed)
    raise ChainConfigError("learner must be a key string or a factory callable")


def _check_capability(model, need_density: bool, what: str):
    if need_density:
        missing = [m for m in ("sample", "logpdf") if not hasattr(model, m)]
        if missing:
            raise ChainConfigError(
                f"{what} {type(model).__name__} lacks {'/'.join(missing)}; "
                "it cannot serve as a conditional density")
    elif not hasattr(model, "predict"):
        raise ChainConfigError(f"{what} {type(model).__name__} lacks predict()")


@dataclass
class IndependentRegressors:
    """One model per target, each seeing only the input features."""

    models: tuple
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [np.atleast_1d(m.predict(X)) for m in self.models]
        return np.column_stack(cols)


@dataclass
class ChainModel:
    """An ordered sequence of fitted stage models.

    ``samplers[j]`` proposes stage j's value; ``evaluators[j]`` scores it.
    In ``point`` and ``density`` modes the two tuples hold the same models
    (fitted with the input features); in ``pf`` mode the samplers are fitted
    without the input features and the evaluators with them.
    """

    order: tuple
    mode: str
    n_features: int
    samplers: tuple
    evaluators: tuple

    @property
    def n_targets(self) -> int:
        return len(self.order)

    @property
    def stage_models(self) -> tuple:
        return self.evaluators


def _validate_order(order, n_targets):
    if order is None:
        return tuple(range(n_targets))
    order = tuple(int(t) for t in order)
    if sorted(order) != list(range(n_targets)):
        raise ChainConfigError(f"order {order!r} is not a permutation of 0..{n_targets - 1}")
    return order


def _stage_seeds(seed, count):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def fit_independent(train: Dataset, learner, seed: int = 0) -> IndependentRegressors:
    """Fit one single-target model per target on the raw features."""
    factory = _resolve_factory(learner)
    seeds = _stage_seeds(seed, train.n_targets)
    models = []
    for j in range(train.n_targets):
        model = factory(seeds[j], role="point")
        _check_capability(model, need_density=False, what="learner")
        models.append(model.fit(train.X, train.Y[:, j]))
    return IndependentRegressors(tuple(models), train.n_features)


def predict_independent(model: IndependentRegressors, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = model.predict(x)
    return out[0] if single else out


def fit_chain(train: Dataset, sampler, evaluator=None, mode: str = "density",
              order: Optional[Sequence[int]] = None, seed: int = 0) -> ChainModel:
    """Train a regressor chain.

    Stage j is trained on the features augmented with the true values of
    the targets earlier in the chain order. In ``pf`` mode ``sampler``
    stages are fitted without the input features (cheap to sample) and
    ``evaluator`` stages with them (accurate to score); other modes fit a
    single model per stage.
    """
    if mode not in ("point", "density", "pf"):
        raise ChainConfigError(f"unknown chain mode {mode!r}")
    if mode != "pf" and evaluator is not None:
        raise ChainConfigError("a separate evaluator is only meaningful in pf mode")
    if mode == "pf" and evaluator is None:
        raise ChainConfigError("pf mode needs both a sampler and an evaluator")
    order = _validate_order(order, train.n_targets)
    sampler_factory = _resolve_factory(sampler)
    evaluator_factory = _resolve_factory(evaluator) if evaluator is not None else None
    seeds = _stage_seeds(seed, 2 * len(order))

    samplers, evaluators = [], []
    try:
        for j, target in enumerate(order):
            prefix = train.Y[:, list(order[:j])]
            y = train.Y[:, target]
            with_x = np.hstack([train.X, prefix])
            if mode == "pf":
                s = sampler_factory(seeds[2 * j], role="density")
                e = evaluator_factory(seeds[2 * j + 1], role="density")
                _check_capability(s, need_density=True, what="pf sampler")
                _check_capability(e, need_density=True, what="pf evaluator")
                samplers.append(s.fit(prefix, y))
                evaluators.append(e.fit(with_x, y))
            else:
                role = "density" if mode == "density" else "point"
                m = sampler_factory(seeds[2 * j], role=role)
                _check_capability(m, need_density=(mode == "density"), what="stage model")
                m.fit(with_x, y)
                samplers.append(m)
                evaluators.append(m)
    except LearnerConfigError as exc:
        raise ChainConfigError(str(exc)) from exc
    return ChainModel(order, mode, train.n_features, tuple(samplers), tuple(evaluators))


def predict_greedy(chain: ChainModel, x) -> np.ndarray:
    """Cascade point predictions down the chain as fixed inputs."""
    if chain.mode not in ("point", "density"):
        raise ChainConfigError("greedy inference needs a point or density chain")
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    n = X.shape[0]
    stage_values = np.zeros((n, chain.n_targets))
    for j, model in enumerate(chain.evaluators):
        Z = np.hstack([X, stage_values[:, :j]])
        pred = np.atleast_1d(model.predict(Z))
        if not np.all(np.isfinite(pred)):
            raise ChainDivergenceError(
                f"non-finite prediction at chain stage {j} (target {chain.order[j]}); "
                "the cascade has diverged")
        stage_values[:, j] = pred
    out = np.empty_like(stage_values)
    out[:, list(chain.order)] = stage_values
    return out[0] if single else out


def _run_cloud(chain: ChainModel, x, n_particles: int, eta: float, ess_fn,
               mh_steps: int, mh_sigma, rng) -> ParticleCloud:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != chain.n_features:
        raise ValueError(f"expected {chain.n_features} features, got {x.size}")
    M, L = n_particles, chain.n_targets
    x_tile = np.tile(x, (M, 1))
    paths = np.zeros((M, L))
    per_stage = np.zeros((M, L))
    log_w = np.zeros(M)
    ess_trace = np.zeros(L)
    events: list[ResampleEvent] = []
    warnings: list[str] = []

    for j in range(L):
        prefix = paths[:, :j]
        Zf = prefix if chain.mode == "pf" else np.hstack([x_tile, prefix])
        paths[:, j] = chain.samplers[j].sample(Zf, rng)
        Zl = np.hstack([x_tile, prefix])
        delta = np.asarray(chain.evaluators[j].logpdf(Zl, paths[:, j]), dtype=float)
        if np.all(np.isneginf(delta)):
            warnings.append(f"stage {j}: all evaluator densities underflowed; "
                            "uniform stage weights substituted")
            delta = np.zeros(M)
        per_stage[:, j] = delta
        log_w = log_w + delta
        if np.all(np.isneginf(log_w)):
            warnings.append(f"stage {j}: cloud weights fully degenerate; reset to uniform")
            log_w = np.zeros(M)
        norm_w, log_norm = normalize_log_weights(log_w)
        ess = ess_fn(norm_w)
        ess_trace[j] = ess
        # eta=1 must fire even when rounding puts the ESS a hair above M.
        if eta >= 1.0 or (eta > 0.0 and ess <= eta * M):
            paths, log_w, ancestors = resample_multinomial(paths, norm_w, log_norm, M, rng)
            per_stage = per_stage[ancestors]
            events.append(ResampleEvent(j, log_norm))
            if mh_steps > 0:
                Zl_res = np.hstack([x_tile, paths[:, :j]])
                evaluator = chain.evaluators[j]

                def target(values, _Z=Zl_res, _e=evaluator):
                    return np.asarray(_e.logpdf(_Z, values), dtype=float)

                sigma = mh_sigma \
                    or getattr(chain.samplers[j], "bandwidth", None) \
                    or 0.1
                moved = mh_rejuvenate(paths[:, j], target, MHConfig(mh_steps, sigma), rng)
                paths[:, j] = moved
                # Keep row sums equal to exact joint path densities.
                per_stage[:, j] = target(moved)

    if np.all(np.isneginf(log_w)):
        raise DegenerateCloudError(
            f"no particle retained weight after {L} stages "
            f"(events: {len(events)}, warnings: {warnings})")
    return ParticleCloud(paths, log_w, per_stage, events, ess_trace, warnings)


def estimate_map(cloud: ParticleCloud) -> np.ndarray:
    """Path with maximal joint log-density; ties go to the lowest index."""
    return cloud.paths[int(np.argmax(cloud.path_log_densities()))].copy()


def estimate_mmse(cloud: ParticleCloud) -> np.ndarray:
    """Self-normalized weighted mean path under the final cloud weights."""
    w, _ = normalize_log_weights(cloud.log_weights)
    return w @ cloud.paths


_ESTIMATORS = {"map": estimate_map, "mmse": estimate_mmse}


def _finish(cloud: ParticleCloud, estimator, order) -> Prediction:
    if callable(estimator):
        name, path = "custom", np.asarray(estimator(cloud), dtype=float)
    else:
        if estimator not in _ESTIMATORS:
            raise ValueError(f"unknown estimator {estimator!r}")
        name, path = estimator, _ESTIMATORS[estimator](cloud)
    y_hat = np.empty(len(order))
    y_hat[list(order)] = path
    if not np.all(np.isfinite(y_hat)):
        raise DegenerateCloudError("estimator produced a non-finite path")
    return Prediction(y_hat, name, cloud)


def predict_mc(chain: ChainModel, x, n_samples: int = 100, rng=None,
               estimator="map") -> Prediction:
    """Monte Carlo chain inference: sample M full paths from the stage
    densities, weight each by its joint density, and apply the estimator."""
    if chain.mode != "density":
        raise ChainConfigError("predict_mc needs a chain fitted in density mode")
    if rng is None:
        rng = np.random.default_rng()
    cloud = _run_cloud(chain, x, n_samples, eta=0.0, ess_fn=ESS_ESTIMATORS["sum"],
                       mh_steps=0, mh_sigma=None, rng=rng)
    return _finish(cloud, estimator, chain.order)


def predict_pf(chain: ChainModel, x, config: Optional[PFConfig] = None, rng=None,
               estimator="map") -> Prediction:
    """Particle-filter chain inference per the SMC scheme.

    Accepts chains in ``pf`` mode (separate sampler/evaluator) and in
    ``density`` mode, where the same model plays both roles and, with
    resampling disabled, the procedure reduces exactly to ``predict_mc``.
    """
    if chain.mode not in ("pf", "density"):
        raise ChainConfigError("predict_pf needs a chain fitted in pf or density mode")
    if config is None:
        config = PFConfig()
    if rng is None:
        rng = np.random.default_rng()
    cloud = _run_cloud(chain, x, config.n_particles, eta=config.eta,
                       ess_fn=ESS_ESTIMATORS[config.ess], mh_steps=config.mh_steps,
                       mh_sigma=config.mh_sigma, rng=rng)
    return _finish(cloud, estimator, chain.order)
