"""Base learners for one target given an augmented input.

Conditional-density models (Bayesian linear regression, conditional KDE,
discretized classifiers) expose ``fit`` / ``logpdf`` / ``pdf`` / ``sample`` /
``predict``; kernel ridge regression is point-only. All models accept a
single input row ``(d,)`` or a batch ``(B, d)`` and return matching shapes.
Zero-width inputs (``(B, 0)``) are valid and mean "no conditioning".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier


class LearnerConfigError(ValueError):
    """Invalid learner key or an incompatible learner/role combination."""


def _as_batch(z):
    """Coerce to a 2-d float array; report whether the input was a single row."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return z[None, :], True
    if z.ndim == 2:
        return z, False
    raise ValueError("inputs must be 1-d or 2-d")


def _unbatch(values, single):
    return float(values[0]) if single else values


_LOG_2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# Bayesian linear regression
# ---------------------------------------------------------------------------

class BayesLinearRegression:
    """Conjugate Gaussian linear regression with a Gaussian predictive density.

    The weight posterior has an isotropic Gaussian prior with precision
    ``prior_precision``; the noise variance is estimated from training
    residuals (floored at 1e-8). The predictive at input z is
    N(mean(z), noise_variance + z' Cov z), so sampling and density
    evaluation are both closed form.
    """

    def __init__(self, prior_precision: float = 1.0, fit_intercept: bool = True):
        if prior_precision <= 0:
            raise ValueError("prior_precision must be > 0")
        self.prior_precision = prior_precision
        self.fit_intercept = fit_intercept
        self.weight_mean = None
        self.weight_covariance = None
        self.noise_variance = None
        self.n_features = None

    def _design(self, Z):
        if self.fit_intercept:
            return np.hstack([Z, np.ones((Z.shape[0], 1))])
        return Z

    def fit(self, Z, y):
        Z, _ = _as_batch(Z)
        y = np.asarray(y, dtype=float).ravel()
        if Z.shape[0] < 1:
            raise ValueError("need at least one training instance")
        if Z.shape[0] != y.size:
            raise ValueError("Z and y row counts differ")
        self.n_features = Z.shape[1]
        phi = self._design(Z)
        d = phi.shape[1]
        gram = phi.T @ phi
        # First pass with unit noise variance gives residuals for the
        # noise estimate; second pass uses it.
        mean0 = np.linalg.solve(self.prior_precision * np.eye(d) + gram, phi.T @ y)
        resid = y - phi @ mean0
        self.noise_variance = max(float(np.mean(resid * resid)), 1e-8)
        precision = self.prior_precision * np.eye(d) + gram / self.noise_variance
        cov = np.linalg.inv(precision)
        self.weight_covariance = (cov + cov.T) / 2.0
        self.weight_mean = self.weight_covariance @ (phi.T @ y) / self.noise_variance
        return self

    def predict(self, Z):
        Z, single = _as_batch(Z)
        phi = self._design(Z)
        return _unbatch(phi @ self.weight_mean, single)

    def predictive_variance(self, Z):
        Z, single = _as_batch(Z)
        phi = self._design(Z)
        var = self.noise_variance + np.einsum("ij,jk,ik->i", phi, self.weight_covariance, phi)
        return _unbatch(var, single)

    def logpdf(self, Z, y):
        Z, single = _as_batch(Z)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        phi = self._design(Z)
        mean = phi @ self.weight_mean
        var = self.noise_variance + np.einsum("ij,jk,ik->i", phi, self.weight_covariance, phi)
        out = -0.5 * (_LOG_2PI + np.log(var)) - (y - mean) ** 2 / (2.0 * var)
        return _unbatch(out, single and y.size == 1)

    def pdf(self, Z, y):
        return np.exp(self.logpdf(Z, y))

    def sample(self, Z, rng):
        Z, single = _as_batch(Z)
        phi = self._design(Z)
        mean = phi @ self.weight_mean
        var = self.noise_variance + np.einsum("ij,jk,ik->i", phi, self.weight_covariance, phi)
        out = mean + np.sqrt(var) * rng.standard_normal(Z.shape[0])
        return _unbatch(out, single)


# ---------------------------------------------------------------------------
# Conditional kernel density estimate
# ---------------------------------------------------------------------------

def silverman_bandwidth(values) -> float:
    """Silverman's rule on one column, floored at 1e-3."""
    v = np.asarray(values, dtype=float)
    n = v.size
    std = v.std()
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) if (q75 > q25) else std
    h = 0.9 * spread * n ** (-0.2)
    return max(float(h), 1e-3)


class ConditionalKDE:
    """Gaussian-kernel conditional density p(y | z) from stored pairs.

    The conditional is a mixture of Gaussians N(y_i, h^2) with mixing
    weights proportional to the input kernel exp(-||z - z_i||^2 / (2 h^2)).
    One shared bandwidth is used for the input and target kernels; by
    default it comes from Silverman's rule applied to the targets.

    If the input-kernel weights underflow entirely (query far from every
    stored point), uniform mixing weights are substituted; ``weights``
    reports this through its second return value.
    """

    def __init__(self, bandwidth: float | None = None):
        if bandwidth is not None and bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        self._bandwidth_arg = bandwidth
        self.bandwidth = None
        self.stored_inputs = None
        self.stored_targets = None
        self.n_features = None

    def fit(self, Z, y):
        Z, _ = _as_batch(Z)
        y = np.asarray(y, dtype=float).ravel()
        if Z.shape[0] < 1:
            raise ValueError("need at least one training instance")
        self.stored_inputs = Z
        self.stored_targets = y
        self.n_features = Z.shape[1]
        self.bandwidth = self._bandwidth_arg or silverman_bandwidth(y)
        return self

    def _log_kernel(self, Z):
        # (B, n) unnormalized log input-kernel weights.
        diff = Z[:, None, :] - self.stored_inputs[None, :, :]
        sq = np.einsum("bnd,bnd->bn", diff, diff)
        return -sq / (2.0 * self.bandwidth ** 2)

    def weights(self, Z):
        """Mixing weights per query row, plus a flag per row marking the
        uniform fallback taken when every kernel weight underflows."""
        Z, single = _as_batch(Z)
        logk = self._log_kernel(Z)
        m = logk.max(axis=1, keepdims=True)
        fallback = ~np.isfinite(m[:, 0])
        w = np.exp(logk - np.where(np.isfinite(m), m, 0.0))
        w[fallback] = 1.0
        w /= w.sum(axis=1, keepdims=True)
        if single:
            return w[0], bool(fallback[0])
        return w, fallback

    def logpdf(self, Z, y):
        Z, single = _as_batch(Z)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        w, _ = self.weights(Z)
        w = np.atleast_2d(w)
        h = self.bandwidth
        log_norm_const = -0.5 * _LOG_2PI - np.log(h)
        log_comp = log_norm_const - (y[:, None] - self.stored_targets[None, :]) ** 2 / (2.0 * h * h)
        with np.errstate(divide="ignore"):
            stacked = np.where(w > 0, np.log(np.maximum(w, 1e-300)) + log_comp, -np.inf)
        m = stacked.max(axis=1, keepdims=True)
        safe = np.where(np.isfinite(m), m, 0.0)
        out = safe[:, 0] + np.log(np.exp(stacked - safe).sum(axis=1))
        return _unbatch(out, single and y.size == 1)

    def pdf(self, Z, y):
        return np.exp(self.logpdf(Z, y))

    def sample(self, Z, rng):
        Z, single = _as_batch(Z)
        w, _ = self.weights(Z)
        w = np.atleast_2d(w)
        idx = _categorical_rows(w, rng)
        out = self.stored_targets[idx] + self.bandwidth * rng.standard_normal(Z.shape[0])
        return _unbatch(out, single)

    def predict(self, Z):
        Z, single = _as_batch(Z)
        w, _ = self.weights(Z)
        w = np.atleast_2d(w)
        return _unbatch(w @ self.stored_targets, single)


def _categorical_rows(probs, rng):
    """One categorical draw per row of a probability matrix."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    idx = (cum < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


# ---------------------------------------------------------------------------
# Kernel ridge regression (Gaussian kernel)
# ---------------------------------------------------------------------------

def _sq_dists(A, B):
    a = np.sum(A * A, axis=1)[:, None]
    b = np.sum(B * B, axis=1)[None, :]
    return np.maximum(a - 2.0 * (A @ B.T) + b, 0.0)


class KernelRidge:
    """Kernel ridge regression with the kernel exp(-gamma ||z - z'||^2).

    Solves (K + ridge I) c = y. On factorization failure the ridge is
    increased tenfold, up to three retries.
    """

    def __init__(self, ridge: float = 0.1, kernel_width: float = 1.0):
        if ridge <= 0 or kernel_width <= 0:
            raise ValueError("ridge and kernel_width must be > 0")
        self.ridge = ridge
        self.kernel_width = kernel_width
        self.dual_coefficients = None
        self.stored_inputs = None
        self.n_features = None

    def fit(self, Z, y):
        Z, _ = _as_batch(Z)
        y = np.asarray(y, dtype=float).ravel()
        if Z.shape[0] < 1:
            raise ValueError("need at least one training instance")
        self.stored_inputs = Z
        self.n_features = Z.shape[1]
        K = np.exp(-self.kernel_width * _sq_dists(Z, Z))
        ridge = self.ridge
        for attempt in range(4):
            try:
                chol = np.linalg.cholesky(K + ridge * np.eye(K.shape[0]))
                break
            except np.linalg.LinAlgError:
                if attempt == 3:
                    raise RuntimeError("kernel system could not be factorized")
                ridge *= 10.0
        self.ridge = ridge
        c = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
        self.dual_coefficients = c
        return self

    def predict(self, Z):
        Z, single = _as_batch(Z)
        K = np.exp(-self.kernel_width * _sq_dists(Z, self.stored_inputs))
        return _unbatch(K @ self.dual_coefficients, single)


class KernelRidgeCV:
    """Kernel ridge with (ridge, width) chosen by inner k-fold MSE.

    The squared-distance matrix is computed once and shared across the
    grid, so the search costs one kernel exponentiation per width value
    plus one solve per grid point and fold.
    """

    DEFAULT_ALPHAS = (1.0, 0.1, 0.01, 0.001)
    DEFAULT_GAMMAS = (0.01, 0.1, 1.0, 10.0, 100.0)

    def __init__(self, alphas=DEFAULT_ALPHAS, gammas=DEFAULT_GAMMAS,
                 n_folds: int = 3, seed: int = 0):
        self.alphas = tuple(alphas)
        self.gammas = tuple(gammas)
        self.n_folds = n_folds
        self.seed = seed
        self.best_ridge = None
        self.best_width = None
        self._model = None
        self.n_features = None

    def fit(self, Z, y):
        from .data import kfold  # local import to avoid a cycle at module load

        Z, _ = _as_batch(Z)
        y = np.asarray(y, dtype=float).ravel()
        n = Z.shape[0]
        self.n_features = Z.shape[1]
        k = min(self.n_folds, n)
        if k < 2:
            self.best_ridge, self.best_width = self.alphas[0], self.gammas[0]
            self._model = KernelRidge(self.best_ridge, self.best_width).fit(Z, y)
            return self
        plan = kfold(n, k, self.seed)
        D2 = _sq_dists(Z, Z)
        best = (np.inf, self.alphas[0], self.gammas[0])
        for gamma in self.gammas:
            K = np.exp(-gamma * D2)
            for alpha in self.alphas:
                err = 0.0
                for fold in range(k):
                    tr = plan.train_indices(fold)
                    te = plan.test_indices(fold)
                    Ktr = K[np.ix_(tr, tr)] + alpha * np.eye(tr.size)
                    c = np.linalg.solve(Ktr, y[tr])
                    pred = K[np.ix_(te, tr)] @ c
                    err += float(np.sum((pred - y[te]) ** 2))
                mse = err / n
                if mse < best[0]:
                    best = (mse, alpha, gamma)
        _, self.best_ridge, self.best_width = best
        self._model = KernelRidge(self.best_ridge, self.best_width).fit(Z, y)
        return self

    def predict(self, Z):
        return self._model.predict(Z)


# ---------------------------------------------------------------------------
# Discretized label space
# ---------------------------------------------------------------------------

class Binner:
    """Equal-width bins over the training range of one target.

    ``index`` clamps out-of-range values into the end bins (half-open bins,
    the last bin closed). ``value`` maps a bin back to its center or to a
    uniform draw within the bin.
    """

    def __init__(self, n_bins: int = 30):
        if n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        self.n_bins = n_bins
        self.edges = None
        self.representatives = None

    def fit(self, y):
        y = np.asarray(y, dtype=float).ravel()
        lo, hi = float(y.min()), float(y.max())
        if hi <= lo:
            # Constant target: unit-width fallback bins around the constant.
            lo, hi = lo - 0.5, lo + 0.5
        self.edges = np.linspace(lo, hi, self.n_bins + 1)
        self.representatives = (self.edges[:-1] + self.edges[1:]) / 2.0
        return self

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def index(self, y):
        y = np.asarray(y, dtype=float)
        k = np.floor((y - self.edges[0]) / self.width).astype(int)
        return np.clip(k, 0, self.n_bins - 1)

    def in_range(self, y):
        y = np.asarray(y, dtype=float)
        return (y >= self.edges[0]) & (y <= self.edges[-1])

    def value(self, k, rng=None, mode: str = "center"):
        k = np.asarray(k, dtype=int)
        if mode == "center":
            return self.representatives[k]
        if mode == "jitter":
            if rng is None:
                raise ValueError("jitter mode needs an RNG")
            return rng.uniform(self.edges[k], self.edges[k + 1])
        raise ValueError(f"unknown bin-value mode {mode!r}")


class RandomForestPmf:
    """Random-forest classifier returning a pmf over all bins.

    Backed by scikit-learn's forest (Gini splits, leaf class frequencies
    averaged over trees). Zero-feature inputs fall back to the training
    class frequencies.
    """

    def __init__(self, n_classes: int, n_estimators: int = 100, seed: int = 0):
        self.n_classes = n_classes
        self.n_estimators = n_estimators
        self.seed = seed
        self._forest = None
        self._freqs = None

    def fit(self, Z, labels):
        Z, _ = _as_batch(Z)
        labels = np.asarray(labels, dtype=int)
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError("labels out of range")
        if Z.shape[1] == 0:
            counts = np.bincount(labels, minlength=self.n_classes).astype(float)
            self._freqs = counts / counts.sum()
            return self
        self._forest = RandomForestClassifier(
            n_estimators=self.n_estimators, random_state=self.seed)
        self._forest.fit(Z, labels)
        return self

    def pmf(self, Z):
        Z, single = _as_batch(Z)
        out = np.zeros((Z.shape[0], self.n_classes))
        if self._freqs is not None:
            out[:] = self._freqs
        else:
            proba = self._forest.predict_proba(Z)
            out[:, self._forest.classes_] = proba
        return out[0] if single else out


class SoftmaxPmf:
    """Multinomial logistic regression trained by full-batch gradient descent."""

    def __init__(self, n_classes: int, seed: int = 0, learning_rate: float = 0.5,
                 n_iter: int = 300, l2: float = 1e-4):
        self.n_classes = n_classes
        self.seed = seed
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.l2 = l2
        self._weights = None
        self._freqs = None

    def fit(self, Z, labels):
        Z, _ = _as_batch(Z)
        labels = np.asarray(labels, dtype=int)
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError("labels out of range")
        if Z.shape[1] == 0 or np.unique(labels).size == 1:
            # No conditioning, or a degenerate single class: the gradient
            # descent limit is the class-frequency pmf, so store it directly.
            counts = np.bincount(labels, minlength=self.n_classes).astype(float)
            self._freqs = counts / counts.sum()
            return self
        phi = np.hstack([Z, np.ones((Z.shape[0], 1))])
        n, d = phi.shape
        W = np.zeros((d, self.n_classes))
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), labels] = 1.0
        for _ in range(self.n_iter):
            p = _softmax_rows(phi @ W)
            grad = phi.T @ (p - onehot) / n + self.l2 * W
            W -= self.learning_rate * grad
        self._weights = W
        return self

    def pmf(self, Z):
        Z, single = _as_batch(Z)
        if self._freqs is not None:
            out = np.tile(self._freqs, (Z.shape[0], 1))
        else:
            phi = np.hstack([Z, np.ones((Z.shape[0], 1))])
            out = _softmax_rows(phi @ self._weights)
        return out[0] if single else out


def _softmax_rows(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


PMF_CLASSIFIERS = {"random_forest": RandomForestPmf, "softmax": SoftmaxPmf}


def fit_pmf_classifier(Z, labels, n_classes, kind="random_forest", seed=0, **params):
    if kind not in PMF_CLASSIFIERS:
        raise LearnerConfigError(f"unknown classifier kind {kind!r}")
    model = PMF_CLASSIFIERS[kind](n_classes, seed=seed, **params)
    return model.fit(Z, labels)


class DiscretizedDensity:
    """Conditional density from a binned target and a pmf classifier.

    The density of y given z is pmf(z)[bin(y)] / bin_width inside the
    binned range and 0 outside it, so it integrates to 1 exactly.
    Sampling draws a bin from the pmf and then (by default) a uniform
    value within the bin; bin centers are available for deterministic
    propagation.
    """

    def __init__(self, n_bins: int = 30, classifier: str = "random_forest",
                 seed: int = 0, sample_mode: str = "jitter", **classifier_params):
        self.n_bins = n_bins
        self.classifier_kind = classifier
        self.seed = seed
        self.sample_mode = sample_mode
        self.classifier_params = classifier_params
        self.binner = None
        self.classifier = None
        self.n_features = None

    def fit(self, Z, y):
        Z, _ = _as_batch(Z)
        y = np.asarray(y, dtype=float).ravel()
        self.n_features = Z.shape[1]
        self.binner = Binner(self.n_bins).fit(y)
        labels = self.binner.index(y)
        self.classifier = fit_pmf_classifier(
            Z, labels, self.n_bins, kind=self.classifier_kind,
            seed=self.seed, **self.classifier_params)
        return self

    def pmf(self, Z):
        return self.classifier.pmf(Z)

    def logpdf(self, Z, y):
        Z, single = _as_batch(Z)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        p = np.atleast_2d(self.classifier.pmf(Z))
        k = self.binner.index(y)
        # A single conditioning row may be scored against many y values.
        rows = np.zeros(y.size, dtype=int) if p.shape[0] == 1 else np.arange(y.size)
        dens = p[rows, k] / self.binner.width
        dens = np.where(self.binner.in_range(y), dens, 0.0)
        with np.errstate(divide="ignore"):
            out = np.log(dens)
        return _unbatch(out, single and y.size == 1)

    def pdf(self, Z, y):
        return np.exp(self.logpdf(Z, y))

    def sample(self, Z, rng):
        Z, single = _as_batch(Z)
        p = np.atleast_2d(self.classifier.pmf(Z))
        k = _categorical_rows(p, rng)
        out = self.binner.value(k, rng=rng, mode=self.sample_mode)
        return _unbatch(np.asarray(out, dtype=float), single)

    def predict(self, Z):
        Z, single = _as_batch(Z)
        p = np.atleast_2d(self.classifier.pmf(Z))
        return _unbatch(p @ self.binner.representatives, single)


# ---------------------------------------------------------------------------
# Learner selection by key
# ---------------------------------------------------------------------------

POINT_ROLES = ("point",)
DENSITY_ROLES = ("density",)


def make_learner(key: str, role: str = "point", seed: int = 0, *,
                 bins: int = 30, prior_precision: float = 1.0,
                 bandwidth: float | None = None, bin_mode: str = "jitter",
                 rf_trees: int = 100,
                 krr_alphas=KernelRidgeCV.DEFAULT_ALPHAS,
                 krr_gammas=KernelRidgeCV.DEFAULT_GAMMAS):
    """Build a fresh learner from its string key.

    Keys: ``B`` Bayesian linear regression, ``K`` kernel ridge with grid
    search (point only), ``R`` discretized random forest, ``N`` discretized
    softmax classifier, ``D``/``KDE`` conditional kernel density.
    """
    if role not in ("point", "density"):
        raise LearnerConfigError(f"unknown role {role!r}")
    k = key.upper()
    if k == "KDE":
        k = "D"
    if k == "B":
        return BayesLinearRegression(prior_precision=prior_precision)
    if k == "K":
        if role == "density":
            raise LearnerConfigError(
                "kernel ridge ('K') is point-only; it cannot sample or evaluate densities")
        return KernelRidgeCV(alphas=krr_alphas, gammas=krr_gammas, seed=seed)
    if k == "R":
        return DiscretizedDensity(n_bins=bins, classifier="random_forest",
                                  seed=seed, sample_mode=bin_mode, n_estimators=rf_trees)
    if k == "N":
        return DiscretizedDensity(n_bins=bins, classifier="softmax",
                                  seed=seed, sample_mode=bin_mode)
    if k == "D":
        return ConditionalKDE(bandwidth=bandwidth)
    raise LearnerConfigError(f"unknown learner key {key!r}")
