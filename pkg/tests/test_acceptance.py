"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
are produced. Criterion 9 needs user-supplied benchmark ARFF files under
``tests/data/`` and is skipped when they are absent.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from oracles import enumerate_best_bin_path
from prchains.chains import (
    PFConfig,
    fit_chain,
    predict_greedy,
    predict_mc,
    predict_pf,
)
from prchains.data import Dataset, generate_synth, parse_arff
from prchains.evaluation import avg_rank, cross_validate
from prchains.learners import (
    BayesLinearRegression,
    ConditionalKDE,
    DiscretizedDensity,
)
from prchains.methods import MethodConfig
from prchains.smc import (
    MHConfig,
    ess_inverse_max,
    ess_inverse_sum,
    mh_rejuvenate,
    normalize_log_weights,
    resample_multinomial,
)

SEED = 7
SYNTH_N = 1000
NOISE = 0.03
FOLDS = 10
C = 0.1


def _verdict(criterion: int, ok: bool, detail: str):
    print(f"\nACCEPTANCE CRITERION {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def synth_reports():
    """10-fold CV of the six protocol methods on the synthetic dataset."""
    ds = generate_synth(SYNTH_N, NOISE, seed=SEED)
    cfg = MethodConfig(n_particles=100, eta=0.1, estimator="map")
    reports = {}
    t0 = time.perf_counter()
    for key in ("PF.R/B", "IR.B", "RC.B", "IR.K", "RC.K"):
        reports[key] = cross_validate(ds, key, k=FOLDS, seed=SEED, config=cfg, c=C)
    core_runtime = time.perf_counter() - t0
    reports["PF.N/B"] = cross_validate(ds, "PF.N/B", k=FOLDS, seed=SEED,
                                       config=cfg, c=C)
    return reports, core_runtime


def test_criterion_1_synth_mode_finding_separation(synth_reports):
    reports, runtime = synth_reports
    pf = reports["PF.R/B"].zero_one
    baselines = {k: reports[k].zero_one for k in ("IR.B", "RC.B", "IR.K", "RC.K")}
    ok = (0.45 <= pf <= 0.70) and all(v >= 0.90 for v in baselines.values()) \
        and runtime < 120.0
    detail = (f"PF.R/B 0/1={pf:.3f} (need [0.45, 0.70]); baselines "
              + ", ".join(f"{k}={v:.3f}" for k, v in baselines.items())
              + f" (need >= 0.90); runtime {runtime:.1f}s (need < 120s)")
    _verdict(1, ok, detail)


def test_criterion_2_synth_baseline_mse(synth_reports):
    reports, _ = synth_reports
    ir, rc = reports["IR.B"].mse, reports["RC.B"].mse
    ok = abs(ir - 1.0) <= 0.15 and abs(rc - 1.0) <= 0.15
    _verdict(2, ok, f"IR.B mse={ir:.3f}, RC.B mse={rc:.3f} (need 1.0 +/- 0.15)")


def test_criterion_3_synth_mae_ordering(synth_reports):
    # Known-red check, kept faithful to its stated bounds. The synthetic
    # generator gives the input no information about either target, and a
    # test instance's mode is independent of everything a predictor sees, so
    # for ANY estimator E|y_j - yhat_j| >= |E[y_j - yhat_j]| averages to at
    # least 1.0 per label on the standardized scale (modes at +/-1, Jensen).
    # A mean predictor sits at that same floor, hence the required band
    # [0.80, 1.00] strictly below the mean predictor cannot hold in
    # expectation; observed PF MAE lands slightly above 1.0 (mode choice is
    # a coin flip plus a small within-mode offset).
    reports, _ = synth_reports
    ir = reports["IR.B"].mae
    pf_r, pf_n = reports["PF.R/B"].mae, reports["PF.N/B"].mae
    ok = all(0.80 <= v <= 1.00 and v < ir for v in (pf_r, pf_n))
    _verdict(3, ok, f"PF.R/B mae={pf_r:.3f}, PF.N/B mae={pf_n:.3f}, IR.B mae={ir:.3f} "
                    "(need PF in [0.80, 1.00] and strictly below IR.B)")


def _bin_path_dataset(n_targets, n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    cols = [np.sign(x) + 0.1 * rng.standard_normal(n)]
    for _ in range(n_targets - 1):
        cols.append(-cols[-1] + 0.1 * rng.standard_normal(n))
    return Dataset(x[:, None], np.column_stack(cols), ("x1",),
                   tuple(f"y{j}" for j in range(n_targets)))


def test_criterion_4_brute_force_map_oracle():
    t0 = time.perf_counter()
    n_bins = 3
    results = []
    for n_targets, classifier in ((2, "random_forest"), (3, "softmax")):
        ds = _bin_path_dataset(n_targets, seed=10 + n_targets)

        def disc(seed, _c=classifier):
            return DiscretizedDensity(n_bins=n_bins, classifier=_c, seed=seed,
                                      sample_mode="center")

        chain = fit_chain(ds, disc, mode="density", seed=0)
        rng_points = np.random.default_rng(20 + n_targets)
        probes = rng_points.uniform(-1, 1, 100)
        rng_pred = np.random.default_rng(30 + n_targets)
        hits_mc = hits_pf = 0
        for xv in probes:
            best, _ = enumerate_best_bin_path(chain, [xv], n_bins=n_bins)

            def bins_of(path):
                return tuple(chain.evaluators[j].binner.index(path[j])
                             for j in range(n_targets))

            mc = predict_mc(chain, [xv], n_samples=2000, rng=rng_pred)
            pf = predict_pf(chain, [xv], PFConfig(n_particles=2000, eta=0.1),
                            rng=rng_pred)
            hits_mc += bins_of(mc.y_hat) == best
            hits_pf += bins_of(pf.y_hat) == best
        results.append((n_targets, hits_mc, hits_pf))
    runtime = time.perf_counter() - t0
    total = sum(r[1] + r[2] for r in results)
    ok = all(h_mc >= 95 and h_pf >= 95 for _, h_mc, h_pf in results) and runtime < 30.0
    detail = ("; ".join(f"L={l}: mc {h1}/100, pf {h2}/100" for l, h1, h2 in results)
              + f" (need >= 95%); total {total}/400; runtime {runtime:.1f}s (need < 30s)")
    _verdict(4, ok, detail)


def test_criterion_5_linear_collapse():
    rng = np.random.default_rng(40)
    X = rng.standard_normal((150, 3))
    Y = X @ rng.standard_normal((3, 3)) + 0.05 * rng.standard_normal((150, 3))
    ds = Dataset(X, Y, ("a", "b", "c"), ("u", "v", "w"))

    def ols(seed):
        return BayesLinearRegression(prior_precision=1e-9, fit_intercept=False)

    chain = fit_chain(ds, ols, mode="point")
    worst = 0.0
    for _ in range(100):
        a, b = rng.standard_normal((2, 3))
        scale = rng.uniform(-3, 3)
        sup = np.max(np.abs(predict_greedy(chain, a + b)
                            - predict_greedy(chain, a) - predict_greedy(chain, b)))
        hom = np.max(np.abs(predict_greedy(chain, scale * a)
                            - scale * predict_greedy(chain, a)))
        worst = max(worst, sup, hom)
    _verdict(5, worst <= 1e-8, f"worst superposition/homogeneity residual {worst:.2e} "
                               "(need <= 1e-8)")


def test_criterion_6_smc_primitive_suite():
    checks = []
    # ESS identities.
    uniform = np.full(8, 1.0 / 8)
    one_hot = np.eye(8)[3]
    checks.append(("ess uniform", ess_inverse_sum(uniform) == pytest.approx(8.0)
                   and ess_inverse_max(uniform) == pytest.approx(8.0)))
    checks.append(("ess one-hot", ess_inverse_sum(one_hot) == pytest.approx(1.0)
                   and ess_inverse_max(one_hot) == pytest.approx(1.0)))
    rng = np.random.default_rng(50)
    w = rng.dirichlet(np.ones(64))
    checks.append(("ess bounds", 1.0 <= ess_inverse_sum(w) <= 64.0
                   and 1.0 <= ess_inverse_max(w) <= 64.0))
    # Post-resample reset: all weights equal total/M, full ESS.
    lw = rng.normal(-1, 2, size=128)
    norm_w, log_norm = normalize_log_weights(lw)
    _, reset, _ = resample_multinomial(np.zeros((128, 1)), norm_w, log_norm, 128, rng)
    reset_w, _ = normalize_log_weights(reset)
    checks.append(("reset weights", np.allclose(reset, log_norm - np.log(128))
                   and ess_inverse_sum(reset_w) == pytest.approx(128.0)
                   and ess_inverse_max(reset_w) == pytest.approx(128.0)))
    # Mass conservation.
    mass_ok = np.isclose(np.exp(reset).sum(), np.exp(lw).sum(), rtol=1e-10)
    checks.append(("mass conservation", bool(mass_ok)))
    # Mean unbiasedness at 1e5 particles.
    m = 10 ** 5
    values = rng.standard_normal(m)[:, None]
    lw = rng.normal(0, 1.5, size=m)
    norm_w, log_norm = normalize_log_weights(lw)
    target = float(norm_w @ values[:, 0])
    new, _, _ = resample_multinomial(values, norm_w, log_norm, m, rng)
    se = np.sqrt(np.sum(norm_w * (values[:, 0] - target) ** 2) / m)
    checks.append(("resampling unbiasedness",
                   abs(new[:, 0].mean() - target) <= 5 * se))
    ok = all(passed for _, passed in checks)
    _verdict(6, ok, "; ".join(f"{name}={'ok' if passed else 'BAD'}"
                              for name, passed in checks))


def _std_normal_logpdf(v):
    return -0.5 * np.log(2 * np.pi) - 0.5 * np.asarray(v) ** 2


def test_criterion_7_metropolis_hastings_correctness():
    # Ergodic averages: one particle, 1e5 steps, driven one step at a time
    # so the whole trajectory is observed.
    rng = np.random.default_rng(60)
    steps = 10 ** 5
    trace = np.empty(steps)
    current = np.array([0.0])
    cfg = MHConfig(steps=1, proposal_std=1.0)
    for i in range(steps):
        current = mh_rejuvenate(current, _std_normal_logpdf, cfg, rng)
        trace[i] = current[0]
    mean_ok = abs(trace.mean()) <= 0.05
    var_ok = abs(trace.var() - 1.0) <= 0.1
    # Target preservation: start in equilibrium, apply 10 steps, compare CDFs.
    particles = np.random.default_rng(61).standard_normal(10 ** 4)
    moved = mh_rejuvenate(particles, _std_normal_logpdf,
                          MHConfig(steps=10, proposal_std=1.0),
                          np.random.default_rng(62))
    s = np.sort(moved)
    grid_cdf = norm.cdf(s)
    n = s.size
    ks = max(np.max(np.abs(grid_cdf - np.arange(1, n + 1) / n)),
             np.max(np.abs(grid_cdf - np.arange(0, n) / n)))
    ok = mean_ok and var_ok and ks < 0.02
    _verdict(7, ok, f"ergodic mean={trace.mean():+.4f} (|.|<=0.05), "
                    f"var={trace.var():.4f} (1 +/- 0.1), KS={ks:.4f} (< 0.02)")


def test_criterion_8_density_normalization():
    rng = np.random.default_rng(70)
    n = 120
    worst = 0.0

    z = rng.standard_normal((n, 2))
    blr = BayesLinearRegression().fit(z, z @ [1.0, -0.5] + 0.3 * rng.standard_normal(n))
    for _ in range(20):
        q = rng.standard_normal(2)
        m, sd = blr.predict(q), np.sqrt(blr.predictive_variance(q))
        total, _ = quad(lambda v: blr.pdf(q, v), m - 6 * sd, m + 6 * sd)
        worst = max(worst, abs(total - 1.0))

    y = np.sign(z[:, 0]) + 0.1 * rng.standard_normal(n)
    kde = ConditionalKDE().fit(z, y)
    lo, hi = y.min() - 6 * kde.bandwidth, y.max() + 6 * kde.bandwidth
    for _ in range(20):
        q = rng.standard_normal(2)
        total, _ = quad(lambda v: kde.pdf(q, v), lo, hi, limit=200)
        worst = max(worst, abs(total - 1.0))

    disc = DiscretizedDensity(n_bins=15, seed=0).fit(z, y)
    edges = disc.binner.edges
    grid = np.linspace(edges[0], edges[-1], 200001)
    for _ in range(20):
        q = rng.standard_normal(2)
        vals = disc.pdf(np.tile(q, (grid.size, 1)), grid)
        worst = max(worst, abs(np.trapezoid(vals, grid) - 1.0))

    _verdict(8, worst <= 1e-3,
             f"worst |integral - 1| over 60 conditioning points = {worst:.2e} "
             "(need <= 1e-3)")


MTR_TARGETS = {"andro": 6, "edm": 2, "enb": 2, "jura": 3, "slump": 3}
MTR_DIR = Path(__file__).parent / "data"


def test_criterion_9_real_dataset_sanity():
    available = {name: MTR_DIR / f"{name}.arff" for name in MTR_TARGETS
                 if (MTR_DIR / f"{name}.arff").exists()}
    if "enb" not in available:
        pytest.skip("user-supplied benchmark files not present under tests/data/ "
                    "(enb.arff required); criteria 1-8 are the binding suite")
    mse_rows = []
    enb_rc_mse = None
    for name, path in sorted(available.items()):
        data = parse_arff(path.read_text(), MTR_TARGETS[name]).dataset
        row = []
        for key in ("IR.K", "RC.K"):
            report = cross_validate(data, key, k=FOLDS, seed=SEED, c=C)
            row.append(report.mse)
            if name == "enb" and key == "RC.K":
                enb_rc_mse = report.mse
        mse_rows.append(row)
    ranks = avg_rank(np.asarray(mse_rows))  # columns: IR.K, RC.K
    ok = enb_rc_mse <= 0.05 and ranks[1] <= ranks[0]
    _verdict(9, ok, f"ENB RC.K mse={enb_rc_mse:.4f} (need <= 0.05); "
                    f"avg rank RC.K={ranks[1]:.2f} vs IR.K={ranks[0]:.2f} "
                    f"over {len(mse_rows)} datasets")
