"""End-to-end acceptance checks.

Each test covers one headline guarantee of the package, from the layer
shape chain through full-pipeline reproducibility.  They train real models
on planted-signal synthetic data at the default network size, so this file
runs noticeably longer than the unit suites.
"""

import time

import numpy as np
import numpy.testing as npt
import pytest

import epiconv as ec
from epiconv.cli import main as cli_main
from epiconv.nn import dropout_forward, maxpool, maxpool_backward, nll_loss, relu, softmax
from epiconv.patterns import active_bins, normalize_pattern

from conftest import TINY_HYPER, finite_difference_gradients, max_relative_error


def _bundle(noise_sigma):
    spec = ec.SyntheticSpec(
        n_genes=2000,
        n_f=5,
        bins=100,
        high_marks=frozenset({0, 1}),
        low_marks=frozenset({3, 4}),
        signal_amplitude=1.0,
        noise_sigma=noise_sigma,
        center_width=10,
        seed=7,
    )
    dataset = ec.discretize_expression(ec.generate_synthetic(spec))
    train, valid, test = ec.split_dataset(dataset, ec.SplitSpec(seed=7))
    hyper = ec.Hyperparams(epochs=3, seed=7)  # defaults otherwise
    model, history = ec.train(train, valid, ec.TrainConfig(hyper=hyper))
    return model, history, (train, valid, test)


@pytest.fixture(scope="module")
def noisy_bundle():
    return _bundle(noise_sigma=0.25)


@pytest.fixture(scope="module")
def clean_bundle():
    return _bundle(noise_sigma=0.0)


def test_c1_shape_chain():
    """Default network: (5,100) -> conv (50,91) -> pool (50,18) -> 900
    -> 625 -> 125 -> 2 probabilities summing to one."""
    hyper = ec.Hyperparams()
    rng = np.random.default_rng(0)
    params = ec.init_params(hyper, rng)
    trace = ec.forward(rng.uniform(0, 1, (5, 100)), params, hyper)
    assert trace.conv_pre.shape == (50, 91)
    assert trace.conv_post.shape == (50, 91)
    assert trace.pooled.shape == (50, 18)
    assert trace.flat.shape == (900,)
    assert trace.hidden_post[0].shape == (625,)
    assert trace.hidden_post[1].shape == (125,)
    assert trace.logits.shape == (2,)
    assert trace.probs.shape == (2,)
    assert trace.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(trace.probs >= 0)
    print("[acceptance] C1: PASS")


def test_c2_gradients_match_finite_differences():
    """Analytic gradients agree with a central-difference oracle to 1e-4
    (relative) for every parameter and the input, in under ten seconds."""
    start = time.monotonic()
    hyper = TINY_HYPER
    rng = np.random.default_rng(10)
    params = ec.init_params(hyper, rng)
    worst = 0.0
    for label in (-1, 1):
        x = rng.uniform(0, 1, (hyper.n_marks, hyper.bins))
        trace = ec.forward(x, params, hyper, mode="eval")
        grads = ec.backward(trace, x, label, params)
        numeric_params, numeric_x = finite_difference_gradients(
            params, hyper, x, label
        )
        analytic = [grads.conv_weights, grads.conv_bias]
        for gw, gb in zip(grads.mlp_weights, grads.mlp_bias):
            analytic.extend([gw, gb])
        for a, n in zip(analytic, numeric_params):
            worst = max(worst, max_relative_error(a, n))
        worst = max(worst, max_relative_error(grads.x, numeric_x))
    elapsed = time.monotonic() - start
    assert worst < 1e-4, f"worst relative error {worst:.3e}"
    assert elapsed < 10.0, f"gradient check took {elapsed:.1f}s"
    print(f"[acceptance] C2: PASS (err {worst:.2e}, {elapsed:.2f}s)")


def test_c3_auc_equals_bruteforce():
    """The rank-statistic AUC equals the quadratic wins-plus-half-ties count
    on 100 random tied instances, and reproduces the worked example."""
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    labels = np.array([-1, -1, 1, 1])
    assert ec.auc_from_scores(scores, labels) == 0.75

    def brute(scores, labels):
        pos = scores[labels == 1]
        neg = scores[labels == -1]
        wins = sum(
            1.0 if p > n else (0.5 if p == n else 0.0) for p in pos for n in neg
        )
        return wins / (len(pos) * len(neg))

    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(2, 201))
        scores = rng.integers(0, 10, size=n) / 9.0  # coarse grid -> many ties
        labels = np.where(rng.random(n) < 0.5, 1, -1)
        if len(set(labels)) < 2:
            labels[0], labels[1] = 1, -1
        assert ec.auc_from_scores(scores, labels) == brute(scores, labels)
    print("[acceptance] C3: PASS")


def test_c4_planted_signal_is_learned(noisy_bundle, clean_bundle):
    """Training at default size on 2000 planted-signal genes reaches test
    AUC >= 0.90 with noise (sigma = amplitude/4) and >= 0.99 without."""
    noisy_model, _, noisy_folds = noisy_bundle
    noisy_auc = ec.auc(ec.predict_scores(noisy_model, noisy_folds[2]))
    assert noisy_model.hyper.epochs <= 30
    assert noisy_auc >= 0.90, f"noisy test AUC {noisy_auc:.4f}"

    clean_model, _, clean_folds = clean_bundle
    clean_auc = ec.auc(ec.predict_scores(clean_model, clean_folds[2]))
    assert clean_auc >= 0.99, f"clean test AUC {clean_auc:.4f}"
    print(f"[acceptance] C4: PASS (noisy {noisy_auc:.4f}, clean {clean_auc:.4f})")


def test_c5_class_patterns_recover_planted_marks(clean_bundle):
    """Optimized class patterns single out the planted marks: the
    above-average active-bin marks are a nonempty subset of {0,1} for +1
    and of {3,4} for -1, in at least four of five seeds per class."""
    model, _, _ = clean_bundle
    outcomes = {}
    for target, planted in ((1, {0, 1}), (-1, {3, 4})):
        hits = 0
        for seed in range(5):
            pattern = ec.optimize_class_pattern(
                model, ec.VisConfig(target_class=target, seed=seed)
            )
            marks = set(ec.summarize_frequencies(pattern).influential_marks)
            if marks and marks <= planted:
                hits += 1
        outcomes[target] = hits
        assert hits >= 4, f"class {target:+d}: {hits}/5 seeds recovered"
    print(
        f"[acceptance] C5: PASS (+1: {outcomes[1]}/5, -1: {outcomes[-1]}/5)"
    )


def test_c6_bin_influence_peaks_centrally(noisy_bundle):
    """The mean rectified conv response over the test fold peaks within the
    central 20% of window positions (the signal is planted centrally)."""
    model, _, folds = noisy_bundle
    profile = ec.bin_influence(model, folds[2])
    center = (profile.width - 1) / 2
    band = 0.10 * profile.width  # +/-10% of positions = central 20%
    assert abs(profile.argmax - center) <= band, (
        f"peak at {profile.argmax} of {profile.width}"
    )
    print(f"[acceptance] C6: PASS (peak {profile.argmax} of {profile.width})")


def test_c7_pipeline_reproducible(tmp_path, monkeypatch):
    """Two identical CLI invocations (same seeds, same relative paths)
    produce byte-identical model, score, pattern and count files."""
    digests = []
    for tag in ("one", "two"):
        root = tmp_path / tag
        root.mkdir()
        monkeypatch.chdir(root)
        assert cli_main(
            ["gen-data", "--genes", "90", "--marks", "5", "--bins", "32",
             "--center-width", "6", "--amplitude", "2", "--noise", "0.2",
             "--seed", "11", "--quiet", "-o", "data.csv"]
        ) == 0
        assert cli_main(
            ["train", "--data", "data.csv", "--kernel", "5", "--filters", "8",
             "--pool", "4", "--hidden", "16,8", "--dropout", "0.25",
             "--lr", "0.01", "--epochs", "2", "--seed", "11", "--quiet",
             "-o", "model.epc"]
        ) == 0
        assert cli_main(
            ["eval", "--model", "model.epc", "--data", "data.csv", "--quiet",
             "-o", "scores.csv"]
        ) == 0
        assert cli_main(
            ["visualize", "--model", "model.epc", "--target-class", "+1",
             "--iters", "300", "--seed", "11", "--quiet", "-o", "vis"]
        ) == 0
        digests.append(
            tuple(
                (root / name).read_bytes()
                for name in (
                    "data.csv", "model.epc", "model.epc.history.csv",
                    "scores.csv", "vis.pattern.csv", "vis.pattern.svg",
                    "vis.counts.csv",
                )
            )
        )
    assert digests[0] == digests[1]
    print("[acceptance] C7: PASS")


def test_c8_invariant_sweep():
    """At least 100 randomized cases for each core invariant: softmax,
    ReLU, maxpool, dropout, NLL, normalization, active bins, median rule."""
    rng = np.random.default_rng(88)

    for _ in range(100):  # softmax: normalized, positive, shift-invariant
        logits = rng.normal(scale=rng.uniform(0.1, 50), size=2)
        p = softmax(logits)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(p > 0)
        npt.assert_allclose(p, softmax(logits + rng.normal(scale=100)), atol=1e-12)

    for _ in range(100):  # relu: idempotent, non-negative, sparsifying
        arr = rng.normal(size=rng.integers(1, 40))
        out = relu(arr)
        assert np.all(out >= 0)
        npt.assert_array_equal(relu(out), out)
        npt.assert_array_equal(out[arr > 0], arr[arr > 0])

    for _ in range(100):  # maxpool: dominance and exact gradient routing
        filters = int(rng.integers(1, 5))
        width = int(rng.integers(2, 40))
        m = int(rng.integers(1, width + 1))
        z = rng.normal(size=(filters, width))
        pooled, argmax = maxpool(z, m)
        q = width // m
        assert pooled.shape == (filters, q)
        for p_idx in range(q):
            window = z[:, p_idx * m : (p_idx + 1) * m]
            npt.assert_array_equal(pooled[:, p_idx], window.max(axis=1))
        grad = rng.normal(size=pooled.shape)
        routed = maxpool_backward(grad, argmax, width)
        npt.assert_allclose(routed.sum(axis=1), grad.sum(axis=1), atol=1e-12)

    total_kept = 0
    total_units = 0
    drop_rng = np.random.default_rng(977)
    for _ in range(100):  # dropout: zeros-or-scaled, unbiased overall
        v = np.ones(int(rng.integers(50, 400)))
        p = float(rng.uniform(0.05, 0.9))
        out, mask = dropout_forward(v, p, "train", drop_rng)
        assert set(np.unique(mask)) <= {0.0, 1.0 / (1.0 - p)}
        total_kept += out.sum()
        total_units += v.size
    assert total_kept / total_units == pytest.approx(1.0, abs=0.02)

    for _ in range(100):  # nll: non-negative, zero only at certainty
        q = float(rng.uniform(1e-9, 1.0))
        probs = np.array([1 - q, q])
        loss = nll_loss(probs, 1)
        assert loss >= 0.0
        assert loss == pytest.approx(-np.log(q))

    for _ in range(100):  # normalization: range, peak, fixpoint
        raw = rng.normal(scale=rng.uniform(0.1, 10), size=(3, 20))
        out = normalize_pattern(raw)
        assert out.min() >= 0.0 and out.max() <= 1.0
        if np.any(raw > 0):
            assert out.max() == 1.0
        npt.assert_array_equal(normalize_pattern(out), out)

    for _ in range(100):  # active bins: strict threshold, monotone
        pattern = rng.uniform(0, 1, (4, 25))
        t1, t2 = sorted(rng.uniform(0.05, 0.95, size=2))
        c1, c2 = active_bins(pattern, t1), active_bins(pattern, t2)
        assert np.all(c2 <= c1)
        exact = pattern.copy()
        exact[0, 0] = t1
        assert active_bins(exact, t1)[0] == (exact[0] > t1).sum()

    for _ in range(100):  # median rule: label is +1 iff strictly above
        n = int(rng.integers(2, 60))
        values = np.round(rng.normal(size=n), 1)  # duplicates likely
        samples = [
            ec.GeneSample(f"g{i}", np.zeros((1, 2)), float(values[i]), None)
            for i in range(n)
        ]
        ds = ec.Dataset(mark_names=["m"], bin_count=2, samples=samples)
        labeled = ec.discretize_expression(ds)
        med = np.median(values)
        expected = np.where(values > med, 1, -1)
        npt.assert_array_equal(labeled.labels(), expected)

    print("[acceptance] C8: PASS")
