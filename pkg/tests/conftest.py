"""Shared fixtures and independent numerical oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

import epiconv as ec

settings.register_profile("suite", deadline=None, max_examples=100)
settings.load_profile("suite")


def finite_difference_gradients(params, hyper, x, label, eps=1e-5):
    """Independent central-difference gradients of the NLL loss.

    Walks every parameter entry and every input entry, evaluating the loss
    through the public forward pass only.  Returns (param_grads, input_grad)
    where param_grads is a list of arrays in the same order as
    (conv.weights, conv.bias, mlp0.weights, mlp0.bias, ...).
    """

    def loss(p, xi):
        return ec.nn.nll_loss(ec.forward(xi, p, hyper, mode="eval").probs, label)

    work = params.copy()
    arrays = [work.conv.weights, work.conv.bias]
    for layer in work.mlp:
        arrays.extend([layer.weights, layer.bias])

    param_grads = []
    for arr in arrays:
        grad = np.empty_like(arr)
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss(work, x)
            flat[i] = orig - eps
            lo = loss(work, x)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        param_grads.append(grad)

    input_grad = np.empty_like(x)
    xw = x.copy()
    flat, gflat = xw.reshape(-1), input_grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = loss(params, xw)
        flat[i] = orig - eps
        lo = loss(params, xw)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return param_grads, input_grad


def max_relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom))


TINY_HYPER = ec.Hyperparams(
    n_marks=2, bins=8, kernel=3, filters=2, pool=2, hidden=(4, 3), dropout=0.0
)


@pytest.fixture()
def tiny_hyper():
    return TINY_HYPER


SMALL_SPEC = ec.SyntheticSpec(
    n_genes=240,
    n_f=5,
    bins=40,
    high_marks=frozenset({0, 1}),
    low_marks=frozenset({3, 4}),
    signal_amplitude=1.0,
    noise_sigma=0.0,
    center_width=6,
    seed=3,
)

SMALL_HYPER = ec.Hyperparams(
    n_marks=5,
    bins=40,
    kernel=5,
    filters=8,
    pool=5,
    hidden=(32, 16),
    dropout=0.25,
    lr=0.01,
    epochs=10,
    batch=1,
    seed=3,
)


@pytest.fixture(scope="session")
def small_bundle():
    """A quick confidently-trained model on a tiny separable dataset.

    Returns (model, history, (train, valid, test) datasets).  Shared across
    modules because training it takes a few seconds.
    """
    dataset = ec.generate_synthetic(SMALL_SPEC)
    folds = ec.split_dataset(dataset, ec.SplitSpec(seed=3))
    model, history = ec.train(folds[0], folds[1], ec.TrainConfig(hyper=SMALL_HYPER))
    return model, history, folds


@pytest.fixture(scope="session")
def small_model(small_bundle):
    return small_bundle[0]
