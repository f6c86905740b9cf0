import math

import numpy as np
import pytest

from dfrelay.channel import (MarkovChannelModel, ModelBuildError,
                             build_markov_model, closed_form_outage,
                             gauss_markov_gains, load_markov_model,
                             mutual_information, outage_indicator,
                             sample_channel, save_markov_model)
from dfrelay.config import NetworkConfig
from dfrelay.seeding import stream


# --- complex Gaussian sampling ------------------------------------------------

def test_sample_channel_unit_variance_law_of_large_numbers():
    rng = stream(42, "chan")
    h = sample_channel(rng, variance=1.0, n=10**6)
    assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.01


def test_sample_channel_expected_norm():
    rng = stream(43, "chan")
    norms = [np.sum(np.abs(sample_channel(rng, 0.25, 4)) ** 2)
             for _ in range(20000)]
    assert abs(np.mean(norms) - 1.0) < 0.02  # E||h||^2 = n * sigma^2 = 1


def test_sample_channel_deterministic_under_seed():
    a = sample_channel(stream(7, "x"), 1.0, 1)
    b = sample_channel(stream(7, "x"), 1.0, 1)
    assert np.array_equal(a, b)


def test_sample_channel_rejects_bad_args():
    rng = stream(1)
    with pytest.raises(ValueError):
        sample_channel(rng, 0.0, 4)
    with pytest.raises(ValueError):
        sample_channel(rng, 1.0, 0)


def test_gauss_markov_stationary_mean():
    gains = gauss_markov_gains(stream(5, "gm"), variance=0.5, n=2, rho=0.9,
                               length=200000)
    assert abs(np.mean(gains) - 1.0) < 0.02  # n * sigma^2 = 1
    # first and second half have the same mean: the process starts stationary
    assert abs(np.mean(gains[:100000]) - np.mean(gains[100000:])) < 0.03


# --- mutual information --------------------------------------------------------

def test_mutual_information_values():
    assert mutual_information(0.0, 5.0, 0.001) == 0.0
    assert math.isclose(mutual_information(0.05, 2.0, 0.001), math.log2(101.0),
                        rel_tol=1e-12)
    assert math.isclose(mutual_information(0.001, 1.0, 0.001), 1.0, rel_tol=1e-12)


def test_mutual_information_monotone():
    base = mutual_information(0.02, 1.0, 0.001)
    assert mutual_information(0.03, 1.0, 0.001) > base
    assert mutual_information(0.02, 1.5, 0.001) > base


def test_mutual_information_errors():
    with pytest.raises(ValueError):
        mutual_information(0.02, 1.0, 0.0)
    with pytest.raises(ValueError):
        mutual_information(-0.1, 1.0, 0.001)


# --- outage indicator ------------------------------------------------------------

def test_outage_truth_table():
    assert outage_indicator(0.5, 0.5, 1.0, 1.0, "and") == 1
    assert outage_indicator(2.0, 2.0, 1.0, 1.0, "and") == 0
    assert outage_indicator(0.5, 2.0, 1.0, 1.0, "and") == 0
    assert outage_indicator(0.5, 2.0, 1.0, 1.0, "or") == 1
    assert outage_indicator(2.0, 0.5, 1.0, 1.0, "or") == 1
    assert outage_indicator(2.0, 2.0, 1.0, 1.0, "or") == 0


def test_outage_rejects_bad_rates():
    with pytest.raises(ValueError):
        outage_indicator(float("nan"), 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        outage_indicator(-0.1, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        outage_indicator(1.0, 1.0, 1.0, 1.0, mode="xor")


# --- closed-form Rayleigh outage oracle ------------------------------------------

def test_closed_form_limits():
    assert closed_form_outage(1e9, 1.0, 1.0, 0.001) < 1e-9
    assert closed_form_outage(0.05, 0.0, 1.0, 0.001) == 0.0
    assert closed_form_outage(0.0, 1.0, 1.0, 0.001) == 1.0


def test_closed_form_value():
    # (2^1 - 1) * 0.001 / (0.05 * 1) = 0.02
    expected = 1.0 - math.exp(-0.02)
    assert math.isclose(closed_form_outage(0.05, 1.0, 1.0, 0.001), expected,
                        rel_tol=1e-12)


def test_closed_form_matches_monte_carlo():
    rng = stream(11, "outage-mc")
    n = 10**6
    power, lam, sigma2, noise = 0.05, 1.0, 1.0, 0.001
    h = sample_channel(rng, sigma2, n)
    gains = np.abs(h) ** 2
    freq = np.mean(mutual_information(power, gains, noise) < lam)
    p = closed_form_outage(power, lam, sigma2, noise)
    stderr = math.sqrt(p * (1 - p) / n)
    assert abs(freq - p) < 3 * stderr


# --- Markov channel model ---------------------------------------------------------

def _single_link_model(M, rho, budget, seed=0):
    cfg = NetworkConfig(K=1, n_s=2, n_d=2)
    d = np.array([[2.5]])
    return build_markov_model(cfg, d, d, M, rho, budget, seed=seed)


def test_rho_zero_rows_approach_stationary():
    model = _single_link_model(M=4, rho=0.0, budget=10**6)
    for link in range(2):
        rows = model.transitions[link, 0]
        assert np.max(np.abs(rows - 0.25)) < 0.02


def test_high_rho_diagonal_dominance():
    model = _single_link_model(M=5, rho=0.99, budget=200000)
    for link in range(2):
        rows = model.transitions[link, 0]
        for i in range(5):
            assert all(rows[i, i] > rows[i, j] for j in range(5) if j != i)


def test_two_state_structure():
    model = _single_link_model(M=2, rho=0.5, budget=10000)
    assert model.bin_edges.shape[-1] == 3
    assert np.allclose(model.transitions.sum(axis=-1), 1.0, atol=1e-12)


def test_model_invariants_and_quantization(tiny_runtime):
    model = tiny_runtime.model
    model.validate()
    assert np.all(np.diff(model.bin_edges, axis=-1) > 0)
    # quantization is exhaustive: arbitrary gains land in exactly one bin
    gains = np.array([0.0, 1e-9, 0.01, 0.5, 3.0, 1e6])
    idx = model.quantize(0, 0, gains)
    assert np.all((idx >= 0) & (idx < model.n_states))


def test_build_rejects_bad_args():
    cfg = NetworkConfig(K=1)
    d = np.array([[2.0]])
    with pytest.raises(ValueError):
        build_markov_model(cfg, d, d, 1, 0.5, 10000)
    with pytest.raises(ValueError):
        build_markov_model(cfg, d, d, 4, 1.0, 10000)
    with pytest.raises(ValueError):
        build_markov_model(cfg, d, d, 4, 0.5, 9999)


def test_model_text_roundtrip(tmp_path, tiny_runtime):
    model = tiny_runtime.model
    path = tmp_path / "model.txt"
    save_markov_model(model, path)
    again = load_markov_model(path)
    assert np.array_equal(model.bin_edges, again.bin_edges)
    assert np.array_equal(model.transitions, again.transitions)
    assert np.array_equal(model.representatives, again.representatives)


def test_model_load_version_error(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("some-other-format-v9\n")
    with pytest.raises(ValueError, match="format"):
        load_markov_model(path)


def test_model_load_corrupt_field_named(tmp_path, tiny_runtime):
    path = tmp_path / "model.txt"
    save_markov_model(tiny_runtime.model, path)
    lines = path.read_text().splitlines()
    target = next(i for i, l in enumerate(lines) if l.startswith("reps 1 0"))
    parts = lines[target].split()
    parts[3] = "not-a-number"
    lines[target] = " ".join(parts)
    path.write_text("\n".join(lines))
    with pytest.raises(ValueError, match="reps 1 0"):
        load_markov_model(path)
