"""Experiment analysis: estimation, noise metrics, tomography, fidelities."""

import json

import numpy as np
import pytest

from kcbs_selftest.analysis import (
    ExperimentCounts,
    context_of,
    context_stream_check,
    dump_counts,
    estimate,
    fidelity,
    load_counts,
    noise_metrics,
    optimal_isometry_fidelity,
    povm_tomography,
    probe_frequencies,
    probe_kets,
    state_tomography,
    triangle_lower_bound,
)
from kcbs_selftest.model import (
    DensityMatrix,
    depolarized_state,
    ideal_configuration,
    tilted_configuration,
)
from kcbs_selftest.simulate import sample_counts, sample_stream

ROOT5 = float(np.sqrt(5.0))


def _uniform_counts(n_shots=1000):
    contexts = {}
    for i in range(1, 6):
        j = i % 5 + 1
        contexts[(i, j)] = {"00": 250, "01": 250, "10": 250, "11": 250}
        contexts[(i, i)] = {"00": 500, "01": 0, "10": 0, "11": 500}
    return ExperimentCounts(n=5, order="normal", contexts=contexts)


def test_estimate_on_uniform_counts():
    est = estimate(_uniform_counts())
    assert est.p == pytest.approx([0.25] * 5)
    assert est.mu == pytest.approx(1.25)
    assert est.conservative < est.mu
    sigma = np.sqrt(0.25 * 0.75 / 1000)
    assert est.sigma == pytest.approx([sigma] * 5)
    assert est.conservative == pytest.approx(
        1.25 - 1.96 * np.sqrt(5 * sigma**2), abs=1e-12
    )


def test_estimate_uses_designated_context_per_order():
    counts = sample_counts(2000, seed=5)
    normal = estimate(counts)
    reversed_counts = ExperimentCounts(
        n=5,
        order="reverse",
        contexts={(j, i): v for (i, j), v in counts.contexts.items()},
    )
    flipped = estimate(reversed_counts)
    # same physical data relabeled: the estimates must agree
    for a, b in zip(normal.p, flipped.p):
        assert a == pytest.approx(b, abs=0.05)


def test_estimate_missing_context_raises():
    counts = _uniform_counts()
    broken = dict(counts.contexts)
    del broken[(1, 2)]
    with pytest.raises(ValueError):
        estimate(ExperimentCounts(n=5, order="normal", contexts=broken))


def test_counts_validation():
    with pytest.raises(ValueError):
        ExperimentCounts(n=5, order="normal", contexts={(1, 3): {"00": 10}})
    with pytest.raises(ValueError):
        ExperimentCounts(n=5, order="sideways", contexts={(1, 2): {"00": 10}})
    with pytest.raises(ValueError):
        ExperimentCounts(n=5, order="normal", contexts={(1, 2): {"00": -1}})


def test_counts_json_round_trip(tmp_path):
    counts = sample_counts(500, seed=1)
    path = tmp_path / "counts.json"
    dump_counts(counts, path)
    back = load_counts(path)
    assert back.n == counts.n
    assert back.order == counts.order
    assert back.contexts == counts.contexts


def test_noise_metrics_ideal_simulation():
    counts = sample_counts(5000, seed=2)
    report = noise_metrics(counts)
    for value in report.repeatability.values():
        assert value == pytest.approx(1.0, abs=1e-12)
    for value in report.delta.values():
        assert value == 0.0
    for value in report.overlap.values():
        assert value == 0.0


def test_probe_kets_span():
    kets = probe_kets()
    assert len(kets) == 9
    for ket in kets:
        assert np.linalg.norm(ket) == pytest.approx(1.0, abs=1e-12)


def test_state_tomography_round_trip():
    for rho in (
        depolarized_state(0.0),
        depolarized_state(0.2),
        DensityMatrix(np.diag([0.5, 0.3, 0.2]).astype(complex)),
    ):
        freq = probe_frequencies(rho)
        recovered = state_tomography(freq)
        assert fidelity(recovered, rho) >= 0.9999


def test_state_tomography_noisy_inputs_stay_physical():
    rng = np.random.default_rng(7)
    freq = probe_frequencies(depolarized_state(0.1))
    for _ in range(25):
        noisy = np.clip(freq + rng.normal(0, 0.01, size=9), 0.0, 1.0)
        rho = state_tomography(noisy)
        eigs = np.linalg.eigvalsh(rho.matrix)
        assert eigs.min() >= -1e-8
        assert np.trace(rho.matrix).real == pytest.approx(1.0, abs=1e-8)


def test_povm_tomography_recovers_projectors():
    config = ideal_configuration(5)
    projectors = config.projectors()
    kets = probe_kets()
    freq = np.empty((2, 9))
    elements = [projectors[0], np.eye(3) - projectors[0]]
    for a, element in enumerate(elements):
        for k, ket in enumerate(kets):
            freq[a, k] = (ket.conj() @ element @ ket).real
    recovered = povm_tomography(freq)
    assert len(recovered) == 2
    total = sum(recovered)
    assert np.max(np.abs(total - np.eye(3))) < 1e-8
    overlap = np.trace(recovered[0] @ projectors[0]).real
    assert overlap == pytest.approx(1.0, abs=1e-8)


def test_fidelity_known_values():
    rho0 = ideal_configuration(5).state_projector()
    assert fidelity(rho0, rho0) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(rho0, depolarized_state(0.2)) == pytest.approx(
        np.sqrt(0.8 + 0.2 / 3), abs=1e-12
    )
    third = DensityMatrix(np.eye(3, dtype=complex) / 3)
    assert fidelity(third, third) == pytest.approx(1.0, abs=1e-12)


def test_triangle_bound_hand_examples():
    x = [0.96] * 6
    y = [0.99] * 6
    result = triangle_lower_bound(x, y)
    assert result.value == pytest.approx(4.2, abs=1e-12)
    assert not result.vacuous

    exact = triangle_lower_bound([1.0] * 6, [1.0] * 6)
    assert exact.value == pytest.approx(6.0, abs=1e-12)

    weak = triangle_lower_bound([0.5] * 6, [0.5] * 6)
    assert weak.value == pytest.approx(6 - 12 * np.sqrt(0.5), abs=1e-12)
    assert weak.vacuous


def test_triangle_bound_validation():
    with pytest.raises(ValueError):
        triangle_lower_bound([0.9] * 5, [0.9] * 6)
    with pytest.raises(ValueError):
        triangle_lower_bound([1.1] * 6, [0.9] * 6)


def test_triangle_never_exceeds_direct_fidelity():
    # squared fidelities between pure states obey the bound composition:
    # F(a,c)^2 entries from F(a,b), F(b,c) via the six-term chain
    rng = np.random.default_rng(11)
    for _ in range(1000):
        kets = []
        for _ in range(3):
            v = rng.normal(size=3) + 1j * rng.normal(size=3)
            kets.append(v / np.linalg.norm(v))
        a, b, c = kets
        fab = abs(np.vdot(a, b)) ** 2
        fbc = abs(np.vdot(b, c)) ** 2
        fac = abs(np.vdot(a, c)) ** 2
        result = triangle_lower_bound([fab] * 6, [fbc] * 6)
        assert result.value <= 6 * fac + 1e-9


def test_context_of_mapping():
    assert context_of(1) == (1, 2)
    assert context_of(5) == (5, 1)
    assert context_of(6) == (1, 5)
    assert context_of(7) == (2, 1)
    assert context_of(10) == (5, 4)
    with pytest.raises(ValueError):
        context_of(0)
    with pytest.raises(ValueError):
        context_of(11)


def test_stream_check_uniform_unflagged():
    stream = sample_stream(5000, seed=3)
    report = context_stream_check(stream)
    assert not report.flagged
    assert report.p_value > 1e-3


def test_stream_check_constant_flagged():
    report = context_stream_check([4] * 400)
    assert report.flagged
    assert report.p_value < 1e-3


def test_stream_check_empty_rejected():
    with pytest.raises(ValueError):
        context_stream_check([])


def test_isometry_fit_ideal_reaches_six():
    config = ideal_configuration(5)
    fit = optimal_isometry_fidelity(config, starts=6)
    assert fit.total == pytest.approx(6.0, abs=1e-6)
    assert len(fit.components) == 6


def test_isometry_fit_tilted_below_six():
    config = tilted_configuration(150.612, [-0.649, -0.400, -0.649])
    fit = optimal_isometry_fidelity(config, starts=8)
    assert fit.total < 6.0
    assert fit.total > 4.0
