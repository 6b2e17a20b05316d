"""Synthetic sequential-measurement data for exercising the analysis path.

The device model is projective: a click projects onto the measurement
direction, no click onto its complement, and the second measurement sees the
updated state.  For cycle-edge pairs this model is exactly order symmetric,
which the matched sampling mode exploits by reusing one outcome sample for
both orders; independent mode resamples each ordered context separately.
"""

from __future__ import annotations

import numpy as np

from .analysis import ExperimentCounts, OUTCOMES, _next_in_cycle
from .model import DensityMatrix, KcbsConfiguration, ideal_configuration


def sequential_distribution(
    state: np.ndarray, first: np.ndarray, second: np.ndarray
) -> dict[str, float]:
    """Exact outcome-pair probabilities for measuring first then second."""
    rho = np.asarray(state, dtype=complex)
    eye = np.eye(rho.shape[0], dtype=complex)
    probs: dict[str, float] = {}
    for a, proj_a in ((1, first), (0, eye - first)):
        branch = proj_a @ rho @ proj_a
        weight = float(np.real(np.trace(branch)))
        if weight <= 0.0:
            probs[f"{a}1"] = 0.0
            probs[f"{a}0"] = 0.0
            continue
        clicked = float(np.real(np.trace(second @ branch))) / weight
        clicked = min(max(clicked, 0.0), 1.0)
        probs[f"{a}1"] = weight * clicked
        probs[f"{a}0"] = weight * (1.0 - clicked)
    return {k: probs[k] for k in OUTCOMES}


def sample_counts(
    shots: int,
    state: DensityMatrix | np.ndarray | None = None,
    config: KcbsConfiguration | None = None,
    seed: int = 7,
    pairing: str = "matched",
    repeats: bool = True,
) -> ExperimentCounts:
    """Draw per-context outcome counts for every ordered cycle edge.

    Matched pairing draws one sample per undirected edge and books the same
    outcomes under both orders with labels swapped, so order-dependence
    metrics vanish identically, as they do for the exact model.  The seed
    fixes the stream; each context receives the full shot budget.
    """
    if pairing not in ("matched", "independent"):
        raise ValueError(f"unknown pairing {pairing!r}")
    if shots < 1:
        raise ValueError("shots must be positive")
    if config is None:
        config = ideal_configuration()
    if state is None:
        rho = config.state_projector()
    else:
        rho = state.matrix if isinstance(state, DensityMatrix) else np.asarray(state)
    projs = config.projectors()
    rng = np.random.default_rng(seed)

    def draw(first: int, second: int) -> dict[str, int]:
        dist = sequential_distribution(rho, projs[first - 1], projs[second - 1])
        sample = rng.multinomial(shots, [dist[k] for k in OUTCOMES])
        return dict(zip(OUTCOMES, (int(v) for v in sample)))

    contexts: dict[tuple[int, int], dict[str, int]] = {}
    for i in range(1, config.n + 1):
        j = _next_in_cycle(i, config.n)
        forward = draw(i, j)
        if pairing == "matched":
            backward = {b + a: forward[a + b] for a in "01" for b in "01"}
        else:
            backward = draw(j, i)
        contexts[(i, j)] = forward
        contexts[(j, i)] = backward
    if repeats:
        for i in range(1, config.n + 1):
            contexts[(i, i)] = draw(i, i)
    return ExperimentCounts(n=config.n, order="normal", contexts=contexts)


def sample_stream(length: int, seed: int = 7, n: int = 5) -> np.ndarray:
    """Uniform draws over the 2n ordered-context labels."""
    rng = np.random.default_rng(seed)
    return rng.integers(1, 2 * n + 1, size=length)
