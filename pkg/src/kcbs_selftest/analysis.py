"""Measured-data side of the pipeline.

Ingests sequential-measurement counts, estimates the witness with a
conservative confidence adjustment, quantifies compatibility noise, rebuilds
states and measurement elements from probe frequencies, and composes the
fidelity bounds that connect experiment to the certified curve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.stats

from .model import DensityMatrix, KcbsConfiguration, ideal_configuration

OUTCOMES = ("00", "01", "10", "11")
CONFIDENCE_Z = 1.96
PROBE_BASIS_TAG = "probe-9"


def _next_in_cycle(i: int, n: int) -> int:
    return i % n + 1


def _prev_in_cycle(i: int, n: int) -> int:
    return (i - 2) % n + 1


@dataclass(frozen=True)
class ExperimentCounts:
    """Counts of sequential outcome pairs per ordered measurement context.

    Context (i, j) means i was measured first; outcome string "10" means the
    first click fired and the second did not.  Repeated contexts (i, i) feed
    the repeatability metric.  The order tag states which neighbour each
    measurement's designated estimation context uses.
    """

    n: int
    order: str
    contexts: Mapping[tuple[int, int], Mapping[str, int]]

    def __post_init__(self) -> None:
        if self.order not in ("normal", "reverse"):
            raise ValueError(f"unknown order tag {self.order!r}")
        clean: dict[tuple[int, int], dict[str, int]] = {}
        for (i, j), cell in self.contexts.items():
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise ValueError(f"context ({i}, {j}) outside 1..{self.n}")
            if i != j and j not in (_next_in_cycle(i, self.n), _prev_in_cycle(i, self.n)):
                raise ValueError(f"context ({i}, {j}) is not a cycle edge")
            counts = {k: int(cell.get(k, 0)) for k in OUTCOMES}
            if any(v < 0 for v in counts.values()):
                raise ValueError(f"negative count in context ({i}, {j})")
            if sum(counts.values()) == 0:
                raise ValueError(f"context ({i}, {j}) has no shots")
            clean[(i, j)] = counts
        object.__setattr__(self, "contexts", clean)

    def total(self, i: int, j: int) -> int:
        return sum(self.contexts[(i, j)].values())

    def probabilities(self, i: int, j: int) -> dict[str, float]:
        cell = self.contexts[(i, j)]
        total = sum(cell.values())
        return {k: cell[k] / total for k in OUTCOMES}

    def designated_context(self, i: int) -> tuple[int, int]:
        if self.order == "normal":
            return (i, _next_in_cycle(i, self.n))
        return (i, _prev_in_cycle(i, self.n))

    def merge(self, other: "ExperimentCounts") -> "ExperimentCounts":
        """Cell-wise sum; shards may be merged in any order."""
        if (self.n, self.order) != (other.n, other.order):
            raise ValueError("cannot merge counts with different n or order tag")
        keys = set(self.contexts) | set(other.contexts)
        merged = {}
        for key in keys:
            a = self.contexts.get(key, {})
            b = other.contexts.get(key, {})
            merged[key] = {k: a.get(k, 0) + b.get(k, 0) for k in OUTCOMES}
        return ExperimentCounts(self.n, self.order, merged)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "order": self.order,
            "contexts": [
                {"i": i, "j": j, "counts": dict(cell)}
                for (i, j), cell in sorted(self.contexts.items())
            ],
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "ExperimentCounts":
        contexts = {
            (int(entry["i"]), int(entry["j"])): entry["counts"]
            for entry in payload["contexts"]
        }
        return cls(int(payload["n"]), str(payload["order"]), contexts)


def load_counts(path: str | Path) -> ExperimentCounts:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentCounts.from_json(json.load(fh))


def dump_counts(counts: ExperimentCounts, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(counts.to_json(), fh, indent=1)
        fh.write("\n")


@dataclass(frozen=True)
class WitnessEstimate:
    """Per-measurement click probabilities with binomial confidence."""

    p: tuple[float, ...]
    sigma: tuple[float, ...]
    mu: float
    sigma_mu: float
    conservative: float

    def to_json(self) -> dict:
        return {
            "p": list(self.p),
            "sigma": list(self.sigma),
            "mu": self.mu,
            "sigma_mu": self.sigma_mu,
            "conservative": self.conservative,
        }


def estimate(counts: ExperimentCounts) -> WitnessEstimate:
    """Witness value from the designated context of each measurement.

    The click estimator counts strict (1, 0) outcomes, so double clicks are
    excluded; the summed deviation assumes independent contexts and the
    conservative value subtracts 1.96 standard deviations.
    """
    ps: list[float] = []
    sigmas: list[float] = []
    for i in range(1, counts.n + 1):
        ctx = counts.designated_context(i)
        if ctx not in counts.contexts:
            raise ValueError(f"measurement {i} has no designated context {ctx}")
        total = counts.total(*ctx)
        p = counts.contexts[ctx]["10"] / total
        ps.append(p)
        sigmas.append(math.sqrt(p * (1.0 - p) / total))
    mu = sum(ps)
    sigma_mu = math.sqrt(sum(s * s for s in sigmas))
    return WitnessEstimate(
        p=tuple(ps),
        sigma=tuple(sigmas),
        mu=mu,
        sigma_mu=sigma_mu,
        conservative=mu - CONFIDENCE_Z * sigma_mu,
    )


@dataclass(frozen=True)
class NoiseReport:
    """Repeatability, order dependence, and joint-click rates."""

    repeatability: Mapping[int, float]
    delta: Mapping[tuple[int, int], float]
    overlap: Mapping[tuple[int, int], float]

    @staticmethod
    def _stats(values) -> tuple[float, float] | None:
        vals = list(values)
        if not vals:
            return None
        return float(np.mean(vals)), float(np.std(vals))

    @property
    def repeatability_stats(self) -> tuple[float, float] | None:
        return self._stats(self.repeatability.values())

    @property
    def delta_stats(self) -> tuple[float, float] | None:
        return self._stats(self.delta.values())

    @property
    def overlap_stats(self) -> tuple[float, float] | None:
        return self._stats(self.overlap.values())

    def to_json(self) -> dict:
        def pack(stats):
            return None if stats is None else {"mean": stats[0], "std": stats[1]}

        return {
            "repeatability": {str(i): v for i, v in sorted(self.repeatability.items())},
            "delta": {f"{i},{j}": v for (i, j), v in sorted(self.delta.items())},
            "overlap": {f"{i},{j}": v for (i, j), v in sorted(self.overlap.items())},
            "repeatability_aggregate": pack(self.repeatability_stats),
            "delta_aggregate": pack(self.delta_stats),
            "overlap_aggregate": pack(self.overlap_stats),
        }


def noise_metrics(counts: ExperimentCounts) -> NoiseReport:
    """Noise metrics from whatever contexts are present.

    Each metric is independently optional: repeatability needs repeated
    contexts, order dependence needs both orders of an edge, joint clicks
    come from every distinct-pair context.
    """
    repeat: dict[int, float] = {}
    for i in range(1, counts.n + 1):
        if (i, i) in counts.contexts:
            probs = counts.probabilities(i, i)
            repeat[i] = probs["00"] + probs["11"]

    delta: dict[tuple[int, int], float] = {}
    for i in range(1, counts.n + 1):
        j = _next_in_cycle(i, counts.n)
        if (i, j) in counts.contexts and (j, i) in counts.contexts:
            fwd = counts.probabilities(i, j)
            rev = counts.probabilities(j, i)
            delta[(i, j)] = sum(abs(fwd[a + b] - rev[b + a]) for a, b in
                                (("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")))

    overlap: dict[tuple[int, int], float] = {}
    for (i, j) in counts.contexts:
        if i != j:
            overlap[(i, j)] = counts.probabilities(i, j)["11"]

    return NoiseReport(repeatability=repeat, delta=delta, overlap=overlap)


def probe_kets() -> tuple[np.ndarray, ...]:
    """Nine tomography probe directions: basis kets plus pairwise mixtures."""
    e = np.eye(3, dtype=complex)
    s = 1.0 / math.sqrt(2.0)
    kets = [
        e[0], e[1], e[2],
        s * (e[0] + e[1]), s * (e[0] + e[2]), s * (e[1] + e[2]),
        s * (e[0] + 1j * e[1]), s * (e[0] + 1j * e[2]), s * (e[1] + 1j * e[2]),
    ]
    return tuple(kets)


def _hermitian_from_params(x: np.ndarray) -> np.ndarray:
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0], rho[1, 1], rho[2, 2] = x[0], x[1], x[2]
    rho[0, 1] = x[3] + 1j * x[4]
    rho[0, 2] = x[5] + 1j * x[6]
    rho[1, 2] = x[7] + 1j * x[8]
    rho[1, 0] = np.conj(rho[0, 1])
    rho[2, 0] = np.conj(rho[0, 2])
    rho[2, 1] = np.conj(rho[1, 2])
    return rho


def _design_matrix() -> np.ndarray:
    rows = []
    for ket in probe_kets():
        proj = np.outer(ket, ket.conj())
        row = [
            proj[0, 0].real, proj[1, 1].real, proj[2, 2].real,
            2 * proj[1, 0].real, -2 * proj[1, 0].imag,
            2 * proj[2, 0].real, -2 * proj[2, 0].imag,
            2 * proj[2, 1].real, -2 * proj[2, 1].imag,
        ]
        rows.append(row)
    return np.asarray(rows)


_DESIGN = _design_matrix()
assert np.linalg.matrix_rank(_DESIGN) == 9, "probe design must be invertible"


def probe_frequencies(state: DensityMatrix | np.ndarray) -> np.ndarray:
    """Forward map: expected click frequency of each probe projector."""
    rho = state.matrix if isinstance(state, DensityMatrix) else np.asarray(state)
    return np.array([float(np.real(ket.conj() @ rho @ ket)) for ket in probe_kets()])


def _simplex_projection(w: np.ndarray) -> np.ndarray:
    ordered = np.sort(w)[::-1]
    cumulative = np.cumsum(ordered) - 1.0
    steps = np.arange(1, len(w) + 1)
    feasible = ordered - cumulative / steps > 0
    k = int(np.nonzero(feasible)[0][-1])
    tau = cumulative[k] / (k + 1)
    return np.clip(w - tau, 0.0, None)


def state_tomography(frequencies: Sequence[float]) -> DensityMatrix:
    """Linear inversion of the nine probe frequencies to the nearest state.

    Exact data inverts exactly; noisy data is projected to the trace-one PSD
    matrix closest in Frobenius norm (eigenvalue simplex projection).
    """
    f = np.asarray(frequencies, dtype=float)
    if f.shape != (9,):
        raise ValueError("expected nine probe frequencies")
    if np.any(f < -1e-9) or np.any(f > 1 + 1e-9):
        raise ValueError("frequencies must lie in [0, 1]")
    x = np.linalg.solve(_DESIGN, f)
    rho = _hermitian_from_params(x)
    w, vecs = np.linalg.eigh(rho)
    w = _simplex_projection(w)
    rho = (vecs * w) @ vecs.conj().T
    return DensityMatrix((rho + rho.conj().T) / 2)


def povm_tomography(
    frequencies: np.ndarray, rounds: int = 500, movement_tol: float = 1e-10
) -> tuple[np.ndarray, ...]:
    """Measurement elements from per-element probe frequencies.

    Each row of the frequency matrix is inverted independently, then
    alternating projections enforce positivity and completeness: clamp the
    eigenvalues of every element, then shift the common defect equally.
    """
    f = np.asarray(frequencies, dtype=float)
    if f.ndim != 2 or f.shape[1] != 9:
        raise ValueError("expected a (outcomes, 9) frequency matrix")
    if np.any(f < -1e-9) or np.any(f > 1 + 1e-9):
        raise ValueError("frequencies must lie in [0, 1]")
    elements = [_hermitian_from_params(np.linalg.solve(_DESIGN, row)) for row in f]
    count = len(elements)
    for _ in range(rounds):
        moved = 0.0
        for idx, el in enumerate(elements):
            w, vecs = np.linalg.eigh((el + el.conj().T) / 2)
            clipped = (vecs * np.clip(w, 0.0, None)) @ vecs.conj().T
            moved = max(moved, float(np.linalg.norm(clipped - el)))
            elements[idx] = clipped
        defect = (sum(elements) - np.eye(3)) / count
        for idx in range(count):
            elements[idx] = elements[idx] - defect
        moved = max(moved, float(np.linalg.norm(defect)) * count)
        if moved < movement_tol:
            break
    return tuple(elements)


def _as_density(arg: DensityMatrix | np.ndarray) -> np.ndarray:
    if isinstance(arg, DensityMatrix):
        return arg.matrix
    mat = np.asarray(arg, dtype=complex)
    if mat.shape != (3, 3) or np.linalg.norm(mat - mat.conj().T) > 1e-8:
        raise ValueError("expected a 3x3 Hermitian matrix")
    if np.linalg.eigvalsh(mat).min() < -1e-8:
        raise ValueError("matrix is not positive semidefinite")
    return mat


def fidelity(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    """Root fidelity tr sqrt(sqrt(a) b sqrt(a)); equals |<a|b>| on pure pairs."""
    am = _as_density(a)
    bm = _as_density(b)
    w, vecs = np.linalg.eigh(am)
    root = (vecs * np.sqrt(np.clip(w, 0.0, None))) @ vecs.conj().T
    inner = root @ bm @ root
    eigs = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    return float(np.sum(np.sqrt(np.clip(eigs, 0.0, None))))


@dataclass(frozen=True)
class TriangleBound:
    """Composed lower bound with a flag for vacuous (negative) results."""

    value: float
    vacuous: bool

    def to_json(self) -> dict:
        return {"value": self.value, "vacuous": self.vacuous}


def triangle_lower_bound(
    certified: Sequence[float], isometry: Sequence[float]
) -> TriangleBound:
    """Total-fidelity bound from two legs of squared component fidelities.

    Both inputs are squared fidelities, six per leg (state plus five
    post-measurement components); each component contributes
    1 - sqrt(1 - x) - sqrt(1 - y) and the six contributions sum.
    """
    xs = [float(v) for v in certified]
    ys = [float(v) for v in isometry]
    if len(xs) != 6 or len(ys) != 6:
        raise ValueError("expected six squared fidelities per leg")
    for v in xs + ys:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"fidelity input {v} outside [0, 1]")
    value = 6.0 - sum(math.sqrt(1.0 - v) for v in xs) - sum(
        math.sqrt(1.0 - v) for v in ys
    )
    return TriangleBound(value=value, vacuous=value < 0.0)


def _gell_mann() -> tuple[np.ndarray, ...]:
    g = []
    for a, b in ((0, 1), (0, 2), (1, 2)):
        sym = np.zeros((3, 3), dtype=complex)
        sym[a, b] = sym[b, a] = 1.0
        g.append(sym)
        anti = np.zeros((3, 3), dtype=complex)
        anti[a, b] = -1j
        anti[b, a] = 1j
        g.append(anti)
    g.append(np.diag([1.0, -1.0, 0.0]).astype(complex))
    g.append(np.diag([1.0, 1.0, -2.0]).astype(complex) / math.sqrt(3.0))
    return tuple(g)


_GENERATORS = _gell_mann()


def _rotation(x: np.ndarray) -> np.ndarray:
    h = sum(c * g for c, g in zip(x, _GENERATORS))
    return scipy.linalg.expm(1j * h)


@dataclass(frozen=True)
class IsometryFit:
    """Best unitary alignment of a configuration to the ideal one."""

    total: float
    components: tuple[float, ...]
    rotation: np.ndarray
    parameters: np.ndarray
    starts: int

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "components": list(self.components),
            "parameters": [float(v) for v in self.parameters],
            "starts": self.starts,
        }


def optimal_isometry_fidelity(
    config: KcbsConfiguration, starts: int = 32, seed: int = 1905
) -> IsometryFit:
    """Maximize the summed overlap with the ideal configuration over unitaries.

    The smooth squared-overlap objective drives the search; the final polish
    maximizes the root-fidelity sum directly.  The multi-start list is fixed
    by the seed, so repeated runs return the same fit.
    """
    ideal = ideal_configuration(config.n)
    given = [config.state] + [np.asarray(v) for v in config.directions]
    target = [ideal.state] + [np.asarray(v) for v in ideal.directions]

    def overlaps(x: np.ndarray) -> np.ndarray:
        rot = _rotation(x)
        return np.array(
            [abs(np.vdot(t, rot @ g)) for t, g in zip(target, given)]
        )

    def smooth_cost(x: np.ndarray) -> float:
        return -float(np.sum(overlaps(x) ** 2))

    def polish_cost(x: np.ndarray) -> float:
        return -float(np.sum(overlaps(x)))

    rng = np.random.default_rng(seed)
    points = [np.zeros(8)] + [rng.uniform(-np.pi, np.pi, 8) for _ in range(starts - 1)]
    best_x = None
    best_val = -np.inf
    for x0 in points:
        coarse = scipy.optimize.minimize(smooth_cost, x0, method="L-BFGS-B")
        fine = scipy.optimize.minimize(polish_cost, coarse.x, method="L-BFGS-B")
        val = -fine.fun
        if val > best_val:
            best_val = val
            best_x = fine.x
    assert best_x is not None
    comp = overlaps(best_x)
    return IsometryFit(
        total=float(np.sum(comp)),
        components=tuple(float(v) for v in comp),
        rotation=_rotation(best_x),
        parameters=best_x,
        starts=starts,
    )


def context_of(m: int, n: int = 5) -> tuple[int, int]:
    """Measurement pair selected by the random draw m in 1..2n."""
    if not 1 <= m <= 2 * n:
        raise ValueError(f"draw {m} outside 1..{2 * n}")
    i = (m - 1) % n + 1
    if m <= n:
        return (i, _next_in_cycle(i, n))
    return (i, _prev_in_cycle(i, n))


@dataclass(frozen=True)
class StreamReport:
    """Uniformity check of a context-choice stream."""

    counts: tuple[int, ...]
    statistic: float
    p_value: float
    flagged: bool

    def to_json(self) -> dict:
        return {
            "counts": list(self.counts),
            "statistic": self.statistic,
            "p_value": self.p_value,
            "flagged": self.flagged,
        }


def context_stream_check(stream: Sequence, n: int = 5) -> StreamReport:
    """Chi-squared uniformity over the 2n possible ordered contexts.

    Accepts raw integer draws or context pairs; a p-value below 1e-3 raises
    the flag.
    """
    bins = np.zeros(2 * n, dtype=np.int64)
    pair_to_m = {context_of(m, n): m for m in range(1, 2 * n + 1)}
    for item in stream:
        if isinstance(item, (int, np.integer)):
            m = int(item)
            if not 1 <= m <= 2 * n:
                raise ValueError(f"draw {m} outside 1..{2 * n}")
        else:
            pair = (int(item[0]), int(item[1]))
            if pair not in pair_to_m:
                raise ValueError(f"pair {pair} is not a valid ordered context")
            m = pair_to_m[pair]
        bins[m - 1] += 1
    total = int(bins.sum())
    if total == 0:
        raise ValueError("empty stream")
    expected = total / (2 * n)
    statistic = float(np.sum((bins - expected) ** 2 / expected))
    p_value = float(scipy.stats.chi2.sf(statistic, 2 * n - 1))
    return StreamReport(
        counts=tuple(int(v) for v in bins),
        statistic=statistic,
        p_value=p_value,
        flagged=p_value < 1e-3,
    )


def load_frequencies(path: str | Path) -> np.ndarray:
    """Read a probe-frequency file, checking the basis tag."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("basis") != PROBE_BASIS_TAG:
        raise ValueError(f"unknown probe basis {payload.get('basis')!r}")
    f = np.asarray(payload["frequencies"], dtype=float)
    if f.shape != (9,):
        raise ValueError("expected nine frequencies")
    return f
