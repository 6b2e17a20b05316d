"""Reference five-cycle configurations, states, and witness values.

The ideal configuration on the odd n-cycle lives in a qutrit: direction l is
cos(t)|0> + sin(t)sin(phi_l)|1> + sin(t)cos(phi_l)|2> with phi_l = l*pi*(n-1)/n
and cos(t)^2 = cos(pi/n)/(1+cos(pi/n)); the reference state is |0>.  Adjacent
directions are orthogonal, the witness sum of projection probabilities reaches
n*cos(pi/n)/(1+cos(pi/n)) there, and no deterministic assignment exceeds
(n-1)/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ORTHO_TOL = 1e-10
UNIT_TOL = 1e-12


def quantum_value(n: int) -> float:
    """Maximum witness value over quantum realizations of the n-cycle."""
    _check_cycle(n)
    c = math.cos(math.pi / n)
    return n * c / (1.0 + c)


def classical_value(n: int) -> float:
    """Maximum witness value over deterministic assignments: (n-1)/2."""
    _check_cycle(n)
    return (n - 1) / 2.0


def _check_cycle(n: int) -> None:
    if n < 5 or n % 2 == 0:
        raise ValueError(f"cycle size must be odd and at least 5, got {n}")


@dataclass(frozen=True)
class KcbsConfiguration:
    """A state vector plus n cyclically-orthogonal measurement directions."""

    n: int
    state: np.ndarray  # shape (3,), unit norm
    directions: np.ndarray  # shape (n, 3), unit rows, row l-1 is direction l

    def __post_init__(self):
        _check_cycle(self.n)
        state = np.asarray(self.state, dtype=complex).reshape(3)
        dirs = np.asarray(self.directions, dtype=complex).reshape(self.n, 3)
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "directions", dirs)
        if abs(np.linalg.norm(state) - 1.0) > UNIT_TOL:
            raise ValueError("state vector is not normalized")
        norms = np.linalg.norm(dirs, axis=1)
        if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
            raise ValueError("directions are not unit vectors")
        for l in range(self.n):
            overlap = np.vdot(dirs[l], dirs[(l + 1) % self.n])
            if abs(overlap) > ORTHO_TOL:
                raise ValueError(
                    f"directions {l + 1} and {(l + 1) % self.n + 1} are not "
                    f"orthogonal (|overlap| = {abs(overlap):.3e})"
                )

    def projectors(self) -> list[np.ndarray]:
        return [np.outer(u, u.conj()) for u in self.directions]

    def state_projector(self) -> np.ndarray:
        return np.outer(self.state, self.state.conj())

    def witness(self) -> float:
        return witness_value(self.projectors(), self.state_projector())


def ideal_configuration(n: int = 5) -> KcbsConfiguration:
    """Ideal n-cycle configuration; the witness equals quantum_value(n)."""
    _check_cycle(n)
    cos_t_sq = math.cos(math.pi / n) / (1.0 + math.cos(math.pi / n))
    cos_t = math.sqrt(cos_t_sq)
    sin_t = math.sqrt(1.0 - cos_t_sq)
    dirs = np.zeros((n, 3), dtype=complex)
    for l in range(1, n + 1):
        phi = l * math.pi * (n - 1) / n
        dirs[l - 1] = (cos_t, sin_t * math.sin(phi), sin_t * math.cos(phi))
    state = np.array([1.0, 0.0, 0.0], dtype=complex)
    return KcbsConfiguration(n=n, state=state, directions=dirs)


def tilted_configuration(theta_deg: float, u0: Sequence[float]) -> KcbsConfiguration:
    """One-parameter family of real five-cycle configurations.

    The five directions are, with s = sin(theta), c = cos(theta) and theta in
    degrees: (1,0,0), (0,0,1), (-c,s,0), (s,c,s)/sqrt(1+s^2), (0,s,-c).
    Adjacent pairs are orthogonal for every theta.  ``u0`` is the state
    vector; it is normalized here.
    """
    t = math.radians(theta_deg)
    s, c = math.sin(t), math.cos(t)
    dirs = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [-c, s, 0.0],
            [s / math.sqrt(1 + s * s), c / math.sqrt(1 + s * s), s / math.sqrt(1 + s * s)],
            [0.0, s, -c],
        ],
        dtype=complex,
    )
    state = np.asarray(u0, dtype=complex).reshape(3)
    norm = np.linalg.norm(state)
    if norm == 0:
        raise ValueError("state vector must be nonzero")
    return KcbsConfiguration(n=5, state=state / norm, directions=dirs)


@dataclass(frozen=True)
class DensityMatrix:
    """Validated qutrit density matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {mat.shape}")
        if np.max(np.abs(mat - mat.conj().T)) > 1e-12:
            raise ValueError("matrix is not hermitian")
        eigs = np.linalg.eigvalsh(mat)
        if eigs.min() < -1e-9:
            raise ValueError(f"matrix is not positive semidefinite (min eig {eigs.min():.3e})")
        if abs(np.trace(mat).real - 1.0) > 1e-10:
            raise ValueError(f"trace is {np.trace(mat).real}, expected 1")
        object.__setattr__(self, "matrix", mat)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def depolarized_state(p: float) -> DensityMatrix:
    """(1-p)|0><0| + (p/3) I, the trace-one qutrit depolarization of |0>."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing parameter must be in [0, 1], got {p}")
    mat = (1.0 - p) * np.diag([1.0, 0.0, 0.0]).astype(complex) + (p / 3.0) * np.eye(3)
    return DensityMatrix(mat)


def depolarized_state_ninth(p: float) -> np.ndarray:
    """Literal (1-p)|0><0| + (p/9) I variant.

    Not trace-one for p > 0, so it is returned as a raw matrix rather than a
    DensityMatrix.  Kept for comparison against sources that define the mixed
    state this way.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing parameter must be in [0, 1], got {p}")
    return (1.0 - p) * np.diag([1.0, 0.0, 0.0]).astype(complex) + (p / 9.0) * np.eye(3)


def witness_value(projectors: Sequence[np.ndarray], rho: np.ndarray | DensityMatrix) -> float:
    """Sum of tr(Pi_i rho) over the cycle."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    total = 0.0
    for pi in projectors:
        total += float(np.trace(pi @ mat).real)
    return total


def config_to_json(config: KcbsConfiguration) -> str:
    def c2pair(z: complex) -> list[float]:
        return [float(z.real), float(z.imag)]

    payload = {
        "n": config.n,
        "state": [c2pair(z) for z in config.state],
        "directions": [[c2pair(z) for z in row] for row in config.directions],
    }
    return json.dumps(payload, indent=2)


def config_from_json(text: str) -> KcbsConfiguration:
    payload = json.loads(text)
    state = np.array([complex(re, im) for re, im in payload["state"]])
    dirs = np.array([[complex(re, im) for re, im in row] for row in payload["directions"]])
    return KcbsConfiguration(n=int(payload["n"]), state=state, directions=dirs)
