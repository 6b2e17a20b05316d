"""Swap-circuit construction and the linearized fidelity objective.

The swap circuit is assembled symbolically from the measurement letters, so
its blocks can be fed to the moment relaxation.  All numeric oracles work in
the frame where the first two cycle directions coincide with the first two
computational basis vectors; moments are basis independent, so nothing
downstream depends on that choice, but in this frame the ideal circuit
transfers the system state into the ancilla exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import DensityMatrix, KcbsConfiguration, ideal_configuration
from .words import (
    PHAT,
    NcPoly,
    Word,
    adjoint,
    enumerate_words,
    evaluate,
    parse,
    proj,
    to_string,
)

FRAME_TOL = 1e-10
DECOMP_TOL = 1e-8


class SpanDeficiencyError(ValueError):
    """Raised when the projector words cannot reproduce the translation."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def translation_matrix() -> np.ndarray:
    """The cyclic shift on the trusted qutrit: e0 -> e1 -> e2 -> e0."""
    p = np.zeros((3, 3))
    for k in range(3):
        p[(k + 1) % 3, k] = 1.0
    return p


def swap_frame(config: KcbsConfiguration) -> np.ndarray:
    """Unitary whose rows are <u1|, <u2| and the completing bra <v|.

    Applying it sends u1, u2 to the first two basis vectors.  The phase of v
    is fixed by making its largest-magnitude entry real positive, so the
    frame is deterministic.
    """
    u1 = config.directions[0]
    u2 = config.directions[1]
    v = np.cross(u1.conj(), u2.conj())
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise ValueError("first two directions are parallel; no frame exists")
    v = v / norm
    pivot = int(np.argmax(np.abs(v)))
    v = v * (v[pivot].conj() / abs(v[pivot]))
    frame = np.vstack([u1.conj(), u2.conj(), v.conj()])
    defect = np.max(np.abs(frame @ frame.conj().T - np.eye(3)))
    if defect > FRAME_TOL:
        raise ValueError(f"frame rows not orthonormal (defect {defect:.3e})")
    return frame


@dataclass(frozen=True)
class Realization:
    """Concrete matrices for the letters, plus the system state vector."""

    projectors: tuple[np.ndarray, ...]
    state: np.ndarray
    translation: np.ndarray


def aligned_realization(config: KcbsConfiguration | None = None, n: int = 5) -> Realization:
    """Rank-1 projectors and state rotated into the swap frame.

    This is the canonical numeric oracle: every moment evaluated here equals
    the same moment in the original basis.
    """
    if config is None:
        config = ideal_configuration(n)
    w = swap_frame(config)
    projectors = tuple(
        w @ np.outer(u, u.conj()) @ w.conj().T for u in config.directions
    )
    return Realization(projectors, w @ config.state, translation_matrix())


@dataclass(frozen=True)
class TranslationDecomposition:
    """Projector-word combination reproducing the qutrit translation."""

    coefficients: NcPoly
    residual: float
    n: int
    max_word_len: int


def decompose_translation(
    n: int = 5, max_word_len: int = 3, tol: float = DECOMP_TOL
) -> TranslationDecomposition:
    """Least-squares coefficients alpha with sum_l alpha_l * l = translation.

    Words are evaluated on the aligned ideal projectors; the real minimum-norm
    solution is deterministic for a fixed word ordering.
    """
    if max_word_len < 1:
        raise ValueError("max_word_len must be at least 1")
    realization = aligned_realization(n=n)
    words = enumerate_words(n, max_word_len, include_unitary=False)
    columns = np.stack(
        [evaluate(w, realization.projectors, None).reshape(-1) for w in words],
        axis=1,
    )
    target = translation_matrix().reshape(-1)
    design = np.vstack([columns.real, columns.imag])
    rhs = np.concatenate([target.real, target.imag])
    alpha, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    kept = {w: float(a) for w, a in zip(words, alpha) if abs(a) > 1e-12}
    poly = NcPoly(kept)
    recon = poly.evaluate(realization.projectors, None)
    residual = float(np.linalg.norm(recon - translation_matrix(), 2))
    if residual > tol:
        raise SpanDeficiencyError(
            f"projector words of length <= {max_word_len} miss the translation "
            f"(residual {residual:.3e}, tolerance {tol:.1e})",
            residual,
        )
    return TranslationDecomposition(poly, residual, n, max_word_len)


@dataclass(frozen=True)
class SwapBlocks:
    """Ancilla-row blocks B_k of the swap circuit applied to |0> ancilla."""

    blocks: tuple[NcPoly, NcPoly, NcPoly]
    decomposition: TranslationDecomposition


def _phat_power(k: int) -> NcPoly:
    return NcPoly.from_word(Word((PHAT,) * k))


def _matmul(a: list[list[NcPoly]], b: list[list[NcPoly]], n: int) -> list[list[NcPoly]]:
    out = []
    for i in range(3):
        row = []
        for j in range(3):
            acc = NcPoly()
            for k in range(3):
                acc = acc + a[i][k].mul(b[k][j], n)
            row.append(acc)
        out.append(row)
    return out


def build_swap_blocks(decomp: TranslationDecomposition) -> SwapBlocks:
    """Assemble T.U.V.U symbolically and extract the ancilla-|0> column.

    The unitary letter stands in for the translation; the isometry identity
    sum_k adjoint(B_k).B_k = I is checked symbolically before returning.
    """
    n = decomp.n
    one = NcPoly.identity()
    zero = NcPoly()
    p1 = NcPoly.from_word(Word((proj(1),)))
    p2 = NcPoly.from_word(Word((proj(2),)))
    complement = (one - p1).mul(one - p2, n)

    u_mat = [[_phat_power(a) if a == b else zero for b in range(3)] for a in range(3)]
    v_mat: list[list[NcPoly]] = []
    for a in range(3):
        row = []
        for b in range(3):
            if a == b:
                row.append(p1)
            elif a == (b - 1) % 3:
                row.append(p2)
            else:
                row.append(complement)
        v_mat.append(row)
    t_mat = [[one if a == (-b) % 3 else zero for b in range(3)] for a in range(3)]

    s = _matmul(t_mat, _matmul(u_mat, _matmul(v_mat, u_mat, n), n), n)
    blocks = tuple(s[k][0] for k in range(3))

    gram = NcPoly()
    for blk in blocks:
        gram = gram + blk.adjoint().mul(blk, n)
    defect = gram - NcPoly.identity()
    worst = max((abs(c) for c in defect.prune(0.0).terms.values()), default=0.0)
    if worst > 1e-10:
        raise AssertionError(f"swap blocks fail the isometry identity ({worst:.3e})")
    return SwapBlocks(blocks, decomp)


@dataclass(frozen=True)
class ObjectiveFunctional:
    """Linear functional f = offset + sum_w f_w <w> over canonical words."""

    terms: Mapping[Word, float]
    offset: float = 0.0

    def words(self) -> tuple[Word, ...]:
        from .words import sort_key

        return tuple(sorted(self.terms, key=sort_key))

    def max_word_len(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    def value(self, moments: Mapping[Word, float]) -> float:
        total = self.offset
        for word, coeff in self.terms.items():
            total += coeff * moments[word]
        return total

    def to_json(self) -> dict[str, float]:
        # <I> = 1 always, so the offset folds into the identity coefficient
        payload = {to_string(w): c for w, c in self.terms.items()}
        if self.offset:
            payload["I"] = payload.get("I", 0.0) + self.offset
        return payload

    @staticmethod
    def from_json(payload: Mapping[str, float]) -> "ObjectiveFunctional":
        return ObjectiveFunctional(
            {parse(key): float(value) for key, value in payload.items()}, 0.0
        )


def objective_coefficients(
    blocks: SwapBlocks, config: KcbsConfiguration | None = None
) -> ObjectiveFunctional:
    """Expand the six fidelity terms into word coefficients.

    The state term contracts the extracted ancilla state against the target
    state written in the swap frame; each measurement term sandwiches the
    block products between its projector and is normalized by the ideal
    outcome probability so the ideal realization scores exactly one per term.
    """
    n = blocks.decomposition.n
    if config is None:
        config = ideal_configuration(n)
    if config.n != n:
        raise ValueError("configuration size does not match the decomposition")
    frame = swap_frame(config)
    psi = frame @ config.state

    products = [
        [blocks.blocks[kp].adjoint().mul(blocks.blocks[k], n) for k in range(3)]
        for kp in range(3)
    ]

    accum: dict[Word, complex] = {}

    def add(poly: NcPoly, scale: complex) -> None:
        if abs(scale) < 1e-16:
            return
        for word, coeff in poly.terms.items():
            accum[word] = accum.get(word, 0.0) + scale * coeff

    for kp in range(3):
        for k in range(3):
            add(products[kp][k], np.conj(psi[k]) * psi[kp])

    for i in range(1, n + 1):
        u = frame @ config.directions[i - 1]
        p_ideal = abs(np.vdot(config.directions[i - 1], config.state)) ** 2
        if p_ideal < 1e-12:
            raise ValueError(f"direction {i} is orthogonal to the target state")
        pi = NcPoly.from_word(Word((proj(i),)))
        for kp in range(3):
            for k in range(3):
                sandwich = pi.mul(products[kp][k], n).mul(pi, n)
                add(sandwich, np.conj(u[k]) * u[kp] / p_ideal)

    terms: dict[Word, float] = {}
    for word, coeff in accum.items():
        partner = adjoint(word)
        paired = 0.5 * (coeff + np.conj(accum.get(partner, 0.0)))
        if abs(paired.imag) > 1e-9:
            raise AssertionError(f"objective coefficient not real at {word!r}")
        if abs(paired.real) > 1e-14:
            terms[word] = float(paired.real)
    return ObjectiveFunctional(terms, 0.0)


def _as_density(state: np.ndarray | DensityMatrix, dim: int) -> np.ndarray:
    if isinstance(state, DensityMatrix):
        mat = state.matrix
    else:
        arr = np.asarray(state, dtype=complex)
        if arr.ndim == 1:
            arr = arr / np.linalg.norm(arr)
            mat = np.outer(arr, arr.conj())
        else:
            mat = arr
    if mat.shape != (dim, dim):
        raise ValueError(f"state dimension {mat.shape} does not match {dim}")
    return mat


def polar_unitary(matrix: np.ndarray) -> np.ndarray:
    """Unitary factor of the polar decomposition, via SVD."""
    u, _, vt = np.linalg.svd(matrix)
    return u @ vt


@dataclass(frozen=True)
class SwapDiagnostics:
    """Numeric health report for the swap circuit on a given realization."""

    isometry_defect: float
    state_term: float
    measurement_terms: tuple[float, ...]

    @property
    def terms(self) -> tuple[float, ...]:
        return (self.state_term, *self.measurement_terms)

    @property
    def total(self) -> float:
        return float(sum(self.terms))


def numeric_swap_check(
    projectors: Sequence[np.ndarray],
    state: np.ndarray | DensityMatrix,
    blocks: SwapBlocks,
    config: KcbsConfiguration | None = None,
) -> SwapDiagnostics:
    """Evaluate the blocks on concrete matrices and report the six terms.

    The unitary letter is instantiated as the polar factor of the evaluated
    translation combination, so any realization satisfying the projector and
    exclusivity assumptions yields an exact isometry up to rounding.
    """
    n = blocks.decomposition.n
    if config is None:
        config = ideal_configuration(n)
    projectors = [np.asarray(p, dtype=complex) for p in projectors]
    if len(projectors) != n:
        raise ValueError(f"expected {n} projectors, got {len(projectors)}")
    dim = projectors[0].shape[0]
    for p in projectors:
        if p.shape != (dim, dim):
            raise ValueError("projectors must share one square dimension")
        if np.max(np.abs(p - p.conj().T)) > 1e-10 or np.max(np.abs(p @ p - p)) > 1e-10:
            raise ValueError("assignment is not a projector within 1e-10")
    rho = _as_density(state, dim)

    p_a = blocks.decomposition.coefficients.evaluate(projectors, None)
    phat = polar_unitary(p_a)
    numeric = [blk.evaluate(projectors, phat) for blk in blocks.blocks]

    gram = sum(b.conj().T @ b for b in numeric)
    defect = float(np.linalg.norm(gram - np.eye(dim), 2))

    def extracted(density: np.ndarray) -> np.ndarray:
        sigma = np.empty((3, 3), dtype=complex)
        for k in range(3):
            for kp in range(3):
                sigma[k, kp] = np.trace(numeric[kp].conj().T @ numeric[k] @ density)
        return sigma

    frame = swap_frame(config)
    psi = frame @ config.state
    state_term = float(np.real(psi.conj() @ extracted(rho) @ psi))

    meas_terms = []
    for i in range(1, n + 1):
        u = frame @ config.directions[i - 1]
        p_ideal = abs(np.vdot(config.directions[i - 1], config.state)) ** 2
        post = projectors[i - 1] @ rho @ projectors[i - 1]
        meas_terms.append(float(np.real(u.conj() @ extracted(post) @ u)) / p_ideal)

    return SwapDiagnostics(defect, state_term, tuple(meas_terms))


def apply_swap(
    blocks: SwapBlocks, projectors: Sequence[np.ndarray], vector: np.ndarray
) -> np.ndarray:
    """Image of vector (x) |0> under the circuit, as a (dim*3,) vector.

    Component ordering is system-major: entry a*3 + k is <a| (x) <k|.
    """
    projectors = [np.asarray(p, dtype=complex) for p in projectors]
    p_a = blocks.decomposition.coefficients.evaluate(projectors, None)
    phat = polar_unitary(p_a)
    x = np.asarray(vector, dtype=complex)
    out = np.stack(
        [blk.evaluate(projectors, phat) @ x for blk in blocks.blocks], axis=1
    )
    return out.reshape(-1)
