"""Moment-matrix relaxation of the fidelity objective.

Variables are equality classes of canonical words: the moment of a word and
of its adjoint share one real variable.  A problem bundles the moment matrix
cell layout, the localizing block of the translation combination, the pinned
normalization, and the observed-statistic constraints.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from ._kernels import pair_products
from .isometry import (
    ObjectiveFunctional,
    TranslationDecomposition,
    aligned_realization,
    build_swap_blocks,
    decompose_translation,
    objective_coefficients,
)
from .model import KcbsConfiguration
from .words import (
    IDENTITY,
    PHAT_ADJ,
    Word,
    adjoint,
    encode_words,
    enumerate_words,
    evaluate,
    multiply,
    proj,
    sort_key,
    to_string,
)


class IndexExtensionError(ValueError):
    """Raised when an entry needs moment classes the index cannot supply."""

    def __init__(self, message: str, words: tuple[Word, ...] = ()):
        super().__init__(message)
        self.words = words


@dataclass(frozen=True)
class MomentIndex:
    """Ordered word list labelling the rows of the moment matrix."""

    n: int
    level: int
    words: tuple[Word, ...]
    extension: tuple[Word, ...]
    include_unitary: bool = True

    @property
    def size(self) -> int:
        return len(self.words)


def _factorable(word: Word, present: set[Word]) -> bool:
    letters = word.letters or ()
    for cut in range(len(letters) + 1):
        left = adjoint(Word(letters[:cut]))
        right = Word(letters[cut:])
        if left in present and right in present:
            return True
    return False


def _middle_halves(word: Word) -> tuple[Word, Word]:
    letters = word.letters or ()
    cut = (len(letters) + 1) // 2
    return adjoint(Word(letters[:cut])), Word(letters[cut:])


def _extended(index: MomentIndex, extra: set[Word]) -> MomentIndex:
    new = extra - set(index.words)
    return MomentIndex(
        n=index.n,
        level=index.level,
        words=tuple(sorted(set(index.words) | new, key=sort_key)),
        extension=tuple(sorted(set(index.extension) | new, key=sort_key)),
        include_unitary=index.include_unitary,
    )


def build_index(
    level: int,
    objective: ObjectiveFunctional | None = None,
    n: int = 5,
    include_unitary: bool = True,
) -> MomentIndex:
    """All canonical words up to the level, closed under objective factoring.

    When an objective word cannot be written as adjoint(v1)*v2 with both
    halves in the index, the two middle-split halves are added; that keeps
    the matrix small instead of bumping the whole level.
    """
    if level < 1:
        raise ValueError("level must be at least 1")
    base = enumerate_words(n, level, include_unitary=include_unitary)
    present = set(base)
    added: list[Word] = []
    if objective is not None:
        for word in sorted(objective.terms, key=sort_key):
            if _factorable(word, present):
                continue
            for piece in _middle_halves(word):
                if piece not in present:
                    present.add(piece)
                    added.append(piece)
    words = tuple(sorted(present, key=sort_key))
    return MomentIndex(n, level, words, tuple(sorted(added, key=sort_key)), include_unitary)


@dataclass(frozen=True, eq=False)
class MomentClasses:
    """Partition of moment-matrix cells by canonical product word."""

    index: MomentIndex
    reps: tuple[Word, ...]
    cell_class: np.ndarray
    identity_class: int
    lookup: Mapping[Word, int]
    multiplicity: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.reps)

    def class_of(self, word: Word) -> int:
        try:
            return self.lookup[word]
        except KeyError:
            raise IndexExtensionError(
                f"word {to_string(word)!r} has no moment class at this level"
            ) from None


def build_moment_constraints(index: MomentIndex) -> MomentClasses:
    """Group the cells (v, w) by the canonical form of adjoint(v)*w.

    A word and its adjoint land in the same class (real moments); cells whose
    product annihilates are pinned to zero and carry no variable.
    """
    words = list(index.words)
    m = len(words)
    codes, lengths = encode_words(words)
    width = max(2 * codes.shape[1], 1)
    prod = np.full((m * m, width), -1, dtype=np.int64)
    prod_len = np.empty(m * m, dtype=np.int64)
    pair_products(codes, lengths, index.n, prod, prod_len)

    # codes shifted by one so the pad byte is 0; fits uint8 for byte keys
    shifted = np.where(prod >= 0, prod + 1, 0).astype(np.uint8)
    phat_byte = np.uint8(PHAT_ADJ)  # PHAT + 1 == PHAT_ADJ numerically
    phat_adj_byte = np.uint8(PHAT_ADJ + 1)
    adj = np.zeros_like(shifted)
    for length in np.unique(prod_len):
        if length <= 0:
            continue
        mask = prod_len == length
        block = shifted[mask, :length][:, ::-1].copy()
        ph = block == phat_byte
        pa = block == phat_adj_byte
        block[ph] = phat_adj_byte
        block[pa] = phat_byte
        adj[mask, :length] = block

    key_of_row: dict[int, bytes] = {}
    key_lengths: dict[bytes, int] = {}
    for row in np.nonzero(prod_len >= 0)[0]:
        length = int(prod_len[row])
        a = shifted[row, :length].tobytes()
        b = adj[row, :length].tobytes()
        key = a if a <= b else b
        key_of_row[int(row)] = key
        key_lengths[key] = length

    ordered = sorted(key_lengths, key=lambda k: (key_lengths[k], k))
    class_ids = {key: cid for cid, key in enumerate(ordered)}

    cell_class = np.full((m, m), -1, dtype=np.int64)
    for row, key in key_of_row.items():
        cell_class[row // m, row % m] = class_ids[key]

    reps = tuple(
        Word(tuple(int(c) - 1 for c in key)) for key in ordered
    )
    lookup: dict[Word, int] = {}
    for cid, rep in enumerate(reps):
        lookup[rep] = cid
        lookup[adjoint(rep)] = cid
    multiplicity = np.bincount(
        cell_class[cell_class >= 0].ravel(), minlength=len(reps)
    ).astype(np.int64)

    return MomentClasses(
        index=index,
        reps=reps,
        cell_class=cell_class,
        identity_class=lookup[IDENTITY],
        lookup=lookup,
        multiplicity=multiplicity,
    )


@dataclass(frozen=True)
class Equality:
    cls: tuple[int, ...]
    coef: tuple[float, ...]
    rhs: float


@dataclass(frozen=True, eq=False)
class LocalizingBlock:
    """PSD block whose entries are fixed combinations of moment classes."""

    rows: tuple[Word, ...]
    level: int
    ptr: np.ndarray
    cls: np.ndarray
    coef: np.ndarray
    hermiticity: tuple[Equality, ...] = ()

    @property
    def size(self) -> int:
        return len(self.rows)

    def matrix(self, y: np.ndarray) -> np.ndarray:
        r = self.size
        if not len(self.cls):
            return np.zeros((r, r))
        cell = np.repeat(np.arange(r * r), np.diff(self.ptr))
        values = np.bincount(cell, weights=self.coef * np.asarray(y)[self.cls], minlength=r * r)
        return values.reshape(r, r)


def build_localizing(
    decomp: TranslationDecomposition,
    classes: MomentClasses,
    level: int | None = None,
) -> LocalizingBlock | None:
    """Block with entries sum_l alpha_l <adjoint(v) . Ph~ . l . w>.

    Ph~ is the adjoint unitary letter, so on any realization where the letter
    is the unitary polar factor of the translation combination the block's
    exact value is the Hermitian polar part, which is PSD.  Rows default to
    index words one level below the matrix level; entries are symmetrized
    cell-wise, which is value-preserving since moments are real.
    """
    index = classes.index
    if level is None:
        level = index.level - 1
    if level < 0:
        return None
    rows = tuple(
        w for w in index.words if len(w) <= level and w not in set(index.extension)
    )
    n = index.n
    dict_items = sorted(
        decomp.coefficients.terms.items(), key=lambda kv: sort_key(kv[0])
    )
    mids = [multiply(Word((PHAT_ADJ,)), lw, n) for lw, _ in dict_items]
    alphas = [coef for _, coef in dict_items]

    r = len(rows)
    raw: list[list[dict[int, float]]] = [[{} for _ in range(r)] for _ in range(r)]
    missing: set[Word] = set()
    for i, left in enumerate(rows):
        left_adj = adjoint(left)
        for j, right in enumerate(rows):
            acc = raw[i][j]
            for mid, alpha in zip(mids, alphas):
                word = multiply(multiply(left_adj, mid, n), right, n)
                if word.is_zero:
                    continue
                try:
                    cid = classes.class_of(word)
                except IndexExtensionError:
                    missing.add(word)
                    continue
                acc[cid] = acc.get(cid, 0.0) + alpha
    if missing:
        shown = ", ".join(sorted(to_string(w) for w in missing)[:12])
        raise IndexExtensionError(
            "localizing entries need classes beyond the index: " + shown,
            words=tuple(sorted(missing, key=sort_key)),
        )

    ptr = [0]
    cls: list[int] = []
    coef: list[float] = []
    for i in range(r):
        for j in range(r):
            merged: dict[int, float] = {}
            for cid, a in raw[i][j].items():
                merged[cid] = merged.get(cid, 0.0) + 0.5 * a
            for cid, a in raw[j][i].items():
                merged[cid] = merged.get(cid, 0.0) + 0.5 * a
            for cid in sorted(merged):
                if abs(merged[cid]) > 1e-14:
                    cls.append(cid)
                    coef.append(merged[cid])
            ptr.append(len(cls))

    # The block value on any realization is the compression of the Hermitian
    # polar part, so the transposed cell carries the same number even though
    # its linear form differs.  Storing the symmetrized average alone would
    # silently drop that information and admit phase deformations that
    # collapse every unitary-letter moment; the cell-pair differences must be
    # pinned to zero as explicit equalities.
    seen: set[tuple[tuple[int, int], ...]] = set()
    sym: list[Equality] = []
    for i in range(r):
        for j in range(i + 1, r):
            diff: dict[int, float] = dict(raw[i][j])
            for cid, a in raw[j][i].items():
                diff[cid] = diff.get(cid, 0.0) - a
            diff = {cid: a for cid, a in diff.items() if abs(a) > 1e-12}
            if not diff:
                continue
            scale = max(abs(a) for a in diff.values())
            key = tuple(
                (cid, int(round(diff[cid] / scale * 1_000_000))) for cid in sorted(diff)
            )
            neg = tuple((cid, -q) for cid, q in key)
            if key in seen or neg in seen:
                continue
            seen.add(key)
            sym.append(
                Equality(
                    tuple(sorted(diff)),
                    tuple(float(diff[cid]) for cid in sorted(diff)),
                    0.0,
                )
            )
    return LocalizingBlock(
        rows=rows,
        level=level,
        ptr=np.asarray(ptr, dtype=np.int64),
        cls=np.asarray(cls, dtype=np.int64),
        coef=np.asarray(coef, dtype=np.float64),
        hermiticity=tuple(sym),
    )


@dataclass(frozen=True, eq=False)
class MomentProblem:
    """Assembled conic program over moment-class variables."""

    n: int
    level: int
    index: MomentIndex
    classes: MomentClasses
    localizing: tuple[LocalizingBlock, ...]
    objective: np.ndarray
    objective_offset: float
    maximize: bool
    equalities: tuple[Equality, ...]
    statistic: Mapping[str, object]

    @property
    def n_classes(self) -> int:
        return self.classes.n_classes

    def moment_matrix(self, y: np.ndarray) -> np.ndarray:
        cells = self.classes.cell_class
        safe = np.clip(cells, 0, None)
        return np.where(cells >= 0, np.asarray(y)[safe], 0.0)

    def objective_value(self, y: np.ndarray) -> float:
        raw = float(self.objective @ y + self.objective_offset)
        return -raw if self.maximize else raw

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(f"n={self.n} level={self.level} max={self.maximize}".encode())
        digest.update(self.classes.cell_class.tobytes())
        digest.update(np.round(self.objective, 12).tobytes())
        for block in self.localizing:
            digest.update(block.ptr.tobytes())
            digest.update(block.cls.tobytes())
            digest.update(np.round(block.coef, 12).tobytes())
        for eq in self.equalities:
            digest.update(repr((eq.cls, tuple(np.round(eq.coef, 12)), round(eq.rhs, 12))).encode())
        return digest.hexdigest()

    def report(self) -> dict[str, object]:
        m = self.index.size
        cells = self.classes.cell_class
        loc_profiles = set()
        for block in self.localizing:
            for a in range(len(block.ptr) - 1):
                lo, hi = block.ptr[a], block.ptr[a + 1]
                profile = tuple(
                    (int(c), round(float(v), 12))
                    for c, v in zip(block.cls[lo:hi], block.coef[lo:hi])
                )
                loc_profiles.add(profile)
        return {
            "n": self.n,
            "level": self.level,
            "matrix_size": m,
            "moment_classes": self.n_classes,
            "zero_cells": int(np.sum(cells < 0)),
            "equalities": len(self.equalities),
            "localizing_sizes": [b.size for b in self.localizing],
            "localizing_distinct_entries": len(loc_profiles),
            "index_extension": [to_string(w) for w in self.index.extension],
            "statistic": dict(self.statistic),
            "fingerprint": self.fingerprint(),
        }


@lru_cache(maxsize=8)
def _default_decomposition(n: int) -> TranslationDecomposition:
    return decompose_translation(n=n)


def _statistic_equalities(
    statistic: tuple[str, object] | None, classes: MomentClasses, n: int
) -> tuple[tuple[Equality, ...], dict[str, object]]:
    pin = Equality((classes.identity_class,), (1.0,), 1.0)
    if statistic is None:
        return (pin,), {"kind": "none"}
    kind, payload = statistic
    proj_classes = tuple(
        classes.class_of(Word((proj(i),))) for i in range(1, n + 1)
    )
    if kind == "sum":
        c = float(payload)  # type: ignore[arg-type]
        if not 0.0 <= c <= n:
            raise ValueError(f"statistic sum {c} outside [0, {n}]")
        return (pin, Equality(proj_classes, (1.0,) * n, c)), {"kind": "sum", "c": c}
    if kind == "per":
        values = [float(v) for v in payload]  # type: ignore[union-attr]
        if len(values) != n:
            raise ValueError(f"expected {n} per-measurement values")
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("per-measurement values must lie in [0, 1]")
        if not 0.0 <= sum(values) <= n:
            raise ValueError(f"per-measurement values sum outside [0, {n}]")
        eqs = [pin]
        for cid, value in zip(proj_classes, values):
            eqs.append(Equality((cid,), (1.0,), value))
        return tuple(eqs), {"kind": "per", "values": values}
    raise ValueError(f"unknown statistic kind {kind!r}")


def assemble(
    objective: ObjectiveFunctional,
    statistic: tuple[str, object] | None,
    level: int,
    n: int = 5,
    loc_level: int | None = None,
    decomp: TranslationDecomposition | None = None,
) -> MomentProblem:
    """Minimization problem for the fidelity functional at a witness value.

    The index starts at the requested level and grows by middle-split halves
    until every localizing entry owns a moment class; the certified-bound
    correction stays valid because each added word still embeds in the
    diagonal minor chain of the extended moment matrix.
    """
    index = build_index(level, objective, n=n)
    if decomp is None:
        decomp = _default_decomposition(n)
    block = None
    classes = None
    for _ in range(8):
        classes = build_moment_constraints(index)
        try:
            block = build_localizing(decomp, classes, loc_level)
            break
        except IndexExtensionError as err:
            halves: set[Word] = set()
            for word in err.words:
                halves.update(_middle_halves(word))
            index = _extended(index, halves)
    else:
        raise AssertionError("index extension did not close after 8 rounds")
    assert classes is not None
    obj = np.zeros(classes.n_classes)
    for word, coeff in objective.terms.items():
        obj[classes.class_of(word)] += coeff
    equalities, stat_info = _statistic_equalities(statistic, classes, n)
    if block is not None:
        equalities = equalities + block.hermiticity
    return MomentProblem(
        n=n,
        level=level,
        index=index,
        classes=classes,
        localizing=(block,) if block is not None else (),
        objective=obj,
        objective_offset=objective.offset,
        maximize=False,
        equalities=equalities,
        statistic=stat_info,
    )


def assemble_max_witness(level: int, n: int = 5) -> MomentProblem:
    """Maximize the witness sum subject only to the moment-matrix structure."""
    index = build_index(level, None, n=n)
    classes = build_moment_constraints(index)
    obj = np.zeros(classes.n_classes)
    for i in range(1, n + 1):
        obj[classes.class_of(Word((proj(i),)))] -= 1.0  # minimize the negation
    equalities, stat_info = _statistic_equalities(None, classes, n)
    return MomentProblem(
        n=n,
        level=level,
        index=index,
        classes=classes,
        localizing=(),
        objective=obj,
        objective_offset=0.0,
        maximize=True,
        equalities=equalities,
        statistic=stat_info,
    )


def fidelity_problem(
    c: float,
    level: int,
    mode: str = "sum",
    n: int = 5,
    loc_level: int | None = None,
) -> MomentProblem:
    """Convenience assembly from a witness value and a constraint mode."""
    decomp = _default_decomposition(n)
    blocks = build_swap_blocks(decomp)
    functional = objective_coefficients(blocks)
    if mode == "sum":
        statistic: tuple[str, object] = ("sum", c)
    elif mode == "equal":
        statistic = ("per", [c / n] * n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return assemble(functional, statistic, level, n=n, loc_level=loc_level, decomp=decomp)


def ideal_moment_vector(
    problem: MomentProblem | MomentClasses, config: KcbsConfiguration | None = None
) -> np.ndarray:
    """Moments of the ideal realization, the feasibility oracle."""
    classes = problem.classes if isinstance(problem, MomentProblem) else problem
    real = aligned_realization(config, n=classes.index.n)
    y = np.empty(classes.n_classes)
    for cid, rep in enumerate(classes.reps):
        mat = evaluate(rep, real.projectors, real.translation)
        value = real.state.conj() @ mat @ real.state
        if abs(value.imag) > 1e-9:
            raise AssertionError(f"ideal moment of {to_string(rep)} not real")
        y[cid] = value.real
    return y


@dataclass(frozen=True)
class CertificateReport:
    """Constraint residuals of a candidate moment vector."""

    equality_violation: float
    moment_min_eig: float
    localizing_min_eigs: tuple[float, ...]
    objective: float

    def ok(self, tol: float) -> bool:
        eigs = (self.moment_min_eig, *self.localizing_min_eigs)
        return self.equality_violation <= tol and all(e >= -tol for e in eigs)


def certify(problem: MomentProblem, y: np.ndarray) -> CertificateReport:
    """Independent residual check of a moment vector against the problem."""
    y = np.asarray(y, dtype=float)
    if y.shape != (problem.n_classes,):
        raise ValueError(
            f"expected {problem.n_classes} moment values, got {y.shape}"
        )
    eq_violation = 0.0
    for eq in problem.equalities:
        value = sum(c * y[k] for k, c in zip(eq.cls, eq.coef))
        eq_violation = max(eq_violation, abs(value - eq.rhs))
    gamma = problem.moment_matrix(y)
    gamma_min = float(np.linalg.eigvalsh((gamma + gamma.T) / 2).min())
    loc_mins = tuple(
        float(np.linalg.eigvalsh((b.matrix(y) + b.matrix(y).T) / 2).min())
        for b in problem.localizing
    )
    return CertificateReport(
        equality_violation=float(eq_violation),
        moment_min_eig=gamma_min,
        localizing_min_eigs=loc_mins,
        objective=problem.objective_value(y),
    )
