"""Sparse SDPA export of assembled problems, with a matching parser.

The file carries min c.x subject to sum_i x_i F_i - F_0 being PSD: one block
for the moment matrix, one per localizing block, and a diagonal block that
encodes each equality as a pair of opposite inequalities.  A JSON manifest
alongside the matrix file records the class-to-word mapping, the assembly
recipe, and the problem fingerprint so a parsed file can be checked against
a fresh assembly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .moments import (
    MomentProblem,
    assemble_max_witness,
    fidelity_problem,
)
from .words import to_string

FORMAT_TAG = "sdpa-sparse-1"


@dataclass(frozen=True)
class SdpaData:
    """Raw contents of a sparse SDPA file."""

    n_vars: int
    block_sizes: tuple[int, ...]
    c: np.ndarray
    entries: tuple[tuple[int, int, int, int, float], ...]

    def entry_map(self) -> dict[tuple[int, int], list[tuple[int, int, float]]]:
        grouped: dict[tuple[int, int], list[tuple[int, int, float]]] = {}
        for matno, blkno, i, j, value in self.entries:
            grouped.setdefault((matno, blkno), []).append((i, j, value))
        return grouped


def _problem_entries(problem: MomentProblem):
    """Deterministic entry stream: (matno, blkno, i, j, value), 1-based."""
    yield_entries = []
    cells = problem.classes.cell_class
    m = cells.shape[0]
    for i in range(m):
        for j in range(i, m):
            cid = cells[i, j]
            if cid >= 0:
                yield_entries.append((int(cid) + 1, 1, i + 1, j + 1, 1.0))
    for b, block in enumerate(problem.localizing, start=2):
        r = block.size
        for i in range(r):
            for j in range(i, r):
                cell = i * r + j
                for k in range(block.ptr[cell], block.ptr[cell + 1]):
                    yield_entries.append(
                        (int(block.cls[k]) + 1, b, i + 1, j + 1, float(block.coef[k]))
                    )
    lp_block = 2 + len(problem.localizing)
    row = 0
    for eq in problem.equalities:
        for sign in (1.0, -1.0):
            row += 1
            for cid, coef in zip(eq.cls, eq.coef):
                yield_entries.append((int(cid) + 1, lp_block, row, row, sign * coef))
            if eq.rhs != 0.0:
                yield_entries.append((0, lp_block, row, row, sign * eq.rhs))
    return yield_entries, lp_block, row


def export_sdpa(
    problem: MomentProblem,
    path: str | Path,
    manifest_path: str | Path | None = None,
) -> dict:
    """Write the .dat-s file plus its manifest; returns the manifest."""
    path = Path(path)
    if manifest_path is None:
        manifest_path = path.with_suffix(path.suffix + ".manifest.json")
    entries, lp_block, lp_rows = _problem_entries(problem)
    sizes = [problem.classes.cell_class.shape[0]]
    sizes += [block.size for block in problem.localizing]
    sizes.append(-lp_rows)

    lines = [f'"{FORMAT_TAG} fingerprint={problem.fingerprint()}']
    lines.append(f"{problem.n_classes} = mdim")
    lines.append(f"{len(sizes)} = nblocks")
    lines.append(" ".join(str(s) for s in sizes))
    lines.append(" ".join(f"{v:.17g}" for v in problem.objective))
    for matno, blkno, i, j, value in entries:
        lines.append(f"{matno} {blkno} {i} {j} {value:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    manifest = {
        "format": FORMAT_TAG,
        "fingerprint": problem.fingerprint(),
        "maximize": problem.maximize,
        "objective_offset": problem.objective_offset,
        "statistic": dict(problem.statistic),
        "n": problem.n,
        "level": problem.level,
        "blocks": (
            [{"kind": "moment", "size": sizes[0]}]
            + [{"kind": "localizing", "size": b.size} for b in problem.localizing]
            + [{"kind": "linear", "size": -lp_rows}]
        ),
        "classes": [to_string(w) for w in problem.classes.reps],
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return manifest


def parse_sdpa(path: str | Path) -> SdpaData:
    """Read a sparse SDPA file back into raw arrays."""
    entries: list[tuple[int, int, int, int, float]] = []
    stage = 0
    n_vars = 0
    n_blocks = 0
    sizes: list[int] = []
    c_values: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith('"') or line.startswith("*"):
                continue
            clean = line.replace(",", " ").replace("(", " ").replace(")", " ")
            clean = clean.replace("{", " ").replace("}", " ")
            parts = clean.split()
            if stage == 0:
                n_vars = int(parts[0])
                stage = 1
            elif stage == 1:
                n_blocks = int(parts[0])
                stage = 2
            elif stage == 2:
                sizes.extend(int(p) for p in parts)
                if len(sizes) > n_blocks:
                    raise ValueError("too many block sizes")
                if len(sizes) == n_blocks:
                    stage = 3
            elif stage == 3:
                c_values.extend(float(p) for p in parts)
                if len(c_values) > n_vars:
                    raise ValueError("too many objective coefficients")
                if len(c_values) == n_vars:
                    stage = 4
            else:
                if len(parts) != 5:
                    raise ValueError(f"malformed entry line: {line!r}")
                matno, blkno, i, j = (int(p) for p in parts[:4])
                value = float(parts[4])
                if not 0 <= matno <= n_vars:
                    raise ValueError(f"matrix number {matno} out of range")
                if not 1 <= blkno <= n_blocks:
                    raise ValueError(f"block number {blkno} out of range")
                size = sizes[blkno - 1]
                dim = abs(size)
                if not (1 <= i <= dim and 1 <= j <= dim):
                    raise ValueError(f"entry ({i}, {j}) outside block {blkno}")
                if size < 0 and i != j:
                    raise ValueError("off-diagonal entry in a diagonal block")
                if i > j:
                    i, j = j, i
                entries.append((matno, blkno, i, j, value))
    if stage != 4:
        raise ValueError("incomplete SDPA file")
    return SdpaData(
        n_vars=n_vars,
        block_sizes=tuple(sizes),
        c=np.asarray(c_values),
        entries=tuple(entries),
    )


def load_manifest(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT_TAG:
        raise ValueError(f"unknown manifest format {manifest.get('format')!r}")
    return manifest


def problem_from_manifest(manifest: dict) -> MomentProblem:
    """Reassemble the problem named by a manifest and check its fingerprint."""
    stat = manifest["statistic"]
    level = int(manifest["level"])
    n = int(manifest["n"])
    if manifest["maximize"]:
        problem = assemble_max_witness(level, n=n)
    elif stat.get("kind") == "sum":
        problem = fidelity_problem(float(stat["c"]), level, mode="sum", n=n)
    elif stat.get("kind") == "per":
        values = [float(v) for v in stat["values"]]
        problem = fidelity_problem(sum(values), level, mode="equal", n=n)
    else:
        raise ValueError(f"manifest statistic {stat!r} has no assembly recipe")
    if problem.fingerprint() != manifest["fingerprint"]:
        raise ValueError("reassembled problem does not match manifest fingerprint")
    return problem
