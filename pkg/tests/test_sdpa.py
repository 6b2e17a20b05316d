"""Sparse SDPA writer and parser round trips."""

import numpy as np
import pytest

from kcbs_selftest.moments import assemble_max_witness, fidelity_problem
from kcbs_selftest.sdpa import (
    export_sdpa,
    load_manifest,
    parse_sdpa,
    problem_from_manifest,
)
from kcbs_selftest.solver import solve
from kcbs_selftest.words import parse as parse_word, to_string

ROOT5 = float(np.sqrt(5.0))


@pytest.fixture()
def witness_export(tmp_path):
    problem = assemble_max_witness(1)
    path = tmp_path / "witness.dat-s"
    manifest = export_sdpa(problem, path)
    return problem, path, manifest


def test_round_trip_is_identity(witness_export, tmp_path):
    problem, path, manifest = witness_export
    data = parse_sdpa(path)
    assert data.n_vars == problem.n_classes
    assert data.block_sizes[0] == problem.classes.cell_class.shape[0]
    assert data.block_sizes[-1] < 0
    assert np.array_equal(data.c, problem.objective)

    again = tmp_path / "again.dat-s"
    export_sdpa(problem, again)
    assert parse_sdpa(again).entries == data.entries
    assert path.read_bytes() == again.read_bytes()


def test_manifest_names_every_class(witness_export):
    problem, _, manifest = witness_export
    assert len(manifest["classes"]) == problem.n_classes
    for text in manifest["classes"]:
        parse_word(text)
    assert manifest["fingerprint"] == problem.fingerprint()
    assert manifest["maximize"] is True


def test_manifest_reassembly_matches(witness_export, tmp_path):
    _, path, _ = witness_export
    manifest = load_manifest(path.with_suffix(path.suffix + ".manifest.json"))
    rebuilt = problem_from_manifest(manifest)
    assert rebuilt.fingerprint() == manifest["fingerprint"]


def test_reassembled_export_solves_to_quantum_value(witness_export):
    _, path, _ = witness_export
    manifest = load_manifest(path.with_suffix(path.suffix + ".manifest.json"))
    res = solve(problem_from_manifest(manifest))
    assert res.bound == pytest.approx(ROOT5, abs=1e-4)


def test_fidelity_export_blocks(tmp_path):
    problem = fidelity_problem(2.1, 2, mode="equal")
    path = tmp_path / "fid.dat-s"
    manifest = export_sdpa(problem, path)
    data = parse_sdpa(path)
    kinds = [b["kind"] for b in manifest["blocks"]]
    assert kinds == ["moment", "localizing", "linear"]
    assert data.block_sizes == tuple(b["size"] for b in manifest["blocks"])
    # every equality (identity pin, five per-measurement pins, localizing
    # symmetry ties) becomes a +/- pair of diagonal LP rows
    assert data.block_sizes[-1] == -2 * len(problem.equalities)
    rebuilt = problem_from_manifest(manifest)
    assert rebuilt.fingerprint() == problem.fingerprint()


def test_linear_block_encodes_equalities(witness_export):
    problem, path, _ = witness_export
    data = parse_sdpa(path)
    lp_block = len(data.block_sizes)
    grouped = data.entry_map()
    # identity pin: <I> = 1 appears as +/- rows with the rhs carried by F_0
    plus = grouped[(problem.classes.identity_class + 1, lp_block)]
    rhs = grouped[(0, lp_block)]
    assert (1, 1, 1.0) in plus
    assert (1, 1, 1.0) in rhs
    assert (2, 2, -1.0) in rhs


def test_parser_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.dat-s"
    bad.write_text("1 = mdim\n1 = nblocks\n2\n0.0\n1 1 3 3 1.0\n")
    with pytest.raises(ValueError):
        parse_sdpa(bad)
    empty = tmp_path / "empty.dat-s"
    empty.write_text('"comment only\n')
    with pytest.raises(ValueError):
        parse_sdpa(empty)


def test_parser_accepts_formatting_variants(tmp_path):
    path = tmp_path / "variant.dat-s"
    path.write_text(
        "* alt comment\n2 = mdim\n2 = nblocks\n{2, -1}\n1.0, 0.5\n"
        "1 1 1 2 0.25\n2 2 1 1 1.0\n0 2 1 1 0.5\n"
    )
    data = parse_sdpa(path)
    assert data.n_vars == 2
    assert data.block_sizes == (2, -1)
    assert data.entries[0] == (1, 1, 1, 2, 0.25)


def test_off_diagonal_in_diagonal_block_rejected(tmp_path):
    path = tmp_path / "diag.dat-s"
    path.write_text("1 = mdim\n1 = nblocks\n-2\n1.0\n1 1 1 2 1.0\n")
    with pytest.raises(ValueError):
        parse_sdpa(path)


def test_manifest_format_tag_checked(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ValueError):
        load_manifest(path)
