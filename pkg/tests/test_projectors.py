"""Tests for kept/discarded bases and the symbolic projector algebra."""

import numpy as np
import numpy.testing as npt
import pytest

from kdmps.ed import dense_rank, dense_state
from kdmps.mps import mps_norm, overlap, product_mps, random_mps
from kdmps.projectors import (
    ProjectorSpec,
    apply_projector,
    apply_sector_pair,
    build_bases,
    convert_kd_dk,
    dense_projector,
    dense_sector_pair,
    dense_terms,
    expand_global,
    expand_tangent_mixed,
    subspace_dimension,
)

BLOCK_TOL = 1e-10
DENSE_TOL = 1e-10


# ---------- bases ----------


def test_build_bases_product_state_dimensions():
    kept, disc = build_bases(product_mps(3, 2))
    assert kept.dims == (1, 1, 1, 1)
    assert disc.left_dims == (1, 1, 1)  # d - 1 discarded directions per site
    assert disc.right_dims == (1, 1, 1)


def test_build_bases_maximal_profile_dimensions():
    kept, disc = build_bases(random_mps(4, 2, bond_cap=None, seed=1))
    assert kept.dims == (1, 2, 4, 2, 1)
    assert disc.left_dims == (0, 0, 6, 3)
    assert disc.right_dims == (3, 6, 0, 0)
    assert [kept.discarded_left_dim(l) for l in range(1, 5)] == [0, 0, 6, 3]
    assert [kept.discarded_right_dim(l) for l in range(1, 5)] == [3, 6, 0, 0]


def test_build_bases_orthogonality_blocks():
    kept, disc = build_bases(random_mps(6, 2, bond_cap=3, seed=4))
    d = kept.d
    for l in range(1, 7):
        a = kept.left[l - 1].data.reshape(kept.dims[l - 1] * d, kept.dims[l])
        ab = disc.left[l - 1].data.reshape(kept.dims[l - 1] * d, disc.left_dims[l - 1])
        b = kept.right[l - 1].data.reshape(kept.dims[l - 1], d * kept.dims[l])
        bb = disc.right[l - 1].data.reshape(disc.right_dims[l - 1], d * kept.dims[l])
        npt.assert_allclose(ab.T @ ab, np.eye(ab.shape[1]), atol=BLOCK_TOL)
        npt.assert_allclose(a.T @ ab, 0.0, atol=BLOCK_TOL)
        npt.assert_allclose(bb @ bb.T, np.eye(bb.shape[0]), atol=BLOCK_TOL)
        npt.assert_allclose(bb @ b.T, 0.0, atol=BLOCK_TOL)
        npt.assert_allclose(a @ a.T + ab @ ab.T, np.eye(a.shape[0]), atol=BLOCK_TOL)


def test_build_bases_reference_consistency():
    psi = random_mps(5, 2, bond_cap=3, seed=9)
    kept, _ = build_bases(psi)
    npt.assert_allclose(overlap(kept.reference, psi), 1.0, atol=1e-12)
    ref = dense_state(kept.reference).vec
    for l in range(0, 6):
        arrs = (
            [t.data for t in kept.left[:l]]
            + [kept.bond[l][:, None, :]]
            + [t.data for t in kept.right[l:]]
        )
        cur = np.ones((1, 1))
        for arr in arrs:
            cur = np.tensordot(cur, arr, axes=(1, 0)).reshape(-1, arr.shape[-1])
        npt.assert_allclose(cur.reshape(-1), ref, atol=1e-12)


# ---------- symbolic specs ----------


def test_spec_validation():
    with pytest.raises(ValueError):
        ProjectorSpec.sector_pair("K", "X", 0, 1)
    with pytest.raises(ValueError):
        ProjectorSpec.sector_pair("K", "K", 2, 2)
    with pytest.raises(ValueError):
        ProjectorSpec.local_ns(2, 0).expand(4)
    with pytest.raises(ValueError):
        ProjectorSpec.local_ns(2, 4).expand(4)
    with pytest.raises(ValueError):
        ProjectorSpec.global_ns(5).expand(4)
    with pytest.raises(ValueError):
        ProjectorSpec.global_ns(1, anchor=5).expand(4)
    with pytest.raises(ValueError):
        ProjectorSpec.irreducible(-1).expand(4)
    with pytest.raises(ValueError):
        ProjectorSpec.local_ortho(1, 2, "x")


def test_apply_rank_one_projector():
    kept, _ = build_bases(random_mps(4, 2, bond_cap=2, seed=2))
    phi = random_mps(4, 2, bond_cap=3, seed=3)
    out = apply_projector(ProjectorSpec.irreducible(0), kept, phi).combine()
    c = overlap(kept.reference, phi)
    npt.assert_allclose(dense_state(out).vec, c * dense_state(kept.reference).vec, atol=1e-12)


def test_irreducible_annihilates_reference():
    kept, _ = build_bases(random_mps(5, 2, bond_cap=2, seed=6))
    for n in range(1, 6):
        out = apply_projector(ProjectorSpec.irreducible(n), kept, kept.reference).combine()
        assert mps_norm(out) <= 1e-12


def test_apply_matches_dense_action():
    psi = random_mps(5, 2, bond_cap=2, seed=11)
    kept, disc = build_bases(psi)
    phi = random_mps(5, 2, bond_cap=3, seed=12)
    vphi = dense_state(phi).vec
    specs = [
        ProjectorSpec.global_ns(1),
        ProjectorSpec.global_ns(2),
        ProjectorSpec.global_ns(2, anchor=1),
        ProjectorSpec.irreducible(1),
        ProjectorSpec.irreducible(3),
        ProjectorSpec.local_ns(2, 2),
        ProjectorSpec.local_ortho(1, 2, "<"),
        ProjectorSpec.local_ortho(2, 3, ">"),
        ProjectorSpec.sector_pair("D", "D", 2, 4),
        ProjectorSpec.sector_pair("K", "D", 0, 3),
    ]
    for spec in specs:
        dm = dense_projector(spec, kept, disc)
        got = dense_state(apply_projector(spec, kept, phi).combine()).vec
        npt.assert_allclose(got, dm @ vphi, atol=DENSE_TOL, err_msg=str(spec))


def test_apply_projector_idempotent():
    psi = random_mps(5, 2, bond_cap=2, seed=13)
    kept, _ = build_bases(psi)
    phi = random_mps(5, 2, bond_cap=2, seed=14)
    for spec in (ProjectorSpec.global_ns(1), ProjectorSpec.irreducible(2)):
        once = apply_projector(spec, kept, phi).combine()
        twice = apply_projector(spec, kept, once).combine()
        npt.assert_allclose(dense_state(twice).vec, dense_state(once).vec, atol=BLOCK_TOL)


def test_apply_boundary_discarded_sector_is_zero():
    kept, _ = build_bases(random_mps(3, 2, bond_cap=2, seed=1))
    phi = random_mps(3, 2, bond_cap=2, seed=2)
    out = apply_sector_pair(kept, ("D", "K", 0, 2), phi)
    assert mps_norm(out) == 0.0
    out = apply_sector_pair(kept, ("K", "D", 1, 4), phi)
    assert mps_norm(out) == 0.0


# ---------- dense materialization ----------


def test_dense_one_site_projector_trace():
    kept, disc = build_bases(random_mps(5, 2, bond_cap=2, seed=21))
    for l in range(1, 6):
        p = dense_projector(ProjectorSpec.local_ns(1, l), kept, disc)
        want = kept.dims[l - 1] * kept.d * kept.dims[l]
        npt.assert_allclose(np.trace(p), want, atol=1e-9)
        assert dense_rank(p) == want
        npt.assert_allclose(p @ p, p, atol=BLOCK_TOL)
        npt.assert_allclose(p, p.T, atol=BLOCK_TOL)


def test_dense_irreducible_trace_maximal_l4():
    kept, disc = build_bases(random_mps(4, 2, bond_cap=None, seed=8))
    p = dense_projector(ProjectorSpec.irreducible(1), kept, disc)
    npt.assert_allclose(np.trace(p), 15.0, atol=1e-9)


def test_dense_irreducible_partition_of_unity():
    kept, disc = build_bases(random_mps(4, 2, bond_cap=None, seed=9))
    total = sum(dense_projector(ProjectorSpec.irreducible(n), kept, disc) for n in range(5))
    npt.assert_allclose(total, np.eye(16), atol=BLOCK_TOL)


def test_dense_guard():
    kept, disc = build_bases(random_mps(13, 2, bond_cap=2, seed=0))
    with pytest.raises(ValueError, match="guard"):
        dense_sector_pair(kept, disc, ("K", "K", 1, 3))


# ---------- dimensions ----------


def test_subspace_dimensions_maximal_l4():
    kept, _ = build_bases(random_mps(4, 2, bond_cap=None, seed=10))
    dims = [subspace_dimension(kept, n) for n in range(5)]
    assert dims == [1, 15, 0, 0, 0]
    assert sum(dims) == 16


def test_subspace_dimensions_capped_l4():
    kept, _ = build_bases(random_mps(4, 2, bond_cap=2, seed=10))
    assert kept.dims == (1, 2, 2, 2, 1)
    dims = [subspace_dimension(kept, n) for n in range(5)]
    assert dims == [1, 11, 4, 0, 0]
    assert sum(dims) == 16


def test_subspace_dimensions_product_l2():
    kept, _ = build_bases(product_mps(2, 2))
    dims = [subspace_dimension(kept, n) for n in range(3)]
    assert dims == [1, 2, 1]
    assert sum(dims) == 4


def test_subspace_dimensions_match_ranks_random():
    psi = random_mps(5, 2, bond_cap=2, seed=17)
    kept, disc = build_bases(psi)
    total = 0
    for n in range(6):
        want = subspace_dimension(kept, n)
        total += want
        p = dense_projector(ProjectorSpec.irreducible(n), kept, disc)
        assert dense_rank(p) == want
    assert total == 2**5


def test_subspace_dimension_range():
    kept, _ = build_bases(product_mps(3, 2))
    with pytest.raises(ValueError):
        subspace_dimension(kept, 4)


# ---------- conversions ----------


def test_convert_single_term_window():
    psi = random_mps(4, 2, bond_cap=2, seed=30)
    kept, disc = build_bases(psi)
    lhs, rhs = convert_kd_dk(kept, 1, 2, 2)
    npt.assert_allclose(dense_terms(kept, disc, lhs), dense_terms(kept, disc, rhs), atol=BLOCK_TOL)


def test_convert_full_window_n1():
    psi = random_mps(4, 2, bond_cap=2, seed=31)
    kept, disc = build_bases(psi)
    lhs, rhs = convert_kd_dk(kept, 1, 1, 4)
    npt.assert_allclose(dense_terms(kept, disc, lhs), dense_terms(kept, disc, rhs), atol=BLOCK_TOL)


def test_tangent_mixed_form_matches_closed_form():
    psi = random_mps(4, 2, bond_cap=2, seed=32)
    kept, disc = build_bases(psi)
    closed = dense_projector(ProjectorSpec.irreducible(1), kept, disc)
    for anchor in range(1, 5):
        mixed = dense_terms(kept, disc, expand_tangent_mixed(4, anchor))
        npt.assert_allclose(mixed, closed, atol=BLOCK_TOL)


def test_convert_window_validation():
    kept, _ = build_bases(random_mps(4, 2, bond_cap=2, seed=33))
    with pytest.raises(ValueError):
        convert_kd_dk(kept, 1, 3, 2)
    with pytest.raises(ValueError):
        convert_kd_dk(kept, 2, 1, 4)


def test_global_default_anchor_matches_explicit():
    L = 5
    psi = random_mps(L, 2, bond_cap=2, seed=34)
    kept, disc = build_bases(psi)
    for n in (1, 2):
        default = dense_projector(ProjectorSpec.global_ns(n), kept, disc)
        explicit = dense_terms(kept, disc, expand_global(n, L, L + 1 - n))
        npt.assert_array_equal(default, explicit)
