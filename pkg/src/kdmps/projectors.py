"""Kept/discarded isometries and the n-site projector algebra.

Given a normalized reference MPS, :func:`build_bases` extracts one fixed
family of left isometries A_l, right isometries B_l, bond matrices C_l and
orthogonal complements (Abar_l, Bbar_l) such that for every bond l the
chain ``A_1..A_l C_l B_{l+1}..B_L`` rebuilds the reference exactly.

Projectors are handled symbolically as :class:`ProjectorSpec` values built
from sector pairs: a kept (K) or discarded (D) sector on a left anchor
site, identity on the sites in between, and a K or D sector on a right
anchor. Composite projectors expand to coefficient-weighted lists of
sector pairs:

* local n-site projectors (a KK pair with n free sites),
* their one-sided orthogonalized versions (DK / KD pairs),
* global n-site projectors (sum over positions, any anchor choice),
* irreducible n-site projectors (DK row for n=1, DD row for n>=2).

Applications to arbitrary states never materialize the discarded-space
projector ``Abar Abar^T``; they use ``1 - A A^T`` on the parent legs. The
explicit complements are only formed where their column count is needed
(dense materialization, excitation gauges).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mps import Mps, canonical_sets, mps_add, mps_scale, phys, virt
from .tensor import Tensor, contract, orthogonal_complement

__all__ = [
    "KeptBases",
    "DiscardedBases",
    "ProjectorSpec",
    "MpsSum",
    "build_bases",
    "apply_projector",
    "dense_projector",
    "subspace_dimension",
    "convert_kd_dk",
]


# ---------- bases ----------


@dataclass(frozen=True)
class KeptBases:
    """Fixed left/right isometry family of a normalized reference state.

    Attributes:
        reference: the unit-norm reference MPS (site-canonical at 1).
        left:      A_1..A_L, left-normalized, legs ("v{l-1}", "p{l}", "v{l}").
        right:     B_1..B_L, right-normalized, same leg names.
        bond:      bond matrices C_0..C_L (numpy, shape D_l x D_l); for every
                   bond, A_1..A_l C_l B_{l+1}..B_L equals the reference.
        norm:      2-norm of the state originally passed to build_bases.
    """

    reference: Mps
    left: tuple[Tensor, ...]
    right: tuple[Tensor, ...]
    bond: tuple[np.ndarray, ...]
    norm: float

    @property
    def L(self) -> int:
        return len(self.left)

    @property
    def d(self) -> int:
        return self.left[0].extent(phys(1))

    @property
    def dims(self) -> tuple[int, ...]:
        """Kept bond dimensions D_0..D_L."""
        return tuple([1] + [t.extent(virt(l + 1)) for l, t in enumerate(self.left)])

    def center_site(self, l: int) -> Tensor:
        """The 1-site center C_l = C_{l-1} B_l (legs like an ordinary site)."""
        lam = Tensor(self.bond[l - 1], ("ca", virt(l - 1)))
        out = contract(lam, self.right[l - 1], [(virt(l - 1), virt(l - 1))])
        return out.rename({"ca": virt(l - 1)})

    def discarded_left_dim(self, l: int) -> int:
        return self.dims[l - 1] * self.d - self.dims[l]

    def discarded_right_dim(self, l: int) -> int:
        return self.dims[l] * self.d - self.dims[l - 1]


@dataclass(frozen=True)
class DiscardedBases:
    """Orthonormal complements of the kept isometries.

    ``left[l-1]`` (Abar_l) has legs ("v{l-1}", "p{l}", "v{l}") whose last
    extent is the discarded dimension D_{l-1} d - D_l; ``right[l-1]``
    (Bbar_l) mirrors this on its first leg. Zero-dimensional complements
    are legitimate empty tensors.
    """

    left: tuple[Tensor, ...]
    right: tuple[Tensor, ...]

    @property
    def left_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[2] for t in self.left)

    @property
    def right_dims(self) -> tuple[int, ...]:
        return tuple(t.shape[0] for t in self.right)


def build_bases(psi: Mps) -> tuple[KeptBases, DiscardedBases]:
    """Extract kept isometries, bond matrices, and discarded complements."""
    a_set, b_set, bonds, norm = canonical_sets(psi)
    L = psi.L
    scalar = float(bonds[0].data[0, 0])
    ref_sites = [b_set[0].scaled(scalar)] + list(b_set[1:])
    reference = Mps(tuple(ref_sites), form="site", center=1)

    abar = []
    bbar = []
    for l in range(1, L + 1):
        abar.append(orthogonal_complement(a_set[l - 1], (virt(l - 1), phys(l))))
        comp = orthogonal_complement(b_set[l - 1], (phys(l), virt(l)))
        bbar.append(comp.transpose((virt(l - 1), phys(l), virt(l))))
    kept = KeptBases(
        reference=reference,
        left=tuple(a_set),
        right=tuple(b_set),
        bond=tuple(b.data for b in bonds),
        norm=norm,
    )
    return kept, DiscardedBases(left=tuple(abar), right=tuple(bbar))


# ---------- symbolic projector specs ----------

KINDS = ("sector_pair", "local", "local_ortho", "global", "irreducible")


@dataclass(frozen=True)
class ProjectorSpec:
    """Symbolic projector: sector pair, local/orthogonalized/global/irreducible.

    Build via the factory methods; ``expand(L)`` lowers any spec to a list
    of (coefficient, (x, xbar, l, lbar)) sector-pair terms.
    """

    kind: str
    n: int = 0
    site: int = 0
    sectors: tuple[str, str] = ("K", "K")
    positions: tuple[int, int] = (0, 1)
    side: str = "<"
    anchor: int | None = None

    @staticmethod
    def sector_pair(x: str, xbar: str, l: int, lbar: int) -> ProjectorSpec:
        if x not in ("K", "D") or xbar not in ("K", "D"):
            raise ValueError("sectors must be 'K' or 'D'")
        if not l < lbar:
            raise ValueError("need left anchor < right anchor")
        return ProjectorSpec(kind="sector_pair", sectors=(x, xbar), positions=(l, lbar))

    @staticmethod
    def local_ns(n: int, l: int) -> ProjectorSpec:
        return ProjectorSpec(kind="local", n=n, site=l)

    @staticmethod
    def local_ortho(n: int, l: int, side: str) -> ProjectorSpec:
        if side not in ("<", ">"):
            raise ValueError("side must be '<' or '>'")
        return ProjectorSpec(kind="local_ortho", n=n, site=l, side=side)

    @staticmethod
    def global_ns(n: int, anchor: int | None = None) -> ProjectorSpec:
        return ProjectorSpec(kind="global", n=n, anchor=anchor)

    @staticmethod
    def irreducible(n: int) -> ProjectorSpec:
        return ProjectorSpec(kind="irreducible", n=n)

    def expand(self, L: int) -> list[tuple[float, tuple[str, str, int, int]]]:
        return expand_spec(self, L)


Pair = tuple[str, str, int, int]
Terms = list[tuple[float, Pair]]


def _check_pair(pair: Pair, L: int) -> Pair:
    x, xbar, l, lbar = pair
    if not 0 <= l < lbar <= L + 1:
        raise ValueError(f"anchors ({l}, {lbar}) outside 0 <= l < lbar <= {L + 1}")
    return pair


def _local_pair(n: int, l: int, L: int) -> Pair:
    if n < 0 or not 1 <= l <= L + 1 - n:
        raise ValueError(f"local projector site {l} outside [1, {L + 1 - n}] for n={n}")
    return ("K", "K", l - 1, l + n)


def expand_spec(spec: ProjectorSpec, L: int) -> Terms:
    """Lower a spec to coefficient-weighted sector pairs at chain length L."""
    if spec.kind == "sector_pair":
        return [(1.0, _check_pair((*spec.sectors, *spec.positions), L))]
    if spec.kind == "local":
        return [(1.0, _local_pair(spec.n, spec.site, L))]
    if spec.kind == "local_ortho":
        n, l = spec.n, spec.site
        if n < 1 or not 1 <= l <= L + 1 - n:
            raise ValueError(f"orthogonalized local projector needs n >= 1, site in [1, {L + 1 - n}]")
        if spec.side == "<":
            return [(1.0, _check_pair(("D", "K", l, l + n), L))]
        return [(1.0, _check_pair(("K", "D", l - 1, l - 1 + n), L))]
    if spec.kind == "global":
        return expand_global(spec.n, L, spec.anchor)
    if spec.kind == "irreducible":
        return expand_irreducible(spec.n, L)
    raise ValueError(f"unknown projector kind {spec.kind!r}")


def expand_global(n: int, L: int, anchor: int | None = None) -> Terms:
    """Global n-site projector as DK terms left of an anchor, the local
    projector at the anchor, and KD terms right of it (mutually orthogonal).
    """
    if not 0 <= n <= L:
        raise ValueError(f"n must lie in [0, {L}]")
    if n == 0:
        return [(1.0, ("K", "K", L, L + 1))]
    if anchor is None:
        anchor = L + 1 - n
    if not 1 <= anchor <= L + 1 - n:
        raise ValueError(f"anchor {anchor} outside [1, {L + 1 - n}]")
    terms: Terms = [(1.0, ("D", "K", l, l + n)) for l in range(1, anchor)]
    terms.append((1.0, _local_pair(n, anchor, L)))
    terms += [(1.0, ("K", "D", l - 1, l - 1 + n)) for l in range(anchor + 1, L + 2 - n)]
    return terms


def expand_global_overlapping(n: int, L: int) -> Terms:
    """Anchor-free form: all local n-site projectors minus the overlaps
    (local (n-1)-site projectors on the shared windows).
    """
    if not 1 <= n <= L:
        raise ValueError(f"n must lie in [1, {L}]")
    terms: Terms = [(1.0, _local_pair(n, l, L)) for l in range(1, L + 2 - n)]
    terms += [(-1.0, _local_pair(n - 1, l + 1, L)) for l in range(1, L + 1 - n)]
    return terms


def expand_irreducible(n: int, L: int) -> Terms:
    """Irreducible n-site projector: rank-1 KK for n=0, the DK row for n=1,
    the DD row (n-2 free sites between two discarded sectors) for n >= 2.
    """
    if not 0 <= n <= L:
        raise ValueError(f"n must lie in [0, {L}]")
    if n == 0:
        return [(1.0, ("K", "K", L, L + 1))]
    if n == 1:
        return [(1.0, ("D", "K", l, l + 1)) for l in range(1, L + 1)]
    return [(1.0, ("D", "D", l, l + n - 1)) for l in range(1, L + 2 - n)]


def expand_irreducible_right(n: int, L: int) -> Terms:
    """Gauge-reflected form of the n=1 irreducible projector (KD row)."""
    if n != 1:
        raise ValueError("the reflected closed form exists for n = 1")
    return [(1.0, ("K", "D", l - 1, l)) for l in range(1, L + 1)]


def expand_irreducible_overlapping(n: int, L: int) -> Terms:
    """Irreducible projector written purely through local K-sector projectors."""
    if not 1 <= n <= L:
        raise ValueError(f"n must lie in [1, {L}]")
    terms: Terms = []
    if n == 1:
        for l in range(1, L + 1):
            terms.append((1.0, _local_pair(1, l, L)))
            terms.append((-1.0, ("K", "K", l - 1, l)))  # bond projector at l-1
        return terms
    for l in range(1, L + 2 - n):
        terms.append((1.0, _local_pair(n, l, L)))
        terms.append((-1.0, _local_pair(n - 1, l + 1, L)))
        terms.append((-1.0, _local_pair(n - 1, l, L)))
        terms.append((1.0, _local_pair(n - 2, l + 1, L)))
    return terms


def expand_tangent_mixed(L: int, anchor: int) -> Terms:
    """n=1 irreducible projector with DK terms left of the anchor, KD terms
    right of it, the full local 1-site projector at the anchor, minus the
    rank-1 reference projector.
    """
    if not 1 <= anchor <= L:
        raise ValueError(f"anchor {anchor} outside [1, {L}]")
    terms: Terms = [(1.0, ("D", "K", l, l + 1)) for l in range(1, anchor)]
    terms.append((1.0, _local_pair(1, anchor, L)))
    terms += [(1.0, ("K", "D", l - 1, l)) for l in range(anchor + 1, L + 1)]
    terms.append((-1.0, ("K", "K", L, L + 1)))
    return terms


def convert_kd_dk(bases: KeptBases, n: int, lbar: int, lprime: int) -> tuple[Terms, Terms]:
    """Two equivalent sector-pair sums for a window of DK projectors.

    The left list is sum_{l=lbar..lprime} DK(l, l+n); the right list is the
    telescoped conversion: the local (n-1)-site projector at lbar, plus the
    matching KD terms, minus the local (n-1)-site projector at lprime+1.
    Their dense materializations agree.
    """
    L = bases.L
    if n < 1:
        raise ValueError("conversion needs n >= 1")
    if not 1 <= lbar <= lprime <= L + 1 - n:
        raise ValueError(f"window [{lbar}, {lprime}] outside [1, {L + 1 - n}]")
    lhs: Terms = [(1.0, ("D", "K", l, l + n)) for l in range(lbar, lprime + 1)]
    rhs: Terms = [(1.0, _local_pair(n - 1, lbar, L))]
    rhs += [(1.0, ("K", "D", l - 1, l - 1 + n)) for l in range(lbar, lprime + 1)]
    rhs.append((-1.0, _local_pair(n - 1, lprime + 1, L)))
    return lhs, rhs


# ---------- applying sector pairs to states ----------


def _overlap_left(achain: list[np.ndarray], kchain: list[np.ndarray]) -> np.ndarray:
    """Partial overlap (bases bond, state bond) of A_1..A_m against a chain."""
    g = np.ones((1, 1))
    for a, k in zip(achain, kchain):
        tmp = np.tensordot(g, a, axes=(0, 0))  # (kf, p, a')
        g = np.tensordot(tmp, k, axes=((0, 1), (0, 1)))  # (a', kf')
    return g


def _overlap_right(bchain: list[np.ndarray], kchain: list[np.ndarray]) -> np.ndarray:
    """Partial overlap (state bond, bases bond) of B_m..B_L against a chain."""
    g = np.ones((1, 1))
    for b, k in zip(reversed(bchain), reversed(kchain)):
        tmp = np.tensordot(k, g, axes=(2, 0))  # (kf, p, b)
        g = np.tensordot(tmp, b, axes=((1, 2), (1, 2)))  # (kf', b')
    return g


def _project_out_left(m: np.ndarray, a: np.ndarray) -> np.ndarray:
    """(1 - A A^T) on the fused (left bond, physical) legs of ``m``."""
    mm = m.reshape(-1, m.shape[2])
    am = a.reshape(-1, a.shape[2])
    return (mm - am @ (am.T @ mm)).reshape(m.shape)


def _project_out_right(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(1 - B^T B) on the fused (physical, right bond) legs of ``m``."""
    mm = m.reshape(m.shape[0], -1)
    bm = b.reshape(b.shape[0], -1)
    return (mm - (mm @ bm.T) @ bm).reshape(m.shape)


def _zero_like(phi: Mps) -> Mps:
    sites = tuple(
        Tensor(np.zeros((1, phi.d, 1)), (virt(l - 1), phys(l), virt(l))) for l in range(1, phi.L + 1)
    )
    return Mps(sites)


def apply_sector_pair(bases: KeptBases, pair: Pair, phi: Mps) -> Mps:
    """Apply one K/D sector-pair projector to an arbitrary state.

    The result reuses the bases isometries outside the anchors and the
    state's own tensors on the free sites; discarded sectors act through
    ``1 - A A^T`` / ``1 - B^T B`` on the anchor site.
    """
    x, xbar, l, lbar = pair
    L, d = bases.L, bases.d
    if phi.L != L or phi.d != d:
        raise ValueError("state and bases shapes disagree")
    _check_pair(pair, L)
    if (x == "D" and l == 0) or (xbar == "D" and lbar == L + 1):
        return _zero_like(phi)  # the boundary discarded sectors are empty

    A = [t.data for t in bases.left]
    B = [t.data for t in bases.right]
    K = [t.data for t in phi.plain_sites()]
    arrs: dict[int, np.ndarray] = {}
    pend: dict[int, np.ndarray] = {}  # bond index -> matrix to absorb

    if x == "K":
        for j in range(1, l + 1):
            arrs[j] = A[j - 1]
        pend[l] = _overlap_left(A[:l], K[:l])
    else:
        for j in range(1, l):
            arrs[j] = A[j - 1]
        g = _overlap_left(A[: l - 1], K[: l - 1])
        m = np.tensordot(g, K[l - 1], axes=(1, 0))
        arrs[l] = _project_out_left(m, A[l - 1])

    if xbar == "K":
        for j in range(lbar, L + 1):
            arrs[j] = B[j - 1]
        gr = _overlap_right(B[lbar - 1 :], K[lbar - 1 :])
        prev = pend.get(lbar - 1)  # same bond as the left pending when no free sites remain
        pend[lbar - 1] = prev @ gr if prev is not None else gr
    else:
        for j in range(lbar + 1, L + 1):
            arrs[j] = B[j - 1]
        g = _overlap_right(B[lbar:], K[lbar:])
        m = np.tensordot(K[lbar - 1], g, axes=(2, 0))
        arrs[lbar] = _project_out_right(m, B[lbar - 1])

    for j in range(l + 1, lbar):
        arrs[j] = K[j - 1]

    for bond, mat in pend.items():
        if bond + 1 in arrs:
            arrs[bond + 1] = np.tensordot(mat, arrs[bond + 1], axes=(1, 0))
        else:
            arrs[bond] = np.tensordot(arrs[bond], mat, axes=(2, 0))

    sites = tuple(Tensor(arrs[j], (virt(j - 1), phys(j), virt(j))) for j in range(1, L + 1))
    return Mps(sites)


@dataclass(frozen=True)
class MpsSum:
    """Sum of coefficient-weighted MPS branches (kept uncompressed).

    Composite projectors return their branch structure unmerged so oracle
    comparisons stay exact; ``combine`` folds everything into one MPS with
    additive bond dimensions.
    """

    terms: tuple[tuple[float, Mps], ...]

    def combine(self) -> Mps:
        if not self.terms:
            raise ValueError("empty sum")
        coeff, acc = self.terms[0]
        acc = mps_scale(acc, coeff)
        for coeff, term in self.terms[1:]:
            acc = mps_add(acc, term, 1.0, coeff)
        return acc


def apply_projector(spec: ProjectorSpec, bases: KeptBases, phi: Mps) -> MpsSum:
    """Apply a symbolic projector to a state, one MPS branch per term."""
    terms = expand_spec(spec, bases.L)
    return MpsSum(tuple((coeff, apply_sector_pair(bases, pair, phi)) for coeff, pair in terms))


# ---------- dense materialization ----------

DENSE_GUARD = 4096


def _fold_left_chain(arrs: list[np.ndarray]) -> np.ndarray:
    """Dense (d^m x D) matrix of a left chain (lexicographic row order).

    Explicit row bookkeeping so zero-dimensional bond extents fold cleanly.
    """
    cur = np.ones((1, 1))
    rows = 1
    for a in arrs:
        cur = np.tensordot(cur, a, axes=(1, 0))
        rows *= a.shape[1]
        cur = cur.reshape(rows, a.shape[2])
    return cur


def _fold_right_chain(arrs: list[np.ndarray]) -> np.ndarray:
    """Dense (d^m x D) matrix of a right chain (lexicographic row order)."""
    cur = np.ones((1, 1))
    cols = 1
    for b in reversed(arrs):
        cur = np.tensordot(b, cur, axes=(2, 0))
        cols *= b.shape[1]
        cur = cur.reshape(b.shape[0], cols)
    return cur.T


def dense_sector_pair(bases: KeptBases, disc: DiscardedBases, pair: Pair) -> np.ndarray:
    """Exact d^L x d^L matrix of one sector-pair projector."""
    x, xbar, l, lbar = pair
    L, d = bases.L, bases.d
    if d**L > DENSE_GUARD:
        raise ValueError(f"dense guard exceeded: d^L = {d**L} > {DENSE_GUARD}")
    _check_pair(pair, L)
    if (x == "D" and l == 0) or (xbar == "D" and lbar == L + 1):
        return np.zeros((d**L, d**L))

    A = [t.data for t in bases.left]
    B = [t.data for t in bases.right]
    if x == "K":
        v = _fold_left_chain(A[:l])
    else:
        v = _fold_left_chain(A[: l - 1] + [disc.left[l - 1].data])
    if xbar == "K":
        w = _fold_right_chain(B[lbar - 1 :])
    else:
        w = _fold_right_chain([disc.right[lbar - 1].data] + B[lbar:])
    mid = d ** (lbar - l - 1)
    return np.kron(np.kron(v @ v.T, np.eye(mid)), w @ w.T)


def dense_terms(bases: KeptBases, disc: DiscardedBases, terms: Terms) -> np.ndarray:
    """Dense matrix of a coefficient-weighted sector-pair sum."""
    d, L = bases.d, bases.L
    out = np.zeros((d**L, d**L))
    for coeff, pair in terms:
        out += coeff * dense_sector_pair(bases, disc, pair)
    return out


def dense_projector(spec: ProjectorSpec, bases: KeptBases, disc: DiscardedBases) -> np.ndarray:
    """Exact dense realization of a symbolic projector (d^L <= 4096)."""
    return dense_terms(bases, disc, expand_spec(spec, bases.L))


# ---------- bookkeeping ----------


def subspace_dimension(bases: KeptBases, n: int) -> int:
    """Dimension of the irreducible n-site variation space.

    1 for n=0; sum_l Dbar^A_l D_l for n=1; sum_l Dbar^A_l d^{n-2}
    Dbar^B_{l+n-1} for n >= 2.
    """
    L, d = bases.L, bases.d
    if not 0 <= n <= L:
        raise ValueError(f"n must lie in [0, {L}]")
    if n == 0:
        return 1
    dims = bases.dims
    dbar_a = [dims[l - 1] * d - dims[l] for l in range(1, L + 1)]
    dbar_b = [dims[l] * d - dims[l - 1] for l in range(1, L + 1)]
    if n == 1:
        return int(sum(dbar_a[l - 1] * dims[l] for l in range(1, L + 1)))
    return int(sum(dbar_a[l - 1] * d ** (n - 2) * dbar_b[l + n - 2] for l in range(1, L + 2 - n)))
