"""Finite matrix product states: canonical forms, overlaps, sums, archives.

An :class:`Mps` is an ordered chain of 3-leg tensors with dummy outer bonds
of extent one. Site ``l`` (1-based) carries legs ``("v{l-1}", "p{l}", "v{l}")``.

Canonical-form metadata travels with the value:

* ``form="raw"``     -- no gauge guarantees;
* ``form="site"``    -- sites left of ``center`` are left-normalized
  (A†A = 1), sites right of it right-normalized (BB† = 1);
* ``form="bond"``    -- left-normalized up to bond ``center``, diagonal
  nonnegative Schmidt weights on the bond, right-normalized after it.

Canonicalization rescales to unit norm and reports the original norm, since
the projector formulas downstream assume a normalized reference state.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import (
    NO_TRUNCATION,
    Tensor,
    TruncationPolicy,
    contract,
    qr_split,
    read_tensor_blob,
    rq_split,
    svd_split,
    write_tensor_blob,
)

__all__ = [
    "Mps",
    "random_mps",
    "product_mps",
    "canonicalize",
    "canonical_defect",
    "shift_center",
    "overlap",
    "mps_add",
    "mps_scale",
    "mps_norm",
    "canonical_sets",
    "save_mps",
    "load_mps",
]

FORM_TOL = 1e-10  # gauge checks (isometry conditions) must hold to this


def virt(bond: int) -> str:
    """Virtual leg name at bond ``bond`` (0..L)."""
    return f"v{bond}"


def phys(site: int) -> str:
    """Physical leg name at site ``site`` (1..L)."""
    return f"p{site}"


@dataclass(frozen=True)
class Mps:
    """Open-boundary MPS with canonical-form metadata.

    Attributes:
        sites:  L site tensors, legs ("v{l-1}", "p{l}", "v{l}"), with
                extent-1 dummy bonds at both ends.
        form:   "raw", "site" (orthogonality center at site ``center``) or
                "bond" (Schmidt weights ``weights`` live on bond ``center``).
        center: site index in [1, L] for "site", bond index in [0, L] for
                "bond"; 0 for "raw".
        weights: diagonal bond weights for the "bond" form, else None.
    """

    sites: tuple[Tensor, ...]
    form: str = "raw"
    center: int = 0
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        L = len(self.sites)
        if L == 0:
            raise ValueError("an MPS needs at least one site")
        d = self.sites[0].extent(phys(1))
        for l, t in enumerate(self.sites, start=1):
            want = (virt(l - 1), phys(l), virt(l))
            if t.legs != want:
                raise ValueError(f"site {l} legs {t.legs}, expected {want}")
            if t.extent(phys(l)) != d:
                raise ValueError("physical dimension must be uniform")
        if self.sites[0].extent(virt(0)) != 1 or self.sites[-1].extent(virt(L)) != 1:
            raise ValueError("outer dummy bonds must have extent 1")
        for l in range(1, L):
            if self.sites[l - 1].extent(virt(l)) != self.sites[l].extent(virt(l)):
                raise ValueError(f"virtual extents disagree at bond {l}")
        if self.form not in ("raw", "site", "bond"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.form == "site" and not 1 <= self.center <= L:
            raise ValueError("site-canonical center out of range")
        if self.form == "bond":
            if not 0 <= self.center <= L:
                raise ValueError("bond-canonical bond out of range")
            if self.weights is None:
                raise ValueError("bond form requires weights")

    @property
    def L(self) -> int:
        return len(self.sites)

    @property
    def d(self) -> int:
        return self.sites[0].extent(phys(1))

    @property
    def bond_dims(self) -> tuple[int, ...]:
        """Extents of bonds 0..L (outer dummies included)."""
        return tuple([self.sites[0].extent(virt(0))] + [t.extent(virt(l + 1)) for l, t in enumerate(self.sites)])

    def site(self, l: int) -> Tensor:
        """Site tensor at 1-based position ``l``."""
        return self.sites[l - 1]

    def plain_sites(self) -> list[Tensor]:
        """Site tensors with any bond weights absorbed (pure chain of M_l)."""
        out = list(self.sites)
        if self.form == "bond" and self.weights is not None:
            b = self.center
            if b < self.L:
                t = out[b]
                lam = Tensor(np.diag(self.weights), ("lam", virt(b)))
                out[b] = contract(lam, t, [(virt(b), virt(b))]).rename({"lam": virt(b)}).transpose(
                    (virt(b), phys(b + 1), virt(b + 1))
                )
            else:
                t = out[b - 1]
                lam = Tensor(np.diag(self.weights), (virt(b), "lam"))
                out[b - 1] = contract(t, lam, [(virt(b), virt(b))]).rename({"lam": virt(b)})
        return out


# ---------- construction ----------


def max_bond_profile(L: int, d: int, cap: int | Sequence[int] | None) -> list[int]:
    """Bond extents for bonds 0..L: min(cap, d^l, d^{L-l}).

    ``cap`` may be a single ceiling, a full per-bond profile of length
    L + 1 (clamped to the exponential ceilings), or None for no cap.
    """
    profile: Sequence[int] | None = None
    if cap is not None and not isinstance(cap, int):
        profile = list(cap)
        if len(profile) != L + 1:
            raise ValueError(f"bond profile needs {L + 1} entries, got {len(profile)}")
        if min(profile) < 1:
            raise ValueError("bond extents must be positive")
    dims = []
    for l in range(L + 1):
        exact = d ** min(l, L - l)
        if profile is not None:
            dims.append(min(profile[l], exact))
        else:
            dims.append(exact if cap is None else min(cap, exact))
    return dims


def random_mps(L: int, d: int, bond_cap: int | Sequence[int] | None = None, seed: int = 0) -> Mps:
    """Seeded random MPS, site-canonical at site 1 with unit norm.

    ``bond_cap`` is a single cap, a full bond-dimension profile (length
    L + 1, clamped to d^min(l, L-l)), or None; identical seeds give
    bit-identical tensors.
    """
    if L < 1 or d < 2:
        raise ValueError("need L >= 1 and d >= 2")
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = max_bond_profile(L, d, bond_cap)
    sites = [
        Tensor(rng.standard_normal((dims[l - 1], d, dims[l])), (virt(l - 1), phys(l), virt(l)))
        for l in range(1, L + 1)
    ]
    psi, _ = canonicalize(Mps(tuple(sites)), 1)
    return psi


def product_mps(L: int, d: int, local_states: list[np.ndarray] | None = None) -> Mps:
    """Product state with the given local vectors (default all |0>)."""
    sites = []
    for l in range(1, L + 1):
        vec = np.zeros(d)
        if local_states is None:
            vec[0] = 1.0
        else:
            vec = np.asarray(local_states[l - 1], dtype=np.float64)
        sites.append(Tensor(vec.reshape(1, d, 1), (virt(l - 1), phys(l), virt(l))))
    return Mps(tuple(sites), form="site", center=1)


# ---------- canonicalization ----------


def _left_normalize_upto(sites: list[Tensor], k: int) -> None:
    """QR-sweep sites 1..k into left-normalized form, absorbing R rightward."""
    for l in range(1, k + 1):
        q, r = qr_split(sites[l - 1], (virt(l - 1), phys(l)), new_leg="qr")
        sites[l - 1] = q.rename({"qr": virt(l)})
        nxt = contract(r, sites[l], [(virt(l), virt(l))])
        sites[l] = nxt.rename({"qr": virt(l)}).transpose((virt(l), phys(l + 1), virt(l + 1)))


def _right_normalize_downto(sites: list[Tensor], k: int) -> None:
    """QR-sweep sites L..k into right-normalized form, absorbing L leftward."""
    L = len(sites)
    for l in range(L, k - 1, -1):
        r, q = rq_split(sites[l - 1], (phys(l), virt(l)), new_leg="rq")
        sites[l - 1] = q.rename({"rq": virt(l - 1)}).transpose((virt(l - 1), phys(l), virt(l)))
        prv = contract(sites[l - 2], r, [(virt(l - 1), virt(l - 1))])
        sites[l - 2] = prv.rename({"rq": virt(l - 1)})


def canonicalize(psi: Mps, center: int, form: str = "site") -> tuple[Mps, float]:
    """Bring ``psi`` to site- or bond-canonical form at ``center``.

    Returns (state, norm): the state is rescaled to unit norm, ``norm`` is
    the original 2-norm. The represented ray is unchanged; gauge moves are
    exact (QR/SVD without truncation).

    Raises:
        ValueError: center out of range, or the state has zero norm.
    """
    L = psi.L
    sites = psi.plain_sites()
    if form == "site":
        if not 1 <= center <= L:
            raise ValueError(f"site center {center} outside [1, {L}]")
        if center > 1:
            _left_normalize_upto(sites, center - 1)
        if center < L:
            _right_normalize_downto(sites, center + 1)
        c = sites[center - 1]
        norm = c.norm()
        if norm == 0.0:
            raise ValueError("cannot canonicalize a zero state")
        sites[center - 1] = c.scaled(1.0 / norm)
        return Mps(tuple(sites), form="site", center=center), norm

    if form == "bond":
        if not 0 <= center <= L:
            raise ValueError(f"bond index {center} outside [0, {L}]")
        site_at = max(center, 1)
        out, norm = canonicalize(Mps(tuple(sites)), site_at, form="site")
        sites = list(out.sites)
        l = site_at
        if center == 0:
            # all sites right-normalized; the 1x1 weight carries the (unit) norm
            r, q = rq_split(sites[0], (phys(1), virt(1)), new_leg="rq")
            scalar = float(r.data.flat[0])
            site1 = q.rename({"rq": virt(0)}).transpose((virt(0), phys(1), virt(1)))
            sites[0] = site1.scaled(1.0 if scalar >= 0.0 else -1.0)
            return Mps(tuple(sites), form="bond", center=0, weights=np.array([abs(scalar)])), norm
        u, s, vh, _ = svd_split(sites[l - 1], (virt(l - 1), phys(l)), NO_TRUNCATION, new_leg="sv")
        sites[l - 1] = u.rename({"sv": virt(l)})
        if l < L:
            nxt = contract(vh, sites[l], [(virt(l), virt(l))])
            sites[l] = nxt.rename({"sv": virt(l)}).transpose((virt(l), phys(l + 1), virt(l + 1)))
        else:
            # bond L: fold the residual 1x1 rotation (a sign) into the site
            sites[l - 1] = sites[l - 1].scaled(float(vh.data.flat[0]))
        return Mps(tuple(sites), form="bond", center=center, weights=s), norm

    raise ValueError(f"unknown target form {form!r}")


def shift_center(psi: Mps, direction: str, policy: TruncationPolicy = NO_TRUNCATION) -> tuple[Mps, float]:
    """Move a site-canonical center one site left or right via SVD.

    Returns the shifted state and the discarded weight (sum of squared
    dropped singular values under ``policy``). The kept part is renormalized.
    """
    if psi.form != "site":
        raise ValueError("shift_center expects a site-canonical state")
    l = psi.center
    L = psi.L
    sites = list(psi.sites)
    if direction == "right":
        if l + 1 > L:
            raise ValueError("cannot shift past the right chain end")
        u, s, vh, dw = svd_split(sites[l - 1], (virt(l - 1), phys(l)), policy, new_leg="sv")
        norm = float(np.linalg.norm(s))
        center_mat = Tensor(np.diag(s / norm), ("svl", "sv"))
        sites[l - 1] = u.rename({"sv": virt(l)})
        nxt = contract(vh, sites[l], [(virt(l), virt(l))])
        nxt = contract(center_mat, nxt, [("sv", "sv")])
        sites[l] = nxt.rename({"svl": virt(l)}).transpose((virt(l), phys(l + 1), virt(l + 1)))
        return Mps(tuple(sites), form="site", center=l + 1), dw
    if direction == "left":
        if l - 1 < 1:
            raise ValueError("cannot shift past the left chain end")
        u, s, vh, dw = svd_split(sites[l - 1], (virt(l - 1),), policy, new_leg="sv")
        norm = float(np.linalg.norm(s))
        center_mat = Tensor(np.diag(s / norm), ("sv", "svr"))
        sites[l - 1] = vh.rename({"sv": virt(l - 1)}).transpose((virt(l - 1), phys(l), virt(l)))
        prv = contract(sites[l - 2], u, [(virt(l - 1), virt(l - 1))])
        prv = contract(prv, center_mat, [("sv", "sv")])
        sites[l - 2] = prv.rename({"svr": virt(l - 1)})
        return Mps(tuple(sites), form="site", center=l - 1), dw
    raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")


# ---------- contractions ----------


def canonical_defect(psi: Mps) -> float:
    """Largest violation of the gauge conditions the form metadata claims.

    Zero-ish (below FORM_TOL) for healthy site/bond-canonical states; raw
    states report 0 by definition.
    """
    if psi.form == "raw":
        return 0.0
    left_upto = psi.center - 1 if psi.form == "site" else psi.center
    dev = 0.0
    for l in range(1, psi.L + 1):
        t = psi.sites[l - 1].data
        if l <= left_upto:
            m = t.reshape(-1, t.shape[2])
            dev = max(dev, float(np.max(np.abs(m.T @ m - np.eye(m.shape[1])))))
        elif psi.form == "bond" or l > psi.center:
            m = t.reshape(t.shape[0], -1)
            dev = max(dev, float(np.max(np.abs(m @ m.T - np.eye(m.shape[0])))))
    return dev


def overlap(a: Mps, b: Mps) -> float:
    """Inner product <a|b> by left-to-right transfer contraction."""
    if a.L != b.L or a.d != b.d:
        raise ValueError("overlap requires equal length and physical dimension")
    sa, sb = a.plain_sites(), b.plain_sites()
    env = np.ones((1, 1))  # (bra virtual, ket virtual) at the current bond
    for ta, tb in zip(sa, sb):
        tmp = np.tensordot(env, ta.data, axes=(0, 0))  # (ket, phys, bra')
        env = np.tensordot(tmp, tb.data, axes=((0, 1), (0, 1)))  # (bra', ket')
    return float(env[0, 0])


def mps_norm(psi: Mps) -> float:
    return float(np.sqrt(max(overlap(psi, psi), 0.0)))


def mps_scale(psi: Mps, c: float) -> Mps:
    """Scale the represented state by ``c`` (folded into site 1)."""
    sites = list(psi.plain_sites())
    sites[0] = sites[0].scaled(c)
    return Mps(tuple(sites))


def mps_add(a: Mps, b: Mps, ca: float = 1.0, cb: float = 1.0) -> Mps:
    """Represent ``ca*a + cb*b`` by block-diagonal virtual embedding.

    Interior bond extents add; the coefficients are folded into site 1.
    """
    if a.L != b.L or a.d != b.d:
        raise ValueError("mps_add requires equal length and physical dimension")
    L, d = a.L, a.d
    sa, sb = a.plain_sites(), b.plain_sites()
    if L == 1:
        data = ca * sa[0].data + cb * sb[0].data
        return Mps((Tensor(data, sa[0].legs),))
    sites = []
    for l in range(1, L + 1):
        ta, tb = sa[l - 1].data, sb[l - 1].data
        if l == 1:
            block = np.concatenate([ca * ta, cb * tb], axis=2)
        elif l == L:
            block = np.concatenate([ta, tb], axis=0)
        else:
            left = ta.shape[0] + tb.shape[0]
            right = ta.shape[2] + tb.shape[2]
            block = np.zeros((left, d, right))
            block[: ta.shape[0], :, : ta.shape[2]] = ta
            block[ta.shape[0] :, :, ta.shape[2] :] = tb
        sites.append(Tensor(block, (virt(l - 1), phys(l), virt(l))))
    return Mps(tuple(sites))


# ---------- fixed A/B/bond-matrix gauge ----------


def canonical_sets(psi: Mps) -> tuple[list[Tensor], list[Tensor], list[Tensor], float]:
    """Left/right isometry sets plus bond matrices, all mutually consistent.

    Returns (A, B, C, norm) where A[l-1] is the left-normalized tensor at
    site l, B[l-1] the right-normalized one, and C[l] the bond matrix at bond
    l (0..L, shape D_l x D_l, legs ("va", "vb")) such that for *every* bond
    ``A_1..A_l C_l B_{l+1}..B_L`` rebuilds the normalized state exactly. The
    bond matrices are the Schmidt weights times a residual right rotation;
    they are not diagonal in general, but the construction is exact and

    avoids dividing by small Schmidt values.
    """
    L = psi.L
    right, norm = canonicalize(psi, 1, form="site")
    sites = list(right.sites)
    # right-normalize site 1 as well: its residual is a 1x1 scalar (the norm)
    r, q = rq_split(sites[0], (phys(1), virt(1)), new_leg="rq")
    b_set = [q.rename({"rq": virt(0)}).transpose((virt(0), phys(1), virt(1)))] + sites[1:]
    scalar = float(r.data.flat[0])

    a_set: list[Tensor] = []
    bonds: list[Tensor] = [Tensor(np.array([[scalar]]), ("va", "vb"))]
    center = bonds[0]
    for l in range(1, L + 1):
        work = contract(center, b_set[l - 1], [("vb", virt(l - 1))]).rename({"va": virt(l - 1)})
        work = work.transpose((virt(l - 1), phys(l), virt(l)))
        u, s, vh, _ = svd_split(work, (virt(l - 1), phys(l)), NO_TRUNCATION, new_leg="sv")
        a_set.append(u.rename({"sv": virt(l)}))
        lam = Tensor(np.diag(s), ("va", "sv"))
        center = contract(lam, vh, [("sv", "sv")]).rename({virt(l): "vb"})
        bonds.append(center)
    # the final bond matrix is 1x1 with value +-1; fix the sign into A_L
    tail = float(bonds[-1].data.flat[0])
    if tail < 0.0:
        a_set[-1] = a_set[-1].scaled(-1.0)
        bonds[-1] = Tensor(-bonds[-1].data, ("va", "vb"))
    return a_set, b_set, bonds, norm


# ---------- archives ----------


def save_mps(psi: Mps, path) -> None:
    """Write an MPS archive: manifest.json plus one blob per site tensor."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "kind": "mps",
        "L": psi.L,
        "d": psi.d,
        "bond_dims": list(psi.bond_dims),
        "form": {"kind": psi.form, "index": psi.center},
        "norm": mps_norm(psi),
    }
    for l in range(1, psi.L + 1):
        write_tensor_blob(path / f"site_{l}.ten", psi.site(l))
    if psi.form == "bond" and psi.weights is not None:
        write_tensor_blob(path / "bond_weights.ten", Tensor(psi.weights, ("s",)))
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_mps(path) -> Mps:
    """Read an MPS archive written by :func:`save_mps`."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("kind") != "mps":
        raise ValueError(f"{path}: not an MPS archive")
    L = manifest["L"]
    sites = tuple(
        read_tensor_blob(path / f"site_{l}.ten", (virt(l - 1), phys(l), virt(l))) for l in range(1, L + 1)
    )
    form = manifest["form"]["kind"]
    center = manifest["form"]["index"]
    weights = None
    if form == "bond":
        weights = read_tensor_blob(path / "bond_weights.ten", ("s",)).data
    return Mps(sites, form=form, center=center, weights=weights)
