"""Environments, effective Hamiltonians, Lanczos, and DMRG ground states.

Environment tensors carry axes (bra bond, operator bond, ket bond). A left
environment at bond l covers sites 1..l (built from left-normalized
tensors); a right environment indexed l covers sites l..L (built from
right-normalized ones), so the energy closes at any bond.

The sweeper keeps the working state in mixed-canonical form and supports
one- and two-site updates; two-site updates truncate per a
:class:`~kdmps.tensor.TruncationPolicy`. Excited-sector searches pass
previously found states through ``orthogonal_to``: every local eigensolve
is then deflated against those states pulled into the local frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mps import Mps, canonicalize, phys, virt
from .mpo import Mpo, _env_step_left, _env_step_right
from .projectors import KeptBases, build_bases
from .tensor import Tensor, TruncationPolicy

__all__ = [
    "EnvCache",
    "EffectiveHam",
    "LanczosResult",
    "DmrgOptions",
    "DmrgResult",
    "build_env",
    "apply_effective",
    "lanczos_lowest",
    "dmrg_ground_state",
    "fixed_point_residuals",
]


# ---------- environment cache over a fixed A/B gauge ----------


@dataclass(frozen=True)
class EnvCache:
    """All left/right operator environments of a state with respect to an MPO.

    ``lefts[l]`` (l = 0..L) covers sites 1..l; ``rights[l]`` (l = 1..L+1)
    covers sites l..L and is stored at index l. Both ends are trivial
    (1,1,1) blocks. ``bases`` records the gauge the cache belongs to.
    """

    bases: KeptBases
    h: Mpo
    lefts: tuple[np.ndarray, ...]
    rights: tuple[np.ndarray, ...]

    def energy_at_bond(self, l: int) -> float:
        """Close <H> at bond l: the result is l-independent."""
        c = self.bases.bond[l]
        tmp = np.tensordot(self.lefts[l], c, axes=(2, 0))  # (b, w, kb')
        tmp = np.tensordot(tmp, self.rights[l + 1], axes=((1, 2), (1, 2)))  # (b, b')
        return float(np.tensordot(c, tmp, axes=((0, 1), (0, 1))))


def build_env(psi: Mps, h: Mpo, bases: KeptBases | None = None) -> EnvCache:
    """Build the full environment cache for ``psi`` (normalized) and ``h``."""
    if bases is None:
        bases, _ = build_bases(psi)
    L = bases.L
    if h.L != L or h.d != bases.d:
        raise ValueError("state and operator shapes disagree")
    a = [t.data for t in bases.left]
    b = [t.data for t in bases.right]
    w = [t.data for t in h.sites]
    lefts: list[np.ndarray] = [np.ones((1, 1, 1))]
    for l in range(1, L + 1):
        lefts.append(_env_step_left(lefts[l - 1], a[l - 1], w[l - 1], a[l - 1]))
    rights: list[np.ndarray] = [np.ones((1, 1, 1))] * (L + 2)
    for l in range(L, 0, -1):
        rights[l] = _env_step_right(rights[l + 1], b[l - 1], w[l - 1], b[l - 1])
    return EnvCache(bases=bases, h=h, lefts=tuple(lefts), rights=tuple(rights))


# ---------- effective Hamiltonians ----------


def _apply_bond(left: np.ndarray, right: np.ndarray, x: np.ndarray) -> np.ndarray:
    tmp = np.tensordot(left, x, axes=(2, 0))  # (b, w, kr)
    return np.tensordot(tmp, right, axes=((1, 2), (1, 2)))  # (b, b')


def apply_window(
    left: np.ndarray,
    ws: list[np.ndarray],
    kets: list[np.ndarray],
    right: np.ndarray,
) -> np.ndarray:
    """Apply an m-site effective operator window, leaving bra legs open.

    ``left``/``right`` are (bra, op, ket) environments flanking the window;
    ``kets`` are the state tensors inside it. Returns the bra-side tensor
    with axes (left bra bond, m physical legs, right bra bond).
    """
    cur = left  # (b, ..opens.., w, k)
    for w, k in zip(ws, kets):
        cur = np.tensordot(cur, w, axes=(-2, 0))  # (b, .., k, p, q, w')
        cur = np.tensordot(cur, k, axes=((-4, -2), (0, 1)))  # (b, .., p, w', k')
    return np.tensordot(cur, right, axes=((-2, -1), (1, 2)))


@dataclass(frozen=True)
class EffectiveHam:
    """Symmetric local operator in a mixed-canonical frame.

    ``mode`` is "bond" (acting on a D x D bond matrix at bond ``site``),
    "1s" (a single site tensor at ``site``) or "2s" (the pair ``site``,
    ``site``+1 and the bond between).
    """

    mode: str
    site: int
    left: np.ndarray
    right: np.ndarray
    ws: tuple[np.ndarray, ...]

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.mode == "bond":
            return _apply_bond(self.left, self.right, x)
        # invariant entering step i: axes (b, w, p_{i+1}..p_m, r, pout_1..pout_i)
        cur = np.tensordot(self.left, x, axes=(2, 0))
        for w in self.ws:
            cur = np.tensordot(cur, w, axes=((1, 2), (0, 2)))
            cur = np.moveaxis(cur, -1, 1)
        return np.tensordot(cur, self.right, axes=((2, 1), (2, 1)))

    def matvec(self, flat: np.ndarray) -> np.ndarray:
        return self.apply(flat.reshape(self.x_shape)).reshape(-1)

    @property
    def x_shape(self) -> tuple[int, ...]:
        dl = self.left.shape[2]
        dr = self.right.shape[2]
        if self.mode == "bond":
            return (dl, dr)
        phys_dims = tuple(w.shape[2] for w in self.ws)
        return (dl, *phys_dims, dr)


def effective_ham(env: EnvCache, mode: str, site: int) -> EffectiveHam:
    """The bond/one-site/two-site effective Hamiltonian from a cache."""
    w = [t.data for t in env.h.sites]
    L = env.bases.L
    if mode == "bond":
        if not 0 <= site <= L:
            raise ValueError("bond index out of range")
        return EffectiveHam("bond", site, env.lefts[site], env.rights[site + 1], ())
    if mode == "1s":
        if not 1 <= site <= L:
            raise ValueError("site index out of range")
        return EffectiveHam("1s", site, env.lefts[site - 1], env.rights[site + 1], (w[site - 1],))
    if mode == "2s":
        if not 1 <= site <= L - 1:
            raise ValueError("two-site window out of range")
        return EffectiveHam("2s", site, env.lefts[site - 1], env.rights[site + 2], (w[site - 1], w[site]))
    raise ValueError(f"unknown mode {mode!r}")


def apply_effective(heff: EffectiveHam, x: Tensor | np.ndarray) -> Tensor | np.ndarray:
    """Apply an effective Hamiltonian to a local tensor (shape-checked)."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.shape != heff.x_shape:
        raise ValueError(f"local tensor shape {arr.shape}, expected {heff.x_shape}")
    out = heff.apply(arr)
    if isinstance(x, Tensor):
        return Tensor(out, x.legs)
    return out


# ---------- Lanczos ----------


@dataclass(frozen=True)
class LanczosResult:
    """Lowest Ritz pair plus convergence diagnostics.

    ``near_degenerate`` marks an unconverged run whose lowest Ritz values
    sit closer than 1e-10: the residual may stagnate there because the
    target eigenvalue is (nearly) degenerate.
    """

    value: float
    vector: np.ndarray
    residual: float
    converged: bool
    iterations: int
    breakdown: bool = False
    near_degenerate: bool = False


def _orthogonalize(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    for q in basis:
        v = v - np.dot(q, v) * q
    return v


def lanczos_lowest(
    matvec,
    init: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-10,
    orth_against: tuple[np.ndarray, ...] = (),
) -> LanczosResult:
    """Lowest eigenpair of a symmetric map by Lanczos iteration.

    The Krylov basis is kept fully reorthogonalized; every generated vector
    is also projected against ``orth_against`` (deflation), so the returned
    pair lives in the orthogonal complement of that set. Iteration stops
    when the residual bound drops below ``tol * max(1, |value|)`` or the
    Krylov space is exhausted (flagged as breakdown, best pair returned).
    """
    if max_iter < 1:
        raise ValueError("need at least one iteration")
    ortho = []
    for g in orth_against:
        gn = np.linalg.norm(g)
        if gn > 0.0:
            ortho.append(np.asarray(g, dtype=np.float64) / gn)

    v = np.asarray(init, dtype=np.float64).reshape(-1).copy()
    v = _orthogonalize(v, ortho)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("initial vector vanishes after orthogonalization")
    v /= nrm

    basis: list[np.ndarray] = [v]
    alphas: list[float] = []
    betas: list[float] = []
    theta = 0.0
    ritz: np.ndarray | None = None
    breakdown = False

    for it in range(1, max_iter + 1):
        w = matvec(basis[-1])
        w = _orthogonalize(w, ortho)
        alphas.append(float(np.dot(basis[-1], w)))
        tri = np.diag(alphas)
        if betas:
            tri += np.diag(betas, 1) + np.diag(betas, -1)
        evals, evecs = np.linalg.eigh(tri)
        theta = float(evals[0])
        ritz = evecs[:, 0]

        w = w - alphas[-1] * basis[-1]
        if len(basis) > 1:
            w = w - betas[-1] * basis[-2]
        w = _orthogonalize(w, basis)  # full reorthogonalization
        w = _orthogonalize(w, ortho)
        beta = float(np.linalg.norm(w))

        # residual bound for the lowest Ritz pair
        bound = beta * abs(ritz[-1])
        if bound <= 0.1 * tol * max(1.0, abs(theta)):
            break
        if beta < 1e-14:
            breakdown = True
            break
        betas.append(beta)
        basis.append(w / beta)

    vec = np.zeros_like(v)
    for c, q in zip(ritz, basis):
        vec += c * q
    vec = _orthogonalize(vec, ortho)
    vn = np.linalg.norm(vec)
    if vn > 0.0:
        vec /= vn
    resid_vec = matvec(vec) - theta * vec
    resid_vec = _orthogonalize(resid_vec, ortho)
    residual = float(np.linalg.norm(resid_vec))
    converged = residual <= tol * max(1.0, abs(theta))
    near_degenerate = not converged and len(alphas) > 1 and float(evals[1] - evals[0]) < 1e-10
    return LanczosResult(theta, vec, residual, converged, len(alphas), breakdown, near_degenerate)


# ---------- DMRG ----------


@dataclass(frozen=True)
class DmrgOptions:
    """Sweep count, truncation, and convergence controls.

    ``conv_tol`` compares energies of consecutive full sweeps. States in
    ``orthogonal_to`` are projected out of every local eigenproblem
    (excited-sector search).
    """

    n_sweeps: int = 12
    policy: TruncationPolicy = field(default_factory=lambda: TruncationPolicy(max_rank=64, rel_cutoff=1e-13))
    conv_tol: float = 1e-10
    lanczos_max_iter: int = 100
    lanczos_tol: float = 1e-10
    orthogonal_to: tuple[Mps, ...] = ()


@dataclass(frozen=True)
class DmrgResult:
    psi: Mps
    energy: float
    sweep_energies: tuple[float, ...]
    local_energies: tuple[float, ...]
    max_discarded: float
    residual: float
    converged: bool
    n_sweeps: int


class _Sweeper:
    """Mutable mixed-canonical working state for DMRG sweeps."""

    def __init__(self, psi0: Mps, h: Mpo, opts: DmrgOptions):
        state, _ = canonicalize(psi0, 1)
        self.sites = [t.data for t in state.sites]  # sites[center-1] is the center
        self.center = 1
        self.h = h
        self.w = [t.data for t in h.sites]
        self.L = h.L
        self.d = h.d
        self.opts = opts
        self.lefts: list[np.ndarray | None] = [None] * (self.L + 1)
        self.rights: list[np.ndarray | None] = [None] * (self.L + 2)
        self.lefts[0] = np.ones((1, 1, 1))
        self.rights[self.L + 1] = np.ones((1, 1, 1))
        for l in range(self.L, 1, -1):
            self.rights[l] = _env_step_right(self.rights[l + 1], self.sites[l - 1], self.w[l - 1], self.sites[l - 1])
        # overlap environments per orthogonality constraint: (ket bond, gs bond)
        self.ortho = [[t.data for t in g.plain_sites()] for g in opts.orthogonal_to]
        self.olefts = [[None] * (self.L + 1) for _ in self.ortho]
        self.orights = [[None] * (self.L + 2) for _ in self.ortho]
        for i, g in enumerate(self.ortho):
            self.olefts[i][0] = np.ones((1, 1))
            self.orights[i][self.L + 1] = np.ones((1, 1))
            for l in range(self.L, 1, -1):
                self.orights[i][l] = self._ostep_right(self.orights[i][l + 1], self.sites[l - 1], g[l - 1])

    @staticmethod
    def _ostep_left(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
        tmp = np.tensordot(env, bra, axes=(0, 0))  # (g, p, b')
        return np.tensordot(tmp, ket, axes=((0, 1), (0, 1)))  # (b', g')

    @staticmethod
    def _ostep_right(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
        tmp = np.tensordot(bra, env, axes=(2, 0))  # (b, p, g)
        return np.tensordot(tmp, ket, axes=((1, 2), (1, 2)))  # (b', g')

    def _local_constraints(self, l: int, width: int) -> tuple[np.ndarray, ...]:
        """Constraint states pulled into the local frame at sites l..l+width-1."""
        out = []
        for i, g in enumerate(self.ortho):
            cur = self.olefts[i][l - 1]  # (bra bond, gs bond)
            for s in range(l, l + width):
                cur = np.tensordot(cur, g[s - 1], axes=(-1, 0))  # (b, .., p, g')
            cur = np.tensordot(cur, self.orights[i][l + width], axes=(-1, 1))
            v = cur.reshape(-1)
            n = np.linalg.norm(v)
            if n > 1e-12:
                out.append(v / n)
        return tuple(out)

    def _solve_local(self, l: int, width: int) -> tuple[float, np.ndarray, LanczosResult]:
        left = self.lefts[l - 1]
        right = self.rights[l + width]
        ws = tuple(self.w[l - 1 : l + width - 1])
        heff = EffectiveHam("1s" if width == 1 else "2s", l, left, right, ws)
        if width == 1:
            x0 = self.sites[l - 1]
        else:
            x0 = np.tensordot(self.sites[l - 1], self.sites[l], axes=(2, 0))
        res = lanczos_lowest(
            heff.matvec,
            x0.reshape(-1),
            max_iter=self.opts.lanczos_max_iter,
            tol=self.opts.lanczos_tol,
            orth_against=self._local_constraints(l, width),
        )
        return res.value, res.vector.reshape(heff.x_shape), res

    def _update_envs_left(self, l: int) -> None:
        self.lefts[l] = _env_step_left(self.lefts[l - 1], self.sites[l - 1], self.w[l - 1], self.sites[l - 1])
        for i, g in enumerate(self.ortho):
            self.olefts[i][l] = self._ostep_left(self.olefts[i][l - 1], self.sites[l - 1], g[l - 1])

    def _update_envs_right(self, l: int) -> None:
        self.rights[l] = _env_step_right(self.rights[l + 1], self.sites[l - 1], self.w[l - 1], self.sites[l - 1])
        for i, g in enumerate(self.ortho):
            self.orights[i][l] = self._ostep_right(self.orights[i][l + 1], self.sites[l - 1], g[l - 1])

    def _split_two_site(self, l: int, theta: np.ndarray, to_right: bool) -> float:
        dl, d, _, dr = theta.shape
        m = theta.reshape(dl * d, d * dr)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        keep = self.opts.policy.kept_count(s)
        dw = float(np.sum(s[keep:] ** 2))
        u, s, vh = u[:, :keep], s[:keep], vh[:keep, :]
        s = s / np.linalg.norm(s)
        if to_right:
            self.sites[l - 1] = u.reshape(dl, d, keep)
            self.sites[l] = (s[:, None] * vh).reshape(keep, d, dr)
            self.center = l + 1
        else:
            self.sites[l - 1] = (u * s).reshape(dl, d, keep)
            self.sites[l] = vh.reshape(keep, d, dr)
            self.center = l
        return dw

    def move_center_to(self, target: int) -> None:
        """Gauge moves without optimization (QR), used to reposition."""
        while self.center < target:
            l = self.center
            dl, d, dr = self.sites[l - 1].shape
            q, r = np.linalg.qr(self.sites[l - 1].reshape(dl * d, dr))
            self.sites[l - 1] = q.reshape(dl, d, q.shape[1])
            self.sites[l] = np.tensordot(r, self.sites[l], axes=(1, 0))
            self._update_envs_left(l)
            self.center = l + 1
        while self.center > target:
            l = self.center
            dl, d, dr = self.sites[l - 1].shape
            q, r = np.linalg.qr(self.sites[l - 1].reshape(dl, d * dr).T)
            self.sites[l - 1] = q.T.reshape(q.T.shape[0], d, dr)
            self.sites[l - 2] = np.tensordot(self.sites[l - 2], r.T, axes=(2, 0))
            self._update_envs_right(l)
            self.center = l - 1

    def to_mps(self) -> Mps:
        sites = tuple(
            Tensor(arr, (virt(l), phys(l + 1), virt(l + 1))) for l, arr in enumerate(self.sites)
        )
        return Mps(sites, form="site", center=self.center)


def dmrg_ground_state(psi0: Mps, h: Mpo, mode: str = "2s", opts: DmrgOptions | None = None) -> DmrgResult:
    """Variational ground-state search by alternating left/right sweeps.

    ``mode`` "2s" optimizes two-site windows and truncates per the options'
    policy (bond dimensions can grow); "1s" optimizes single sites at fixed
    bond dimensions. Convergence is declared when the energy change between
    consecutive full sweeps drops below ``opts.conv_tol``; the state is
    returned either way, with the flag recording which case occurred.
    """
    if mode not in ("1s", "2s"):
        raise ValueError("mode must be '1s' or '2s'")
    opts = opts or DmrgOptions()
    sw = _Sweeper(psi0, h, opts)
    L = sw.L
    if mode == "2s" and L < 2:
        raise ValueError("two-site mode needs L >= 2")

    sweep_energies: list[float] = []
    local_energies: list[float] = []
    max_dw = 0.0
    energy = np.inf
    converged = False
    last_res: LanczosResult | None = None
    sweeps_done = 0

    for sweep in range(1, opts.n_sweeps + 1):
        prev = energy
        if mode == "2s":
            for l in range(1, L):
                e, theta, last_res = sw._solve_local(l, 2)
                local_energies.append(e)
                max_dw = max(max_dw, sw._split_two_site(l, theta, to_right=True))
                sw._update_envs_left(l)
            for l in range(L - 1, 0, -1):
                e, theta, last_res = sw._solve_local(l, 2)
                local_energies.append(e)
                max_dw = max(max_dw, sw._split_two_site(l, theta, to_right=False))
                sw._update_envs_right(l + 1)
        else:
            for l in range(1, L + 1):
                e, c, last_res = sw._solve_local(l, 1)
                local_energies.append(e)
                sw.sites[l - 1] = c
                if l < L:
                    sw.move_center_to(l + 1)
            for l in range(L, 0, -1):
                e, c, last_res = sw._solve_local(l, 1)
                local_energies.append(e)
                sw.sites[l - 1] = c
                if l > 1:
                    sw.move_center_to(l - 1)
        energy = local_energies[-1]
        sweep_energies.append(energy)
        sweeps_done = sweep
        if sweep > 1 and abs(energy - prev) < opts.conv_tol:
            converged = True
            break

    psi = sw.to_mps()
    residual = last_res.residual if last_res is not None else np.inf
    return DmrgResult(
        psi=psi,
        energy=float(energy),
        sweep_energies=tuple(sweep_energies),
        local_energies=tuple(local_energies),
        max_discarded=max_dw,
        residual=float(residual),
        converged=converged,
        n_sweeps=sweeps_done,
    )


def fixed_point_residuals(psi: Mps, h: Mpo, l: int | None = None) -> dict[str, float]:
    """Bond, one-site (both flanking sites), and two-site defect norms.

    Evaluates ||(H_eff - E) x|| for the bond matrix at bond l, the centers
    at sites l and l+1, and the two-site window, all in one fixed gauge.
    At a variational fixed point the bond and one-site defects are bounded
    by the two-site one (they are its kept-sector projections).
    """
    bases, _ = build_bases(psi)
    env = build_env(psi, h, bases=bases)
    L = bases.L
    if l is None:
        l = L // 2
    if not 1 <= l <= L - 1:
        raise ValueError("need a bond 1 <= l <= L-1")
    e = env.energy_at_bond(l)

    out: dict[str, float] = {}
    c = bases.bond[l]
    hb = effective_ham(env, "bond", l)
    out["bond"] = float(np.linalg.norm(hb.apply(c) - e * c))
    for s, key in ((l, "one_site_left"), (l + 1, "one_site_right")):
        x = bases.center_site(s).data
        h1 = effective_ham(env, "1s", s)
        out[key] = float(np.linalg.norm(h1.apply(x) - e * x))
    x2 = np.tensordot(bases.left[l - 1].data, np.tensordot(bases.bond[l], bases.right[l].data, axes=(1, 0)), axes=(2, 0))
    h2 = effective_ham(env, "2s", l)
    out["two_site"] = float(np.linalg.norm(h2.apply(x2) - e * x2))
    out["energy"] = e
    return out
