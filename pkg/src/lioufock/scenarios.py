"""Pre-wired models: cooperative two-level emission, a pumped four-level
cascade with Auger loss, and the Tavis-Cummings model with a quantized mode.

All rates and times are scaled: the decay scenarios use gamma = 1 (time in
1/gamma), the cavity scenario uses g = 1 (time in 1/g).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import dynamics, observables, states, superops
from .basis import (BasisSector, enumerate_basis, occupation_balance,
                    two_level_coherence_sector, zero_occupation)
from .dynamics import IntegratorConfig
from .observables import one_body
from .states import DensityCoefficients

__all__ = [
    "CompactEmissionParams",
    "SpectrumOptions",
    "CompactResult",
    "run_compact",
    "steady_state_population",
    "steady_state_matrix",
    "LambdaParams",
    "LambdaResult",
    "lambda_sector",
    "run_lambda",
    "TavisCummingsParams",
    "TCMResult",
    "CompositeTCMBasis",
    "tcm_composite_sector",
    "tcm_liouvillian",
    "run_tavis_cummings",
]

log = logging.getLogger(__name__)


def _time_grid(t_max: float, points: int) -> np.ndarray:
    return np.linspace(0.0, t_max, points)


# ---------------------------------------------------------------------------
# cooperative emission of two-level emitters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumOptions:
    """Domains for the two-time correlation and its Fourier transform.

    The correlation couples labels one coherence unit away from balance, so
    the spectrum runs on the full (unconstrained) two-level basis; for large N
    the stabilized integrator keeps that affordable.
    """

    omega_max: float = 40.0
    omega_points: int = 801
    t_max: float = 10.0
    t_points: int = 201
    tau_points: int = 1001
    integrator: IntegratorConfig = IntegratorConfig()


@dataclass(frozen=True)
class CompactEmissionParams:
    N: int
    p2: float = 1.0
    t_max: float = 10.0
    points: int = 201
    integrator: IntegratorConfig = IntegratorConfig()
    spectrum: SpectrumOptions | None = None
    keep_states: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p2 <= 1.0:
            raise ValueError("p2 must lie in [0, 1]")
        if self.N < 1:
            raise ValueError("N must be >= 1")


@dataclass
class CompactResult:
    params: CompactEmissionParams
    times: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    intensity: np.ndarray
    sector: BasisSector
    states: list | None = None
    spectrum: dynamics.SpectrumResult | None = None


def compact_liouvillian(N: int) -> superops.LiouvillianOperator:
    """Collective decay generator on the balanced-coherence sector (gamma = 1)."""
    sector = two_level_coherence_sector(N)
    mono = superops.collective_lowering_dissipator(2, upper=1, lower=0, rate=1.0)
    return superops.assemble(mono, sector)


def run_compact(params: CompactEmissionParams) -> CompactResult:
    """Evolve the statistically mixed initial state under collective decay."""
    liouv = compact_liouvillian(params.N)
    sector = liouv.sector
    rho0 = states.mixed_uncorrelated((1.0 - params.p2, params.p2), sector)
    grid = _time_grid(params.t_max, params.points)
    cfg = params.integrator.with_grid(grid)
    snaps = dynamics.evolve(liouv, rho0, cfg)
    p1 = np.array([observables.population(0, s) for s in snaps])
    p2 = np.array([observables.population(1, s) for s in snaps])
    intensity = np.array([observables.emission_intensity(s) for s in snaps])
    spec = None
    if params.spectrum is not None:
        spec = emission_spectrum(params.N, params.p2, params.spectrum)
    return CompactResult(params, grid, p1, p2, intensity, sector,
                         snaps if params.keep_states else None, spec)


def emission_spectrum(N: int, p2: float, opts: SpectrumOptions
                      ) -> dynamics.SpectrumResult:
    """Spectral line shape from X(t, tau) = <J_+(t+tau) J_-(t)>."""
    sector = enumerate_basis(2, N)
    mono = superops.collective_lowering_dissipator(2, upper=1, lower=0, rate=1.0)
    liouv = superops.assemble(mono, sector)
    rho0 = states.mixed_uncorrelated((1.0 - p2, p2), sector)
    t_grid = np.linspace(0.0, opts.t_max, opts.t_points)
    tau_grid = np.linspace(0.0, opts.t_max, opts.tau_points)
    b_mono = superops.bosonize(superops.sigma_left(0, 1), 2)
    corr = dynamics.two_time_correlation(liouv, rho0, one_body(0, 1), b_mono,
                                         t_grid, tau_grid, opts.integrator)
    omega = np.linspace(-opts.omega_max, opts.omega_max, opts.omega_points)
    return dynamics.spectrum(corr, omega)


def steady_state_population(N: int, p2: float) -> float:
    """Trapped excited-state probability of the mixed initial state.

    Catalan-number sum: sum_{k=1}^{N//2} C_{k-1} (p1 p2)^k (N - 2k + 1) / N.
    """
    if not 0.0 <= p2 <= 1.0:
        raise ValueError("p2 must lie in [0, 1]")
    x = (1.0 - p2) * p2
    total = 0.0
    for k in range(1, N // 2 + 1):
        catalan = math.comb(2 * (k - 1), k - 1) // k
        total += catalan * x ** k * (N - 2 * k + 1) / N
    return total


def steady_state_matrix(N: int, p2: float, sector: BasisSector | None = None
                        ) -> DensityCoefficients:
    """Analytic steady state of collective decay from the mixed initial state.

    Alternating binomial sums lose precision as N grows; entries are reliable
    to ~1e-10 for N up to a few tens (exact integer combinatorics below 21).
    """
    sector = sector or two_level_coherence_sector(N)
    x = (1.0 - p2) * p2
    values = np.zeros(len(sector))
    counts = sector.counts
    for k_idx in range(len(sector)):
        n_g, ell, _, n_e = (int(c) for c in counts[k_idx])
        # paper labels: n_g ground occupation, n_e excited, ell coherence pair
        acc = 0.0
        comp = 0.0
        for k in range(n_e + ell, N // 2 + 1):
            binom = math.comb(n_g + ell - k, k - n_e - ell) \
                if 0 <= k - n_e - ell <= n_g + ell - k else 0
            if binom == 0:
                continue
            term = (-1.0) ** (k + n_e) * x ** k * binom
            y = term - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        if acc == 0.0:
            continue
        if N <= 20:
            pref = (n_g - n_e + 1) * math.factorial(N) / (
                math.factorial(n_e) * math.factorial(n_g + ell + 1)
                * math.factorial(ell))
        else:
            from scipy.special import gammaln
            log_pref = (gammaln(N + 1) - gammaln(n_e + 1)
                        - gammaln(n_g + ell + 2) - gammaln(ell + 1))
            pref = (n_g - n_e + 1) * math.exp(log_pref)
        values[k_idx] = pref * acc
    return DensityCoefficients(sector, values)


# ---------------------------------------------------------------------------
# incoherently pumped cascade with Auger loss
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaParams:
    """Pumped cascade: neutral |0> -> excited |2> (rate envelope kappa(t)),
    collective decay |2> -> |1> at gamma = 1, optional Auger loss |2> -> ion.
    """

    N: int
    auger_rate: float = 0.0
    pump_area: float = 10.0        # integral of kappa(t)
    pump_center: float = 2.0
    pump_width: float = 0.5
    t_max: float = 5.0
    points: int = 101
    integrator: IntegratorConfig = IntegratorConfig(method="rkc", rel_tol=1e-6,
                                                    abs_tol=1e-10)
    keep_states: bool = False

    def __post_init__(self):
        if self.auger_rate < 0 or self.pump_area < 0 or self.pump_width <= 0:
            raise ValueError("rates must be nonnegative and pump_width positive")

    def pump_envelope(self, t: float) -> float:
        w = self.pump_width
        return self.pump_area * math.exp(-(t - self.pump_center) ** 2 / (2 * w * w)) \
            / math.sqrt(2 * math.pi * w * w)


@dataclass
class LambdaResult:
    params: LambdaParams
    times: np.ndarray
    populations: dict           # level name -> array
    intensity: np.ndarray
    photon_count: np.ndarray    # cumulative integral of the intensity
    sector: BasisSector
    states: list | None = None

    @property
    def emitted_photons(self) -> float:
        return float(self.photon_count[-1])


def lambda_sector(N: int, auger: bool) -> BasisSector:
    """Cascade sector: levels (neutral, ground, excited[, ion]) with only the
    balanced ground<->excited coherence pair active."""
    M = 4 if auger else 3
    g, e = 1, 2
    cons = [occupation_balance(M, (g, e), (e, g))]
    for p in range(M):
        for q in range(M):
            if p != q and {p, q} != {g, e}:
                cons.append(zero_occupation(M, p, q))
    return enumerate_basis(M, N, cons)


def lambda_liouvillian(params: LambdaParams) -> superops.LiouvillianOperator:
    auger = params.auger_rate > 0
    M = 4 if auger else 3
    sector = lambda_sector(params.N, auger)
    mono = superops.collective_lowering_dissipator(M, upper=2, lower=1, rate=1.0)
    pump = np.zeros((M, M, M, M))
    pump[2, 0, 2, 0] = 1.0
    mono += superops.build_standard_dissipator(pump, envelope="pump")
    if auger:
        rates = np.zeros((M, M, M, M))
        rates[3, 2, 3, 2] = params.auger_rate
        mono += superops.build_standard_dissipator(rates)
    return superops.assemble(mono, sector, envelopes={"pump": params.pump_envelope})


def run_lambda(params: LambdaParams) -> LambdaResult:
    """Pump-then-emit dynamics; all emitters start neutral."""
    liouv = lambda_liouvillian(params)
    sector = liouv.sector
    M = sector.levels
    probs = [0.0] * M
    probs[0] = 1.0
    rho0 = states.mixed_uncorrelated(probs, sector)
    grid = _time_grid(params.t_max, params.points)
    snaps = dynamics.evolve(liouv, rho0, params.integrator.with_grid(grid))
    names = ["neutral", "ground", "excited", "ion"][:M]
    pops = {name: np.array([observables.population(q, s) for s in snaps])
            for q, name in enumerate(names)}
    intensity = np.array([observables.emission_intensity(s, upper=2, lower=1)
                          for s in snaps])
    photon_count = _cumulative_trapezoid(grid, intensity)
    return LambdaResult(params, grid, pops, intensity, photon_count, sector,
                        snaps if params.keep_states else None)


def _cumulative_trapezoid(x, y):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


# ---------------------------------------------------------------------------
# Tavis-Cummings model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TavisCummingsParams:
    """N two-level emitters exchanging excitations with one mode (g = 1).

    ``photons`` selects the initial field: ("vacuum",), ("fock", n) or
    ("coherent", mean).  The truncation is exact for Fock states thanks to
    the two excitation conservation laws; coherent states are cut where the
    Poisson tail mass drops below ~1e-10.
    """

    N: int
    p2: float = 1.0
    photons: tuple = ("vacuum",)
    t_max: float = 25.0
    points: int = 401
    integrator: IntegratorConfig = IntegratorConfig()
    keep_states: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p2 <= 1.0:
            raise ValueError("p2 must lie in [0, 1]")
        kind = self.photons[0]
        if kind not in ("vacuum", "fock", "coherent"):
            raise ValueError(f"unknown field state {kind!r}")

    def n_max(self) -> int:
        kind = self.photons[0]
        if kind == "vacuum":
            return self.N
        if kind == "fock":
            return int(self.photons[1]) + self.N
        mean = float(self.photons[1])
        return math.ceil(mean + 8.0 * math.sqrt(mean)) + self.N


@dataclass
class CompositeTCMBasis:
    """Atomic occupation labels tensored with field index pairs (n_L, n_R).

    One instance per conserved-excitation sector (e_L, e_R): the left/right
    excitation counts n_10 + n_11 + n_L and n_01 + n_11 + n_R are both
    conserved by the coupling, so n_L, n_R are functions of the atomic label
    within a sector.
    """

    atomic: BasisSector
    n_max: int
    excitation: tuple | None          # (e_L, e_R) or None for the full grid
    atomic_idx: np.ndarray
    n_left: np.ndarray
    n_right: np.ndarray

    def __len__(self):
        return len(self.atomic_idx)

    def lookup(self, atomic_idx, n_left, n_right) -> np.ndarray:
        key = (np.asarray(atomic_idx, dtype=np.int64) * (self.n_max + 1)
               + np.asarray(n_left)) * (self.n_max + 1) + np.asarray(n_right)
        pos = np.searchsorted(self._keys, key)
        pos_c = np.minimum(pos, len(self) - 1)
        return np.where(self._keys[pos_c] == key, pos_c, -1)

    def __post_init__(self):
        self._keys = (self.atomic_idx.astype(np.int64) * (self.n_max + 1)
                      + self.n_left) * (self.n_max + 1) + self.n_right
        order = np.argsort(self._keys)
        self._keys = self._keys[order]
        self.atomic_idx = self.atomic_idx[order]
        self.n_left = self.n_left[order]
        self.n_right = self.n_right[order]

    def diagonal_rows(self) -> np.ndarray:
        """Rows contributing to traces: diagonal atomic label and n_L = n_R."""
        at = self.atomic
        diag = at.diagonal_mask()[self.atomic_idx]
        return np.flatnonzero(diag & (self.n_left == self.n_right))


def _left_excitation(atomic: BasisSector) -> np.ndarray:
    return atomic.counts[:, 2] + atomic.counts[:, 3]     # modes (1,0), (1,1)


def _right_excitation(atomic: BasisSector) -> np.ndarray:
    return atomic.counts[:, 1] + atomic.counts[:, 3]     # modes (0,1), (1,1)


def tcm_composite_sector(atomic: BasisSector, n_max: int,
                         excitation: tuple | None = None) -> CompositeTCMBasis:
    """Composite basis, restricted to one (e_L, e_R) sector when given."""
    lexc, rexc = _left_excitation(atomic), _right_excitation(atomic)
    if excitation is None:
        nf = n_max + 1
        a_idx = np.repeat(np.arange(len(atomic)), nf * nf)
        grid = np.arange(nf)
        n_l = np.tile(np.repeat(grid, nf), len(atomic))
        n_r = np.tile(np.tile(grid, nf), len(atomic))
    else:
        e_l, e_r = excitation
        n_l = e_l - lexc
        n_r = e_r - rexc
        ok = (n_l >= 0) & (n_l <= n_max) & (n_r >= 0) & (n_r <= n_max)
        a_idx = np.flatnonzero(ok)
        n_l, n_r = n_l[ok], n_r[ok]
    return CompositeTCMBasis(atomic, n_max, excitation, a_idx.astype(np.int64),
                             np.asarray(n_l, dtype=np.int64),
                             np.asarray(n_r, dtype=np.int64))


_TCM_TERMS = (
    # (coefficient, atomic creators/annihilators builder index, field kind)
    # L = i g sum_t ( adagR b+_t1 b_t0  -  adagL b+_0t b_1t
    #                + aR   b+_t0 b_t1  -  aL    b+_1t b_0t )
    ("adagR", +1j, lambda t: (((t, 1),), ((t, 0),))),
    ("adagL", -1j, lambda t: (((0, t),), ((1, t),))),
    ("aR", +1j, lambda t: (((t, 0),), ((t, 1),))),
    ("aL", -1j, lambda t: (((1, t),), ((0, t),))),
)


def _field_action(kind: str, n_left, n_right):
    """Target field indices and sqrt factors of the four mode actions."""
    if kind == "aL":
        return n_left - 1, n_right, np.sqrt(n_left)
    if kind == "adagL":
        return n_left + 1, n_right, np.sqrt(n_left + 1.0)
    if kind == "aR":
        return n_left, n_right + 1, np.sqrt(n_right + 1.0)
    if kind == "adagR":
        return n_left, n_right - 1, np.sqrt(n_right)
    raise ValueError(kind)


def tcm_liouvillian(comp: CompositeTCMBasis, g: float = 1.0) -> sp.csr_matrix:
    """Sparse coupling generator on a composite sector (time in 1/g)."""
    atomic = comp.atomic
    size = len(comp)
    rows, cols, data = [], [], []
    for kind, coeff, pairs in _TCM_TERMS:
        for t in range(2):
            creators, annihilators = pairs(t)
            mono = superops.SuperOpMonomial(1.0, creators, annihilators)
            src, tgt, cf = superops.monomial_action(mono, atomic)
            tmap = np.full(len(atomic), -1, dtype=np.int64)
            cmap = np.zeros(len(atomic))
            tmap[src] = tgt
            cmap[src] = cf
            a_tgt = tmap[comp.atomic_idx]
            fl, fr, fcoef = _field_action(kind, comp.n_left, comp.n_right)
            fires = (a_tgt >= 0) & (fcoef > 0)
            in_range = (fl >= 0) & (fl <= comp.n_max) & (fr >= 0) & (fr <= comp.n_max)
            if comp.excitation is not None and (fires & ~in_range).any():
                # cannot happen when n_max honors the excitation bound
                raise RuntimeError("field truncation overflow inside a sector")
            ok = fires & in_range
            src_rows = np.flatnonzero(ok)
            if len(src_rows) == 0:
                continue
            tgt_rows = comp.lookup(a_tgt[src_rows], fl[src_rows], fr[src_rows])
            if (tgt_rows < 0).any():
                bad = src_rows[int(np.argmax(tgt_rows < 0))]
                raise superops.SectorViolationError(
                    mono, atomic.counts[comp.atomic_idx[bad]])
            rows.append(tgt_rows)
            cols.append(src_rows)
            data.append(g * coeff * cmap[comp.atomic_idx[src_rows]]
                        * fcoef[src_rows])
    if not rows:
        return sp.csr_matrix((size, size), dtype=complex)
    mat = sp.coo_matrix((np.concatenate(data),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(size, size), dtype=complex).tocsr()
    mat.sum_duplicates()
    return mat


def field_matrix(params: TavisCummingsParams) -> np.ndarray:
    """Initial field density matrix on the truncated Fock ladder."""
    n_max = params.n_max()
    nf = n_max + 1
    kind = params.photons[0]
    out = np.zeros((nf, nf), dtype=complex)
    if kind == "vacuum":
        out[0, 0] = 1.0
    elif kind == "fock":
        n = int(params.photons[1])
        if n > n_max:
            raise ValueError("Fock occupation exceeds the truncation")
        out[n, n] = 1.0
    else:
        mean = float(params.photons[1])
        alpha = math.sqrt(mean)
        log_amp = -0.5 * mean + np.arange(nf) * math.log(alpha + 1e-300) \
            - 0.5 * np.array([math.lgamma(n + 1) for n in range(nf)])
        amp = np.exp(log_amp)
        norm = float((amp ** 2).sum())
        log.info("coherent field truncated at n_max=%d, kept mass %.15f",
                 n_max, norm)
        amp = amp / math.sqrt(norm)
        out = np.outer(amp, amp).astype(complex)
    return out


@dataclass
class TCMResult:
    params: TavisCummingsParams
    times: np.ndarray
    p2: np.ndarray
    mean_photons: np.ndarray
    excitation_mean: np.ndarray      # conserved <J_11 - J_00 + 2 a^dag a>
    asymmetry_mean: np.ndarray       # trace-weighted coherence asymmetry, conserved
    sector_trace_sum: np.ndarray
    sector_keys: list
    sector_sizes: list
    states: dict | None = None       # key -> (composite basis, list of vectors)


def run_tavis_cummings(params: TavisCummingsParams) -> TCMResult:
    """Sector-decomposed evolution of the mixed atomic state and chosen field."""
    N = params.N
    atomic = enumerate_basis(2, N)
    n_max = params.n_max()
    rho_at = states.mixed_uncorrelated((1.0 - params.p2, params.p2), atomic)
    f_mat = field_matrix(params)

    lexc, rexc = _left_excitation(atomic), _right_excitation(atomic)
    pieces: dict = {}
    nz_atomic = np.flatnonzero(np.abs(rho_at.values) > 0)
    nz_field = np.argwhere(np.abs(f_mat) > 0)
    for k in nz_atomic:
        for n_l, n_r in nz_field:
            key = (int(lexc[k] + n_l), int(rexc[k] + n_r))
            pieces.setdefault(key, []).append((k, int(n_l), int(n_r)))

    grid = _time_grid(params.t_max, params.points)
    cfg = params.integrator.with_grid(grid)
    p2 = np.zeros(len(grid))
    photons = np.zeros(len(grid))
    excitation = np.zeros(len(grid))
    asymmetry = np.zeros(len(grid))
    traces = np.zeros(len(grid))
    kept_states: dict = {} if params.keep_states else None
    sector_keys, sector_sizes = [], []

    n11 = atomic.counts[:, 3]
    n00 = atomic.counts[:, 0]
    for key in sorted(pieces):
        comp = tcm_composite_sector(atomic, n_max, key)
        mat = tcm_liouvillian(comp)
        y0 = np.zeros(len(comp), dtype=complex)
        for k, n_l, n_r in pieces[key]:
            row = comp.lookup(np.array([k]), np.array([n_l]), np.array([n_r]))[0]
            if row < 0:
                raise RuntimeError("initial entry missing from its own sector")
            y0[row] = rho_at.values[k] * f_mat[n_l, n_r]
        bound = float(np.abs(mat).sum(axis=1).max()) if mat.nnz else 0.0
        snaps = dynamics.integrate(lambda t, y: mat @ y, 0.0, y0, grid, cfg,
                                   spectral_bound=lambda t: bound)
        rows = comp.diagonal_rows()
        w_exc = n11[comp.atomic_idx[rows]]
        w_gnd = n00[comp.atomic_idx[rows]]
        w_ph = comp.n_left[rows]
        for j, y in enumerate(snaps):
            diag = y[rows].real
            p2[j] += float(w_exc @ diag) / N
            photons[j] += float(w_ph @ diag)
            excitation[j] += float(((w_exc - w_gnd) + 2 * w_ph) @ diag)
            asymmetry[j] += (key[1] - key[0]) * float(diag.sum())
            traces[j] += float(diag.sum())
        sector_keys.append(key)
        sector_sizes.append(len(comp))
        if kept_states is not None:
            kept_states[key] = (comp, snaps)
    return TCMResult(params, grid, p2, photons, excitation, asymmetry, traces,
                     sector_keys, sector_sizes, kept_states)
