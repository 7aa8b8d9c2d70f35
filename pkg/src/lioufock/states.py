"""Density-coefficient vectors: constructors, trace/hermiticity utilities, I/O.

Coefficients rho({n_pq}) follow the convention in which the multinomial
weights sqrt(prod n_pq! / N!) sit in the basis expansion, so the trace of the
state is simply the sum of coefficients over diagonal-only labels and no
weight factors appear in expectation values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.special import gammaln

from .basis import BasisSector, OccupationVector, SectorConstraint, enumerate_basis

__all__ = [
    "StateConstructionError",
    "DensityCoefficients",
    "pure_uncorrelated",
    "mixed_uncorrelated",
    "dicke_state",
    "fermionic_determinant",
    "trace",
    "hermiticity_defect",
    "write_snapshot",
    "read_snapshot",
]

TRACE_TOL = 1e-9


class StateConstructionError(ValueError):
    """Invalid constructor input or a sector that cannot hold the state."""


@dataclass
class DensityCoefficients:
    """Complex coefficient vector aligned to a basis sector at one time."""

    sector: BasisSector
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.sector),):
            raise ValueError(
                f"value vector of length {self.values.shape} does not match "
                f"sector size {len(self.sector)}")

    def copy(self) -> "DensityCoefficients":
        return DensityCoefficients(self.sector, self.values.copy(), self.time)


def trace(rho: DensityCoefficients) -> float:
    """Sum of coefficients over diagonal-only labels (the physical trace)."""
    val = rho.values[rho.sector.diagonal_mask()].sum()
    if abs(val.imag) > 1e-12:
        import logging

        logging.getLogger(__name__).warning(
            "trace has imaginary residue %.3e", val.imag)
    return float(val.real)


def hermiticity_defect(rho: DensityCoefficients) -> float:
    """max |rho({n_ij}) - conj(rho({n_ji}))| over the sector."""
    perm = rho.sector.transpose_permutation()
    return float(np.abs(rho.values - rho.values[perm].conj()).max(initial=0.0))


def _log_factorial(n) -> np.ndarray:
    return gammaln(np.asarray(n, dtype=np.float64) + 1.0)


def _multinomial_weights(sector: BasisSector) -> np.ndarray:
    """N! / prod n_pq! per label, exact integers for small N."""
    N = sector.particles
    if N <= 20:
        out = np.empty(len(sector))
        fact = [math.factorial(k) for k in range(N + 1)]
        fN = math.factorial(N)
        for k, row in enumerate(sector.counts):
            denom = 1
            for c in row:
                denom *= fact[c]
            out[k] = fN // denom if fN % denom == 0 else fN / denom
        return out
    log_w = _log_factorial(N) - _log_factorial(sector.counts).sum(axis=1)
    return np.exp(log_w)


def _check_state(values: np.ndarray, sector: BasisSector, what: str,
                 check_hermitian: bool = True) -> DensityCoefficients:
    rho = DensityCoefficients(sector, values)
    tr = trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise StateConstructionError(
            f"{what}: trace {tr!r} != 1; the sector excludes part of the state")
    if check_hermitian and hermiticity_defect(rho) > TRACE_TOL:
        raise StateConstructionError(
            f"{what}: sector cannot hold the hermitian-conjugate entries")
    return rho


def _require_support_admitted(sector: BasisSector, support_cols, what: str) -> None:
    """Reject sectors that exclude part of the state's support.

    The support of a product state is every composition of N over the listed
    modes; a linear constraint holds on all of them exactly when its
    coefficients are constant over those modes and N times that constant hits
    the target.  Silent truncation would corrupt the physics, so this is an
    error rather than a warning.
    """
    N = sector.particles
    for con in sector.constraints:
        coeffs = {con.coefficients[c] for c in support_cols}
        if len(coeffs) > 1 or N * (coeffs.pop() if coeffs else 0) != con.target:
            raise StateConstructionError(
                f"{what}: sector constraint {con.coefficients} = {con.target} "
                f"excludes part of the state")


def pure_uncorrelated(amplitudes, sector: BasisSector) -> DensityCoefficients:
    """Product state with every emitter in sum_i c_i |i>.

    Coefficients are rho({n_pq}) = N! prod_pq (c_p c_q*)^{n_pq} / n_pq!.
    """
    c = np.asarray(amplitudes, dtype=complex)
    M = sector.levels
    if c.shape != (M,):
        raise StateConstructionError(f"need {M} amplitudes, got {c.shape}")
    norm = float(np.abs(c) ** 2 @ np.ones(M))
    if abs(norm - 1.0) > 1e-12:
        raise StateConstructionError(f"amplitudes not normalized: sum |c|^2 = {norm!r}")
    base = np.outer(c, c.conj()).reshape(-1)       # c_p c_q* per mode
    _require_support_admitted(sector, np.flatnonzero(np.abs(base) > 0),
                              "pure_uncorrelated")
    counts = sector.counts
    with np.errstate(divide="ignore", invalid="ignore"):
        powers = np.where(counts > 0, base[np.newaxis, :] ** counts, 1.0)
    values = _multinomial_weights(sector) * powers.prod(axis=1)
    return _check_state(values, sector, "pure_uncorrelated")


def mixed_uncorrelated(probabilities, sector: BasisSector) -> DensityCoefficients:
    """Statistical mixture with every emitter in level i with probability p_i.

    Diagonal in the occupation basis: rho({n_qq}) = N! prod_q p_q^{n_qq} / n_qq!.
    """
    p = np.asarray(probabilities, dtype=float)
    M = sector.levels
    if p.shape != (M,):
        raise StateConstructionError(f"need {M} probabilities, got {p.shape}")
    if (p < -1e-15).any() or abs(p.sum() - 1.0) > 1e-12:
        raise StateConstructionError("probabilities must be nonnegative and sum to 1")
    _require_support_admitted(
        sector, [q * M + q for q in range(M) if p[q] > 0], "mixed_uncorrelated")
    values = np.zeros(len(sector))
    mask = sector.diagonal_mask()
    diag = sector.diagonal_occupations()[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        powers = np.where(diag > 0, p[np.newaxis, :] ** diag, 1.0)
    values[mask] = _multinomial_weights(sector)[mask] * powers.prod(axis=1)
    return _check_state(values, sector, "mixed_uncorrelated")


def dicke_state(L: int, sector: BasisSector) -> DensityCoefficients:
    """Symmetric two-level Dicke state with L emitters excited.

    Nonzero on labels with balanced coherences n_01 = n_10 and
    n_11 - n_00 = 2L - N, where the value is (N-L)! L! / prod n_pq!.
    """
    if sector.levels != 2:
        raise StateConstructionError("Dicke states are defined for two-level emitters")
    N = sector.particles
    if not 0 <= L <= N:
        raise StateConstructionError(f"excitation count {L} outside 0..{N}")
    for ell in range(min(L, N - L) + 1):
        label = np.array([N - L - ell, ell, ell, L - ell])
        if sector.index_of(label) < 0:
            raise StateConstructionError(
                f"dicke_state: sector excludes label {tuple(label)}")
    counts = sector.counts
    mask = (counts[:, 1] == counts[:, 2]) & (counts[:, 3] - counts[:, 0] == 2 * L - N)
    values = np.zeros(len(sector))
    if N <= 20:
        num = math.factorial(N - L) * math.factorial(L)
        for k in np.flatnonzero(mask):
            denom = 1
            for c in counts[k]:
                denom *= math.factorial(int(c))
            values[k] = num / denom
    else:
        log_num = _log_factorial(N - L) + _log_factorial(L)
        values[mask] = np.exp(log_num - _log_factorial(counts[mask]).sum(axis=1))
    return _check_state(values, sector, "dicke_state")


def fermionic_determinant(occupied, sector: BasisSector) -> DensityCoefficients:
    """Density matrix of the Slater determinant over ``occupied`` levels.

    Built from the determinant of creation superoperators b+_(i_a, i_b); in
    the plain-coefficient convention the entry at a label equals the signed
    count of permutations realizing it: rho({n}) = sum_{pi: n(pi) = n} sgn(pi).
    """
    occ = [int(i) for i in occupied]
    N, M = sector.particles, sector.levels
    if len(occ) != N:
        raise StateConstructionError(f"need N={N} occupied levels, got {len(occ)}")
    if len(set(occ)) != len(occ):
        raise StateConstructionError("occupied levels must be distinct (Pauli exclusion)")
    if any(not 0 <= i < M for i in occ):
        raise StateConstructionError("occupied level outside 0..M-1")
    values = np.zeros(len(sector))
    for perm in permutations(range(N)):
        sign = _permutation_sign(perm)
        label = [0] * (M * M)
        for a in range(N):
            label[occ[a] * M + occ[perm[a]]] += 1
        k = sector.index_of(np.asarray(label))
        if k < 0:
            raise StateConstructionError(
                f"sector excludes determinant label {tuple(label)}")
        values[k] += sign
    return _check_state(values, sector, "fermionic_determinant")


def _permutation_sign(perm) -> int:
    seen = [False] * len(perm)
    sign = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


# ---------------------------------------------------------------------------
# snapshot I/O
# ---------------------------------------------------------------------------

def write_snapshot(rho: DensityCoefficients, path) -> None:
    """Plain-text snapshot: one record per nonzero coefficient.

    Record fields: the M*M occupation counts followed by the real and
    imaginary parts in full precision.  Re-reading and re-writing reproduces
    the file byte for byte.
    """
    sector = rho.sector
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# lioufock snapshot 1\n")
        fh.write(f"# levels {sector.levels}\n")
        fh.write(f"# particles {sector.particles}\n")
        fh.write(f"# time {rho.time:.17g}\n")
        for con in sector.constraints:
            coeff = ",".join(str(c) for c in con.coefficients)
            fh.write(f"# constraint {coeff} = {con.target}\n")
        for k in np.flatnonzero(rho.values != 0):
            v = rho.values[k]
            cols = " ".join(str(int(c)) for c in sector.counts[k])
            fh.write(f"{cols} {v.real:.17g} {v.imag:.17g}\n")


def read_snapshot(path) -> DensityCoefficients:
    """Rebuild a snapshot written by :func:`write_snapshot`."""
    levels = particles = None
    time = 0.0
    constraints = []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if not parts:
                    continue
                if parts[0] == "levels":
                    levels = int(parts[1])
                elif parts[0] == "particles":
                    particles = int(parts[1])
                elif parts[0] == "time":
                    time = float(parts[1])
                elif parts[0] == "constraint":
                    coeff = tuple(int(c) for c in parts[1].split(","))
                    constraints.append(SectorConstraint(coeff, int(parts[3])))
                continue
            records.append(line.split())
    if levels is None or particles is None:
        raise ValueError(f"{path}: missing levels/particles header")
    sector = enumerate_basis(levels, particles, constraints)
    values = np.zeros(len(sector), dtype=complex)
    d = levels * levels
    for rec in records:
        if len(rec) != d + 2:
            raise ValueError(f"{path}: bad record {' '.join(rec)!r}")
        label = np.array([int(x) for x in rec[:d]])
        k = sector.index_of(label)
        if k < 0:
            raise ValueError(f"{path}: label {tuple(label)} not in the sector")
        values[k] = complex(float(rec[d]), float(rec[d + 1]))
    return DensityCoefficients(sector, values, time)
