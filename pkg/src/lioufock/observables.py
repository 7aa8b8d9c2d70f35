"""Permutation-invariant observables in the occupation-number representation.

A K-emitter operator decomposed over products of single-emitter matrix units
sigma_(i1 j1) ... sigma_(iK jK) maps to a coefficient vector O({n_pq})
obtained by differentiating the generating function prod (lambda_pq)^{n_pq}
at lambda_pq = delta_pq.  The derivatives are evaluated combinatorially:
falling factorials on diagonal modes, exact-match checks on off-diagonal
modes.  Expectation values are the transposed dot product
<O> = sum_n rho({n_ji}) O({n_ij}).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSector
from .states import DensityCoefficients

__all__ = [
    "OperatorCoefficients",
    "KBodySpec",
    "operator_to_coefficients",
    "identity_operator",
    "expectation",
    "population",
    "emission_intensity",
    "j12_supervector",
    "operator_norm_convention_scale",
]


@dataclass
class OperatorCoefficients:
    """Coefficient vector of a permutation-invariant operator on a sector.

    Stored in the operator convention (inverse multinomial weights), so that
    pairing with density coefficients needs no weight factors.
    """

    sector: BasisSector
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.sector),):
            raise ValueError("value vector does not match sector size")

    def copy(self) -> "OperatorCoefficients":
        return OperatorCoefficients(self.sector, self.values.copy())


@dataclass(frozen=True)
class KBodySpec:
    """K-emitter operator: terms map K mode pairs ((i1,j1),...,(iK,jK)) to
    complex matrix elements.  Pair tuples are canonicalized by sorting, which
    is harmless because the sigma factors act on distinct emitters.
    """

    K: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        canon: dict = {}
        for key, value in self.terms.items():
            pairs = tuple(sorted(tuple(p) for p in key))
            if len(pairs) != self.K:
                raise ValueError(f"term {key} does not have {self.K} index pairs")
            canon[pairs] = canon.get(pairs, 0.0) + value
        object.__setattr__(self, "terms", canon)

    def dagger(self) -> "KBodySpec":
        """Hermitian conjugate: transpose every pair, conjugate every element."""
        return KBodySpec(self.K, {tuple((j, i) for (i, j) in key): np.conj(v)
                                  for key, v in self.terms.items()})

    def is_hermitian(self) -> bool:
        other = self.dagger().terms
        if set(other) != set(self.terms):
            return False
        return all(abs(self.terms[k] - other[k]) < 1e-12 for k in self.terms)


def one_body(i: int, j: int, value: complex = 1.0) -> KBodySpec:
    """Spec of the collective operator sum_mu sigma_(i j)."""
    return KBodySpec(1, {((i, j),): value})


def operator_to_coefficients(spec: KBodySpec, sector: BasisSector
                             ) -> OperatorCoefficients:
    """Evaluate the generating-function derivatives of a K-body spec.

    For one term with mode multiplicities {k_pq}: labels contribute
    prod_diag falling(n_pp, k_pp) * prod_offdiag k_pq!  exactly when every
    off-diagonal mode occupation matches its multiplicity (zero elsewhere).
    """
    if spec.K > sector.particles:
        raise ValueError(
            f"operator order K={spec.K} exceeds particle number {sector.particles}")
    M = sector.levels
    counts = sector.counts
    off_cols = np.array([p * M + q for p in range(M) for q in range(M) if p != q],
                        dtype=int)
    values = np.zeros(len(sector), dtype=complex)
    fact = [1, 1]
    for k in range(2, spec.K + 1):
        fact.append(fact[-1] * k)
    for pairs, element in spec.terms.items():
        if element == 0:
            continue
        mult = Counter(p * M + q for (p, q) in pairs)
        required = np.zeros(M * M, dtype=np.int64)
        contrib = np.ones(len(sector))
        scale = 1.0
        for col, k in mult.items():
            p, q = divmod(col, M)
            if p == q:
                base = counts[:, col].astype(np.float64)
                for j in range(k):
                    contrib = contrib * (base - j)
            else:
                required[col] = k
                scale *= fact[k]
        if len(off_cols):
            ok = (counts[:, off_cols] == required[off_cols]).all(axis=1)
            contrib = np.where(ok, contrib, 0.0)
        values += element * scale * contrib
    return OperatorCoefficients(sector, values)


def identity_operator(sector: BasisSector) -> OperatorCoefficients:
    """K=0 identity: 1 on diagonal-only labels (its pairing is the trace)."""
    values = np.where(sector.diagonal_mask(), 1.0, 0.0).astype(complex)
    return OperatorCoefficients(sector, values)


def expectation(operator: OperatorCoefficients, rho: DensityCoefficients) -> complex:
    """<O> = sum_n rho({n_ji}) O({n_ij}) (transposed pairing, no conjugation)."""
    if len(operator.sector) != len(rho.sector):
        raise ValueError("operator and state live on different sectors")
    perm = rho.sector.transpose_permutation()
    return complex(operator.values @ rho.values[perm])


def pairing(operator_values: np.ndarray, rho_values: np.ndarray,
            sector: BasisSector) -> complex:
    """Raw transposed pairing on matching coefficient vectors."""
    perm = sector.transpose_permutation()
    return complex(operator_values @ rho_values[perm])


def population(q: int, rho: DensityCoefficients) -> float:
    """Probability (1/N) <J_qq> of finding one emitter in level q."""
    sector = rho.sector
    mask = sector.diagonal_mask()
    n_qq = sector.counts[:, q * sector.levels + q]
    val = (n_qq[mask] * rho.values[mask]).sum() / max(sector.particles, 1)
    if abs(val.imag) > 1e-10:
        raise ValueError(f"population has imaginary part {val.imag:.3e}")
    return float(val.real)


def emission_intensity(rho: DensityCoefficients, upper: int = 1, lower: int = 0
                       ) -> float:
    """Photon emission rate <J_+ J_-> of the upper -> lower transition.

    Equals (number of excited emitters) plus the sum of coefficients over
    labels carrying exactly one balanced coherence pair on the transition;
    in scaled units the rate is per 1/gamma.
    """
    sector = rho.sector
    M = sector.levels
    mask = sector.diagonal_mask()
    n_uu = sector.counts[:, upper * M + upper]
    total = (n_uu[mask] * rho.values[mask]).sum()

    col_lu = lower * M + upper
    col_ul = upper * M + lower
    off_cols = [p * M + q for p in range(M) for q in range(M) if p != q]
    other = [c for c in off_cols if c not in (col_lu, col_ul)]
    coh = (sector.counts[:, col_lu] == 1) & (sector.counts[:, col_ul] == 1)
    if other:
        coh &= ~sector.counts[:, other].any(axis=1)
    total += rho.values[coh].sum()
    if abs(total.imag) > 1e-9:
        raise ValueError(f"intensity has imaginary part {total.imag:.3e}")
    return float(total.real)


def j12_supervector(sector: BasisSector, upper: int = 1, lower: int = 0
                    ) -> OperatorCoefficients:
    """Coefficient vector of the collective lowering operator J_- = sum sigma_(l u).

    In the operator convention it is exactly 1 on labels with n_(l u) = 1 and
    every other off-diagonal mode empty.
    """
    return operator_to_coefficients(one_body(lower, upper), sector)


def operator_norm_convention_scale(sector: BasisSector) -> np.ndarray:
    """Diagonal scaling from operator-convention coefficients to orthonormal
    superket amplitudes: multiply by sqrt(N! / prod n_pq!)."""
    from scipy.special import gammaln

    N = sector.particles
    log_w = gammaln(N + 1.0) - gammaln(sector.counts + 1.0).sum(axis=1)
    return np.exp(0.5 * log_w)
