"""Bosonization of collective superoperators and sparse Liouvillian assembly.

Single-emitter superoperators acting on the density matrix are mapped onto
normal-ordered bilinears (and two-body quartics) of collective bosonic
operators b_pq / b_pq^dag, one oscillator per generalized mode (p, q).  The
three elementary collective terms are

* left multiplication  sum_mu sigma_pq rho      ->  sum_t b+_pt b_qt
* right multiplication sum_mu rho sigma_kl      ->  sum_s b+_sl b_sk
* sandwich             sum_mu sigma_pq rho sigma_kl -> b+_pl b_qk

Assembled operators act on the plain coefficient vector rho({n_pq}) (the
convention in which the multinomial weights are absorbed into the basis
expansion).  In that convention a normal-ordered monomial contributes the
integer matrix element prod_modes falling(n_source, #annihilations), which
keeps assembly exact.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import BasisSector
from .states import DensityCoefficients

__all__ = [
    "SectorViolationError",
    "SigmaTerm",
    "SuperOpMonomial",
    "LiouvillianOperator",
    "sigma_left",
    "sigma_right",
    "sigma_sandwich",
    "bosonize",
    "bosonize_two_body",
    "build_standard_dissipator",
    "collective_lowering_dissipator",
    "one_body_hamiltonian_terms",
    "assemble",
    "apply",
    "adjoint",
    "write_coo",
]


class SectorViolationError(RuntimeError):
    """A monomial maps a sector label outside the sector."""

    def __init__(self, monomial, vector):
        self.monomial = monomial
        self.vector = vector
        super().__init__(
            f"monomial {monomial} maps sector vector {tuple(int(c) for c in vector)} "
            f"outside the sector")


@dataclass(frozen=True)
class SigmaTerm:
    """One collective sigma-superoperator term before bosonization.

    kind is 'left' (indices (p, q)), 'right' (indices (k, l)) or 'sandwich'
    (indices (p, q, k, l) meaning sum_mu sigma_pq rho sigma_kl).  Levels are
    0-based.  ``envelope`` optionally names a scalar time modulation.
    """

    kind: str
    indices: tuple[int, ...]
    coefficient: complex = 1.0
    envelope: str | None = None

    def __post_init__(self):
        expected = {"left": 2, "right": 2, "sandwich": 4}
        if self.kind not in expected:
            raise ValueError(f"unknown sigma term kind {self.kind!r}")
        if len(self.indices) != expected[self.kind]:
            raise ValueError(f"{self.kind} term needs {expected[self.kind]} indices")


def sigma_left(p, q, coefficient=1.0, envelope=None) -> SigmaTerm:
    return SigmaTerm("left", (p, q), coefficient, envelope)


def sigma_right(k, l, coefficient=1.0, envelope=None) -> SigmaTerm:
    return SigmaTerm("right", (k, l), coefficient, envelope)


def sigma_sandwich(p, q, k, l, coefficient=1.0, envelope=None) -> SigmaTerm:
    return SigmaTerm("sandwich", (p, q, k, l), coefficient, envelope)


@dataclass(frozen=True)
class SuperOpMonomial:
    """coefficient * prod b+_(i,j) * prod b_(i,j), normal-ordered.

    Creators and annihilators are tuples of (i, j) mode pairs; their lengths
    are equal because the emitter number is conserved.
    """

    coefficient: complex
    creators: tuple[tuple[int, int], ...]
    annihilators: tuple[tuple[int, int], ...]
    envelope: str | None = None

    def __post_init__(self):
        if len(self.creators) != len(self.annihilators):
            raise ValueError("monomial does not conserve the particle number")
        object.__setattr__(self, "creators", tuple(map(tuple, self.creators)))
        object.__setattr__(self, "annihilators", tuple(map(tuple, self.annihilators)))

    def scaled(self, factor: complex) -> "SuperOpMonomial":
        return SuperOpMonomial(self.coefficient * factor, self.creators,
                               self.annihilators, self.envelope)

    def __str__(self):
        ops = [f"b+{c}" for c in self.creators] + [f"b{a}" for a in self.annihilators]
        env = f" * {self.envelope}(t)" if self.envelope else ""
        return f"({self.coefficient}){env} " + " ".join(ops)


def bosonize(term: SigmaTerm, M: int) -> list[SuperOpMonomial]:
    """Quantize one collective sigma term into bosonic bilinears."""
    c, env = term.coefficient, term.envelope
    if term.kind == "left":
        p, q = term.indices
        return [SuperOpMonomial(c, ((p, t),), ((q, t),), env) for t in range(M)]
    if term.kind == "right":
        k, l = term.indices
        return [SuperOpMonomial(c, ((s, l),), ((s, k),), env) for s in range(M)]
    p, q, k, l = term.indices
    return [SuperOpMonomial(c, ((p, l),), ((q, k),), env)]


def bosonize_two_body(matrix_elements: dict, envelope: str | None = None
                      ) -> list[SuperOpMonomial]:
    """Quantize a permutation-invariant two-emitter superoperator.

    Keys are ((s1, t1), (s2, t2), (i2, j2), (i1, j1)) in the superket pair
    basis; each element V maps to V * b+_(s1 t1) b+_(s2 t2) b_(i2 j2) b_(i1 j1).
    """
    out = []
    for (s1t1, s2t2, i2j2, i1j1), value in matrix_elements.items():
        if value == 0:
            continue
        out.append(SuperOpMonomial(value, (tuple(s1t1), tuple(s2t2)),
                                   (tuple(i2j2), tuple(i1j1)), envelope))
    return out


def build_standard_dissipator(rates: np.ndarray, envelope: str | None = None
                              ) -> list[SuperOpMonomial]:
    """Bosonize the generic single-emitter Lindblad dissipator.

    ``rates[i, j, p, q]`` multiplies sum_mu { sigma_ij rho sigma_qp
    - (delta_ip / 2)(sigma_qj rho + rho sigma_qj) }.  The rate tensor must be
    hermitian as a matrix over jump-pair indices, rates[i, j, p, q] =
    conj(rates[p, q, i, j]), which is what makes the dissipator map hermitian
    states to hermitian states; complete positivity is not verified.
    """
    rates = np.asarray(rates, dtype=complex)
    M = rates.shape[0]
    if rates.shape != (M, M, M, M):
        raise ValueError("rates must have shape (M, M, M, M)")
    if not np.allclose(rates, rates.transpose(2, 3, 0, 1).conj(), atol=1e-12):
        raise ValueError("rate tensor is not hermitian: rates[i,j,p,q] != conj(rates[p,q,i,j])")
    out = []
    for i in range(M):
        for j in range(M):
            for p in range(M):
                for q in range(M):
                    g = rates[i, j, p, q]
                    if g == 0:
                        continue
                    out.append(SuperOpMonomial(g, ((i, p),), ((j, q),), envelope))
                    if i == p:
                        for t in range(M):
                            out.append(SuperOpMonomial(-g / 2, ((q, t),), ((j, t),), envelope))
                            out.append(SuperOpMonomial(-g / 2, ((t, j),), ((t, q),), envelope))
    return out


def collective_lowering_dissipator(M: int, upper: int, lower: int, rate: float = 1.0,
                                   envelope: str | None = None) -> list[SuperOpMonomial]:
    """Collective decay upper -> lower at rate ``rate``:

        rate * ( J_- rho J_+  -  (1/2) [J_+ J_- , rho]_+ ),
        J_- = sum_mu sigma_(lower upper).

    The mu = nu part reduces to the standard single-emitter dissipator; the
    mu != nu part produces the two-body quartics responsible for the
    cooperative enhancement.
    """
    u, l = upper, lower
    rates = np.zeros((M, M, M, M))
    rates[l, u, l, u] = rate
    mono = build_standard_dissipator(rates, envelope)
    two_body: dict = {}

    def add(key, value):
        two_body[key] = two_body.get(key, 0.0) + value

    for t in range(M):
        for s in range(M):
            # J_- rho J_+ cross terms: left sigma_(l u) x right sigma_(u l)
            add(((l, t), (s, l), (s, u), (u, t)), rate)
            # -(1/2) J_+ J_- rho cross terms: left x left
            add(((u, t), (l, s), (u, s), (l, t)), -rate / 2)
            # -(1/2) rho J_+ J_- cross terms: right x right
            add(((t, l), (s, u), (s, l), (t, u)), -rate / 2)
    mono.extend(bosonize_two_body(two_body, envelope))
    return mono


def one_body_hamiltonian_terms(h: np.ndarray, envelope: str | None = None
                               ) -> list[SuperOpMonomial]:
    """Commutator Liouvillian i(rho H - H rho) for H = sum_pq h[p, q] J_pq.

    ``h`` must be hermitian; energies are in the scaled units of the run.
    """
    h = np.asarray(h, dtype=complex)
    M = h.shape[0]
    if not np.allclose(h, h.conj().T, atol=1e-12):
        raise ValueError("one-body hamiltonian matrix must be hermitian")
    out = []
    for p in range(M):
        for q in range(M):
            if h[p, q] == 0:
                continue
            out.extend(bosonize(sigma_right(p, q, 1j * h[p, q], envelope), M))
            out.extend(bosonize(sigma_left(p, q, -1j * h[p, q], envelope), M))
    return out


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def monomial_action(monomial: SuperOpMonomial, sector: BasisSector):
    """Vectorized action of one monomial on every sector label.

    Returns (source_indices, target_indices, coefficients) where the
    coefficient is the exact integer prod_modes falling(n_source, k_annihilated)
    valid in the plain-coefficient convention.  Raises
    :class:`SectorViolationError` if any firing label maps out of the sector.
    """
    d = sector.modes
    M = sector.levels
    counts = sector.counts
    ann = Counter(p * M + q for (p, q) in monomial.annihilators)
    cre = Counter(p * M + q for (p, q) in monomial.creators)
    delta = np.zeros(d, dtype=np.int64)
    for col, k in cre.items():
        delta[col] += k
    for col, k in ann.items():
        delta[col] -= k

    mask = np.ones(len(sector), dtype=bool)
    for col, k in ann.items():
        mask &= counts[:, col] >= k
    src = np.flatnonzero(mask)
    empty = (np.empty(0, dtype=np.int64),) * 2 + (np.empty(0, dtype=np.float64),)
    if len(src) == 0:
        return empty

    if sector._key_weights is None:
        raise NotImplementedError("sector too large for integer-key assembly")
    in_key = np.zeros(d, dtype=bool)
    in_key[sector._free_cols] = True
    off_key = np.flatnonzero((delta != 0) & ~in_key)
    if len(off_key):
        raise SectorViolationError(monomial, counts[src[0]])

    dkey = int(delta[sector._free_cols] @ sector._key_weights)
    tgt = sector.lookup_keys(sector._keys[src] + dkey)
    missing = tgt < 0
    if missing.any():
        raise SectorViolationError(monomial, counts[src[np.argmax(missing)]])

    coeff = np.ones(len(src), dtype=np.float64)
    for col, k in ann.items():
        base = counts[src, col].astype(np.float64)
        for j in range(k):
            coeff *= base - j
    return src, tgt, coeff


@dataclass
class LiouvillianOperator:
    """Sparse operator on a basis sector, optionally time-modulated.

    The action at time t is  constant_part + sum_k envelope_k(t) * part_k,
    applied to plain coefficient vectors rho({n_pq}).
    """

    sector: BasisSector
    constant_part: sp.csr_matrix
    envelope_parts: tuple = ()          # of (name, callable, csr_matrix)

    _row_sums: tuple = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.sector)

    def is_constant(self) -> bool:
        return not self.envelope_parts

    def matvec(self, values: np.ndarray, t: float = 0.0) -> np.ndarray:
        if values.shape[0] != self.dim:
            raise ValueError(f"vector length {values.shape[0]} != sector size {self.dim}")
        out = self.constant_part @ values
        for name, func, mat in self.envelope_parts:
            out += func(t) * (mat @ values)
        return out

    def envelope_values(self, t: float) -> np.ndarray:
        return np.array([func(t) for _, func, _ in self.envelope_parts])

    def spectral_bound(self, t: float = 0.0) -> float:
        """Gershgorin bound on eigenvalue magnitudes of the operator at t.

        For one envelope part the bound g(k) = max_rows(rs0 + k * rs_env) is
        convex in the envelope value, so a precomputed chord table answers
        queries without touching the million-entry row-sum arrays.
        """
        if self._row_sums is None:
            def row_abs_sums(mat):
                return np.asarray(np.abs(mat).sum(axis=1)).ravel()

            sums = tuple([row_abs_sums(self.constant_part)]
                         + [row_abs_sums(m) for _, _, m in self.envelope_parts])
            table = None
            if len(self.envelope_parts) == 1 and len(sums[0]):
                knots = np.concatenate(([0.0], 2.0 ** np.arange(0, 11)))
                values = np.array([(sums[0] + k * sums[1]).max() for k in knots])
                table = (knots, values, float(sums[1].max()))
            self._row_sums = (sums, table)
        sums, table = self._row_sums
        if not self.envelope_parts:
            return float(sums[0].max()) if len(sums[0]) else 0.0
        if table is not None:
            k = abs(self.envelope_parts[0][1](t))
            knots, values, slope_cap = table
            if k >= knots[-1]:
                return float(values[-1] + (k - knots[-1]) * slope_cap)
            return float(np.interp(k, knots, values))
        total = sums[0].copy()
        for (name, func, _), s in zip(self.envelope_parts, sums[1:]):
            total += abs(func(t)) * s
        return float(total.max()) if len(total) else 0.0

    def export(self, path) -> None:
        """Write the constant part in coordinate-triple text format."""
        write_coo(self.constant_part, path)


def assemble(monomials, sector: BasisSector, envelopes: dict | None = None
             ) -> LiouvillianOperator:
    """Assemble monomials into a sparse operator on ``sector``.

    Monomials tagged with an envelope name are collected into separate
    constant matrices scaled at apply time by the named scalar functions in
    ``envelopes``.  Every monomial must map the sector into itself.
    """
    envelopes = dict(envelopes or {})
    groups: dict = {}
    for m in monomials:
        groups.setdefault(m.envelope, []).append(m)
    unknown = set(groups) - {None} - set(envelopes)
    if unknown:
        raise ValueError(f"monomials reference undefined envelopes: {sorted(unknown)}")

    dim = len(sector)

    def build(group):
        rows, cols, data = [], [], []
        for m in group:
            src, tgt, coeff = monomial_action(m, sector)
            if len(src) == 0:
                continue
            rows.append(tgt)
            cols.append(src)
            data.append(coeff * m.coefficient)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        mat = sp.coo_matrix(
            (np.concatenate(data),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim), dtype=complex).tocsr()
        mat.sum_duplicates()
        return mat

    constant = build(groups.pop(None, []))
    parts = tuple((name, envelopes[name], build(group))
                  for name, group in sorted(groups.items()))
    return LiouvillianOperator(sector, constant, parts)


def apply(liouvillian: LiouvillianOperator, rho: DensityCoefficients, t: float | None = None
          ) -> DensityCoefficients:
    """Action of the (possibly time-dependent) operator on a coefficient vector."""
    if rho.sector is not liouvillian.sector and len(rho.sector) != liouvillian.dim:
        raise ValueError("density coefficients are aligned to a different sector")
    time = rho.time if t is None else t
    values = liouvillian.matvec(rho.values, time)
    return DensityCoefficients(liouvillian.sector, values, time)


def adjoint(liouvillian: LiouvillianOperator) -> LiouvillianOperator:
    """Operator generating the dual evolution of operator supervectors.

    Defined through the trace pairing P(O, rho) = sum_n O({n_ij}) rho({n_ji}):
    evolving O with the adjoint reproduces pairing against the forward-evolved
    rho.  In matrix form this is T L^T T with T the index-transposition
    permutation of the sector.
    """
    perm = liouvillian.sector.transpose_permutation()

    def conjugate(mat):
        return mat.T.tocsr()[perm][:, perm].tocsr()

    parts = tuple((name, func, conjugate(mat))
                  for name, func, mat in liouvillian.envelope_parts)
    return LiouvillianOperator(liouvillian.sector, conjugate(liouvillian.constant_part),
                               parts)


def write_coo(matrix: sp.spmatrix, path) -> None:
    """Text export: header '# dim <n> nnz <m>' then one 'row col re im' per entry."""
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dim {coo.shape[0]} nnz {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
