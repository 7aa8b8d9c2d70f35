"""Brute-force reference on the full Liouville space of distinguishable emitters.

Every superoperator here is built from Kronecker products of single-emitter
matrix-unit actions, never from the bosonized machinery, so agreement between
the two paths validates the occupation-number engine end to end.  Dimensions
grow as (M^2)^N (times (n_max+1)^2 with a field mode), which keeps this module
strictly test-sized.
"""

from __future__ import annotations

import math
from itertools import permutations

import numpy as np
import scipy.sparse as sp

from .basis import BasisSector
from .states import DensityCoefficients

__all__ = ["FullSpace", "evolve_full", "check_jordan_algebra"]

DIMENSION_CAP = 1 << 26


def _distinct_permutations(items):
    seen = set()
    for perm in permutations(items):
        if perm not in seen:
            seen.add(perm)
            yield perm


def _matrix_unit(M, i, j):
    out = np.zeros((M, M))
    out[i, j] = 1.0
    return out


class FullSpace:
    """Liouville space of N distinguishable M-level emitters (+ optional mode).

    The state vector is indexed by one superket pair (i_mu, j_mu) per emitter,
    flattened most-significant-first, optionally tensored with the field pair
    (n_L, n_R).
    """

    def __init__(self, M: int, N: int, n_max: int | None = None):
        self.M, self.N, self.n_max = M, N, n_max
        self.atomic_dim = (M * M) ** N
        self.field_dim = (n_max + 1) ** 2 if n_max is not None else 1
        if self.atomic_dim * self.field_dim > DIMENSION_CAP:
            raise ValueError(
                f"full Liouville dimension {self.atomic_dim * self.field_dim} "
                f"exceeds the oracle cap {DIMENSION_CAP}")

    @property
    def dim(self) -> int:
        return self.atomic_dim * self.field_dim

    # -- single-emitter lifts ----------------------------------------------

    def _single_left(self, A):
        return sp.kron(sp.csr_matrix(A), sp.identity(self.M, format="csr"),
                       format="csr")

    def _single_right(self, B):
        return sp.kron(sp.identity(self.M, format="csr"),
                       sp.csr_matrix(np.asarray(B).T), format="csr")

    def _lift(self, single, mu):
        d = self.M * self.M
        mat = sp.identity(1, format="csr")
        for nu in range(self.N):
            factor = single if nu == mu else sp.identity(d, format="csr")
            mat = sp.kron(mat, factor, format="csr")
        if self.n_max is not None:
            mat = sp.kron(mat, sp.identity(self.field_dim, format="csr"),
                          format="csr")
        return mat

    def lift_left(self, A, mu):
        """Left multiplication by the single-emitter operator A on emitter mu."""
        return self._lift(self._single_left(A), mu)

    def lift_right(self, B, mu):
        """Right multiplication by B on emitter mu."""
        return self._lift(self._single_right(B), mu)

    def collective_left(self, A):
        return sum(self.lift_left(A, mu) for mu in range(self.N))

    def collective_right(self, B):
        return sum(self.lift_right(B, mu) for mu in range(self.N))

    def sandwich_sum(self, A, B):
        """sum_mu (A_mu rho B_mu) as a sparse superoperator."""
        single = self._single_left(A) @ self._single_right(B)
        return sum(self._lift(single, mu) for mu in range(self.N))

    # -- field lifts ---------------------------------------------------------

    def _field_lift(self, left_op=None, right_op=None):
        if self.n_max is None:
            raise ValueError("this space has no field mode")
        nf = self.n_max + 1
        left = sp.csr_matrix(left_op) if left_op is not None else sp.identity(nf)
        right = sp.csr_matrix(np.asarray(right_op).T) if right_op is not None \
            else sp.identity(nf)
        fmat = sp.kron(left, right, format="csr")
        return sp.kron(sp.identity(self.atomic_dim, format="csr"), fmat,
                       format="csr")

    def annihilation(self):
        nf = self.n_max + 1
        a = np.zeros((nf, nf))
        for n in range(1, nf):
            a[n - 1, n] = math.sqrt(n)
        return a

    # -- model Liouvillians --------------------------------------------------

    def standard_dissipator(self, rates):
        """Per-emitter Lindblad dissipator from the rate tensor Gamma[i,j,p,q]."""
        rates = np.asarray(rates, dtype=complex)
        M = self.M
        total = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for i in range(M):
            for j in range(M):
                for p in range(M):
                    for q in range(M):
                        g = rates[i, j, p, q]
                        if g == 0:
                            continue
                        sig_ij = _matrix_unit(M, i, j)
                        sig_qp = _matrix_unit(M, q, p)
                        sig_qj = _matrix_unit(M, q, j)
                        term = self.sandwich_sum(sig_ij, sig_qp)
                        term = term - 0.5 * (self.collective_left(sig_qj)
                                             + self.collective_right(sig_qj)) \
                            if i == p else term
                        total = total + g * term
        return total.tocsr()

    def collective_decay(self, upper, lower, rate=1.0):
        """gamma ( J- rho J+ - (1/2)[J+ J-, rho]_+ ) with collective J's."""
        jm = _matrix_unit(self.M, lower, upper)
        jp = _matrix_unit(self.M, upper, lower)
        L_jm, R_jp = self.collective_left(jm), self.collective_right(jp)
        L_jp, L_jm2 = self.collective_left(jp), self.collective_left(jm)
        R_jm, R_jp2 = self.collective_right(jm), self.collective_right(jp)
        return rate * (L_jm @ R_jp
                       - 0.5 * (L_jp @ L_jm2 + R_jm @ R_jp2)).tocsr()

    def hamiltonian(self, h):
        """Commutator part i(rho H - H rho) for a one-emitter matrix h."""
        h = np.asarray(h, dtype=complex)
        return (1j * (self.collective_right(h) - self.collective_left(h))).tocsr()

    def tcm_liouvillian(self, g=1.0):
        """Jaynes/Tavis-Cummings coupling g (J+ a + a^dag J-), commutator part."""
        a = self.annihilation()
        jp = _matrix_unit(self.M, 1, 0)
        jm = _matrix_unit(self.M, 0, 1)
        L_h = (self.collective_left(jp) @ self._field_lift(left_op=a)
               + self.collective_left(jm) @ self._field_lift(left_op=a.T))
        R_h = (self.collective_right(jp) @ self._field_lift(right_op=a)
               + self.collective_right(jm) @ self._field_lift(right_op=a.T))
        return (1j * g * (R_h - L_h)).tocsr()

    # -- embedding -----------------------------------------------------------

    def _label_weight(self, counts) -> float:
        w = 1.0
        for c in counts:
            w *= math.factorial(int(c))
        return w / math.factorial(self.N)

    def embed(self, rho: DensityCoefficients, field_matrix=None) -> np.ndarray:
        """Spread occupation coefficients uniformly over emitter labelings.

        Every distinct arrangement of the modes receives amplitude
        rho({n}) * prod n! / N!, so that the symmetric projection returns the
        original coefficients exactly.
        """
        sector = rho.sector
        if sector.levels != self.M or sector.particles != self.N:
            raise ValueError("sector does not match this full space")
        d = self.M * self.M
        atomic = np.zeros(self.atomic_dim, dtype=complex)
        for k in np.flatnonzero(rho.values != 0):
            counts = sector.counts[k]
            amp = rho.values[k] * self._label_weight(counts)
            modes = []
            for col in range(d):
                modes.extend([col] * int(counts[col]))
            for arrangement in _distinct_permutations(tuple(modes)):
                idx = 0
                for col in arrangement:
                    idx = idx * d + col
                atomic[idx] += amp
        if self.n_max is None:
            return atomic
        if field_matrix is None:
            raise ValueError("field_matrix required for a space with a mode")
        field = np.asarray(field_matrix, dtype=complex).reshape(-1)
        return np.kron(atomic, field)

    def _decode_counts(self, idx: int) -> tuple:
        d = self.M * self.M
        counts = [0] * d
        for _ in range(self.N):
            counts[idx % d] += 1
            idx //= d
        return tuple(counts)

    def project(self, full: np.ndarray, sector: BasisSector, tol: float = 1e-10
                ) -> DensityCoefficients:
        """Collapse a symmetric full state back to occupation coefficients.

        Rejects inputs whose components differ across emitter relabelings by
        more than ``tol`` (relative to the largest amplitude).
        """
        if self.n_max is not None:
            raise ValueError("use project_with_field for spaces with a mode")
        groups: dict = {}
        for idx, amp in enumerate(full):
            groups.setdefault(self._decode_counts(idx), []).append(amp)
        scale = max(np.abs(full).max(), 1e-30)
        values = np.zeros(len(sector), dtype=complex)
        for counts, amps in groups.items():
            amps = np.asarray(amps)
            spread = np.abs(amps - amps.mean()).max()
            if spread > tol * scale:
                raise ValueError(
                    f"state is not permutation symmetric (spread {spread:.3e} "
                    f"on label {counts})")
            total = amps.sum()
            k = sector.index_of(np.asarray(counts))
            if k < 0:
                if abs(total) > tol * scale:
                    raise ValueError(f"symmetric component {counts} outside sector")
                continue
            values[k] = total
        return DensityCoefficients(sector, values)

    def project_with_field(self, full: np.ndarray, sector: BasisSector,
                           tol: float = 1e-10) -> np.ndarray:
        """Like :meth:`project`, returning (sector size, n_max+1, n_max+1)."""
        nf = self.n_max + 1
        mat = np.asarray(full).reshape(self.atomic_dim, nf, nf)
        out = np.zeros((len(sector), nf, nf), dtype=complex)
        scale = max(np.abs(full).max(), 1e-30)
        groups: dict = {}
        for idx in range(self.atomic_dim):
            groups.setdefault(self._decode_counts(idx), []).append(idx)
        for counts, idxs in groups.items():
            block = mat[idxs]
            spread = np.abs(block - block.mean(axis=0)).max()
            if spread > tol * scale:
                raise ValueError("state is not permutation symmetric")
            total = block.sum(axis=0)
            k = sector.index_of(np.asarray(counts))
            if k < 0:
                if np.abs(total).max() > tol * scale:
                    raise ValueError(f"symmetric component {counts} outside sector")
                continue
            out[k] = total
        return out


def evolve_full(liouvillian: sp.spmatrix, state: np.ndarray, t_out, cfg) -> list:
    """Dense-state evolution under a full-space superoperator matrix."""
    from .dynamics import integrate

    mat = liouvillian.tocsr()

    def rhs(t, y):
        return mat @ y

    bound = float(np.abs(mat).sum(axis=1).max())
    return integrate(rhs, 0.0, np.asarray(state, dtype=complex), t_out, cfg,
                     spectral_bound=lambda t: bound)


def check_jordan_algebra(M: int, N: int, sector: BasisSector | None = None,
                         assembled_gamma=None) -> dict:
    """Verify the collective-operator commutation relations.

    Checks [J_ij, J_pq] = d_pj J_iq - d_iq J_pj for the left-collective
    operators and the analogous relation for the sandwich superoperators
    G_pq^kl, both on the full space and (when ``sector`` and the bosonized
    matrices are supplied) for the occupation-number matrices.  Returns the
    maximum violations found.
    """
    space = FullSpace(M, N)
    report = {}

    left = {(i, j): space.collective_left(_matrix_unit(M, i, j))
            for i in range(M) for j in range(M)}
    worst = 0.0
    for (i, j), a in left.items():
        for (p, q), b in left.items():
            comm = (a @ b - b @ a)
            expected = sp.csr_matrix(a.shape, dtype=complex)
            if p == j:
                expected = expected + left[(i, q)]
            if i == q:
                expected = expected - left[(p, j)]
            diff = comm - expected
            if diff.nnz:
                worst = max(worst, float(np.abs(diff.data).max()))
    report["full_left_commutators"] = worst

    gamma = {(m, n, o, p): space.sandwich_sum(_matrix_unit(M, m, n),
                                              _matrix_unit(M, o, p))
             for m in range(M) for n in range(M)
             for o in range(M) for p in range(M)}
    worst = 0.0
    for (m, n, o, p), a in gamma.items():
        for (q, r, s, t), b in gamma.items():
            comm = (a @ b - b @ a)
            expected = sp.csr_matrix(a.shape, dtype=complex)
            if q == n and o == t:
                expected = expected + gamma[(m, r, s, p)]
            if m == r and s == p:
                expected = expected - gamma[(q, n, o, t)]
            diff = comm - expected
            if diff.nnz:
                worst = max(worst, float(np.abs(diff.data).max()))
    report["full_sandwich_commutators"] = worst

    if sector is not None and assembled_gamma is not None:
        worst = 0.0
        for (m, n, o, p), a in assembled_gamma.items():
            for (q, r, s, t), b in assembled_gamma.items():
                comm = (a @ b - b @ a)
                expected = sp.csr_matrix(a.shape, dtype=complex)
                if q == n and o == t:
                    expected = expected + assembled_gamma[(m, r, s, p)]
                if m == r and s == p:
                    expected = expected - assembled_gamma[(q, n, o, t)]
                diff = comm - expected
                if diff.nnz:
                    worst = max(worst, float(np.abs(diff.data).max()))
        report["sector_sandwich_commutators"] = worst
    return report
