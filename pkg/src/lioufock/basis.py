"""Occupation-number superbasis for N identical M-level emitters.

A single emitter contributes M*M generalized modes, one per matrix unit
|p><q| of its density matrix.  A basis label is a vector of M*M
non-negative occupation numbers n_pq (row-major over the pair (p, q),
levels 0-based) that sum to N.  Linear constraints of the form
``sum_pq c_pq n_pq = K`` carve out dynamically closed sectors, e.g. the
balanced-coherence sector n_pq - n_qp = 0 of collective two-level decay.

Sizes are polynomial in N: the unconstrained basis has
binomial(N + M^2 - 1, N) labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "CapacityError",
    "UnsupportedConstraintError",
    "SectorConstraint",
    "OccupationVector",
    "BasisSector",
    "zero_occupation",
    "occupation_balance",
    "enumerate_basis",
    "sector_size_formula",
    "trace_weight",
]

DEFAULT_CAPACITY = 50_000_000

# switch from exact integer factorials to log-gamma arithmetic
EXACT_FACTORIAL_LIMIT = 20


class CapacityError(RuntimeError):
    """Requested enumeration would exceed the configured size limit."""


class UnsupportedConstraintError(ValueError):
    """No closed-form size formula is known for this constraint set."""


@dataclass(frozen=True)
class SectorConstraint:
    """Linear conserved-quantity constraint sum_pq c_pq * n_pq = target.

    ``coefficients`` has length M*M, row-major over the mode pair (p, q).
    """

    coefficients: tuple[int, ...]
    target: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(int(c) for c in self.coefficients))
        object.__setattr__(self, "target", int(self.target))

    @property
    def modes(self) -> int:
        return len(self.coefficients)

    def evaluate(self, counts: np.ndarray) -> np.ndarray:
        """Left-hand side on one count vector or an array of them."""
        c = np.asarray(self.coefficients, dtype=np.int64)
        return np.asarray(counts, dtype=np.int64) @ c


def zero_occupation(M: int, p: int, q: int) -> SectorConstraint:
    """Constraint pinning the occupation of mode (p, q) to zero."""
    coeff = [0] * (M * M)
    coeff[p * M + q] = 1
    return SectorConstraint(tuple(coeff), 0)


def occupation_balance(M: int, pair_a: tuple[int, int], pair_b: tuple[int, int],
                       target: int = 0) -> SectorConstraint:
    """Constraint n_a - n_b = target between two modes (each a (p, q) pair)."""
    coeff = [0] * (M * M)
    coeff[pair_a[0] * M + pair_a[1]] += 1
    coeff[pair_b[0] * M + pair_b[1]] -= 1
    return SectorConstraint(tuple(coeff), target)


@dataclass(frozen=True)
class OccupationVector:
    """One generalized Fock label {n_pq}; counts sum to the particle number."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError(f"negative occupation in {counts}")
        m2 = len(counts)
        m = math.isqrt(m2)
        if m * m != m2:
            raise ValueError(f"count vector length {m2} is not a perfect square")
        object.__setattr__(self, "counts", counts)

    @property
    def levels(self) -> int:
        return math.isqrt(len(self.counts))

    @property
    def particles(self) -> int:
        return sum(self.counts)

    def occupation(self, p: int, q: int) -> int:
        return self.counts[p * self.levels + q]

    def transposed(self) -> "OccupationVector":
        """Label with every pair (p, q) swapped to (q, p)."""
        m = self.levels
        return OccupationVector(tuple(self.counts[q * m + p]
                                      for p in range(m) for q in range(m)))


def _factorial_log(n: np.ndarray) -> np.ndarray:
    from scipy.special import gammaln

    return gammaln(np.asarray(n, dtype=np.float64) + 1.0)


def trace_weight(vector: OccupationVector) -> float:
    """Trace of the orthonormal basis superket |{n_pq}>>.

    Zero whenever any off-diagonal mode is occupied; otherwise
    sqrt(N! / prod_q n_qq!), the square root of the number of ways to
    distribute the particles over the occupied levels.
    """
    m = vector.levels
    n = vector.particles
    diag = []
    for p in range(m):
        for q in range(m):
            c = vector.counts[p * m + q]
            if p == q:
                diag.append(c)
            elif c > 0:
                return 0.0
    if n <= EXACT_FACTORIAL_LIMIT:
        radicand = math.factorial(n)
        for c in diag:
            radicand //= math.factorial(c)
        return math.sqrt(radicand)
    log_r = float(_factorial_log(np.array(n)) - _factorial_log(np.array(diag)).sum())
    return math.exp(0.5 * log_r)


def _classify_constraints(M: int, N: int, constraints):
    """Split constraints into forced-zero columns, two-mode ties and the rest.

    A tie is a constraint +-(n_a - n_b) = t between two distinct modes; it is
    normalized so the *earlier* column (flat order) determines the later one:
    n_later = n_earlier - t.
    """
    d = M * M
    forced_zero = set()
    ties = []      # (src_col, dst_col, t) with dst determined as n_src - t
    general = []
    for con in constraints:
        if len(con.coefficients) != d:
            raise ValueError(
                f"constraint has {len(con.coefficients)} coefficients, expected {d}")
        coeff = np.asarray(con.coefficients, dtype=np.int64)
        nz = np.nonzero(coeff)[0]
        if len(nz) == 0:
            if con.target != 0:
                return forced_zero, ties, general, True  # empty sector
            continue
        vals = coeff[nz]
        if con.target == 0 and (vals > 0).all() or con.target == 0 and (vals < 0).all():
            forced_zero.update(int(c) for c in nz)
        elif len(nz) == 2 and sorted(vals.tolist()) == [-1, 1]:
            a, b = int(nz[0]), int(nz[1])       # a < b in flat order
            # coeff[a]*n_a + coeff[b]*n_b = t  ->  n_b = (t - coeff[a]*n_a)/coeff[b]
            t = con.target if coeff[b] == -1 else -con.target
            # now n_b = n_a - t
            ties.append((a, b, t))
        else:
            general.append(con)
    return forced_zero, ties, general, False


def _enumeration_bound(N: int, free_cols: int, n_ties: int) -> int:
    """Pessimistic count of labels the enumerator may materialize."""
    f = max(free_cols - n_ties, 1)
    return math.comb(N + f - 1, f - 1) if N > 0 else 1


@dataclass
class BasisSector:
    """Ordered, indexed occupation basis restricted to a constraint sector.

    ``counts`` holds one label per row (lexicographically ascending), shape
    (size, M*M).  The reverse index is served by :meth:`index_of`.  Instances
    are immutable after construction and safe to share across threads.
    """

    levels: int
    particles: int
    constraints: tuple[SectorConstraint, ...]
    counts: np.ndarray

    _free_cols: np.ndarray = field(repr=False, default=None)
    _key_weights: np.ndarray = field(repr=False, default=None)
    _keys: np.ndarray = field(repr=False, default=None)
    _tuple_index: dict = field(repr=False, default=None)
    _transpose_perm: np.ndarray = field(repr=False, default=None)
    _diag_mask: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        M, N = self.levels, self.particles
        d = M * M
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        self.counts = counts
        nonzero_cols = np.flatnonzero(counts.max(axis=0) > 0) if len(counts) else np.arange(d)
        # keep every column that can be occupied; forced-zero ones are omitted
        # from the integer key to keep it within 63 bits
        self._free_cols = nonzero_cols
        base = N + 1
        f = len(self._free_cols)
        if f == 0:
            self._free_cols = np.array([0], dtype=np.int64)
            f = 1
        if f * math.log2(max(base, 2)) < 62:
            w = base ** np.arange(f - 1, -1, -1, dtype=np.int64)
            self._key_weights = w
            self._keys = counts[:, self._free_cols] @ w
        else:
            self._key_weights = None
            self._tuple_index = {tuple(row): k for k, row in enumerate(counts)}

    # -- size / access ----------------------------------------------------

    def __len__(self) -> int:
        return self.counts.shape[0]

    @property
    def modes(self) -> int:
        return self.levels * self.levels

    def vector(self, k: int) -> OccupationVector:
        return OccupationVector(tuple(int(c) for c in self.counts[k]))

    def vectors(self):
        """Iterate labels in basis order (intended for small sectors)."""
        for k in range(len(self)):
            yield self.vector(k)

    # -- reverse index ----------------------------------------------------

    def keys_of(self, counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts, dtype=np.int64)
        return counts[..., self._free_cols] @ self._key_weights

    def index_of(self, counts) -> int | np.ndarray:
        """Position(s) of the given count vector(s); -1 when absent."""
        if isinstance(counts, OccupationVector):
            counts = counts.counts
        arr = np.asarray(counts, dtype=np.int64)
        single = arr.ndim == 1
        rows = arr.reshape(1, -1) if single else arr
        if self._key_weights is None:
            out = np.array([self._tuple_index.get(tuple(r), -1) for r in rows])
        else:
            out = self.lookup_keys(self.keys_of(rows))
            # key space ignores forced-zero columns; reject labels occupying them
            zero_cols = np.setdiff1d(np.arange(self.modes), self._free_cols,
                                     assume_unique=True)
            if len(zero_cols):
                out = np.where(rows[:, zero_cols].any(axis=1), -1, out)
        return int(out[0]) if single else out

    def lookup_keys(self, keys: np.ndarray) -> np.ndarray:
        """Map integer keys to basis positions, -1 for misses."""
        pos = np.searchsorted(self._keys, keys)
        pos_clip = np.minimum(pos, len(self) - 1)
        hit = self._keys[pos_clip] == keys
        return np.where(hit, pos_clip, -1)

    def __contains__(self, vector) -> bool:
        return self.index_of(vector) >= 0

    # -- structure --------------------------------------------------------

    def transpose_permutation(self) -> np.ndarray:
        """Permutation pi with counts[pi[k]] = transpose of counts[k].

        Raises if the sector is not closed under (p, q) -> (q, p).
        """
        if self._transpose_perm is None:
            M = self.levels
            cols = np.arange(M * M).reshape(M, M).T.reshape(-1)
            perm = self.index_of(self.counts[:, cols])
            if (perm < 0).any():
                raise ValueError("sector is not closed under index transposition")
            self._transpose_perm = perm
        return self._transpose_perm

    def diagonal_mask(self) -> np.ndarray:
        """Boolean mask of labels with no off-diagonal mode occupied."""
        if self._diag_mask is None:
            M = self.levels
            off = [p * M + q for p in range(M) for q in range(M) if p != q]
            self._diag_mask = ~self.counts[:, off].any(axis=1) if off else \
                np.ones(len(self), dtype=bool)
            self._diag_mask.setflags(write=False)
        return self._diag_mask

    def diagonal_occupations(self) -> np.ndarray:
        """Array (size, M) of diagonal occupations n_qq."""
        M = self.levels
        return self.counts[:, [q * M + q for q in range(M)]]


def enumerate_basis(M: int, N: int, constraints=(), capacity: int | None = DEFAULT_CAPACITY
                    ) -> BasisSector:
    """Enumerate all occupation labels of N particles in M levels that satisfy
    the constraints, lexicographically ordered on the flattened counts.

    Raises :class:`CapacityError` when the enumeration could exceed
    ``capacity`` labels (pass ``None`` to disable the guard).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if N < 0:
        raise ValueError("N must be >= 0")
    constraints = tuple(constraints)
    d = M * M
    forced_zero, ties, general, empty = _classify_constraints(M, N, constraints)
    if empty:
        return BasisSector(M, N, constraints, np.zeros((0, d), dtype=np.int64))

    tie_of_src = {}
    determined = set()
    for a, b, t in ties:
        if a in forced_zero:
            # source pinned to zero: partner pinned to -t
            if t != 0:
                return BasisSector(M, N, constraints, np.zeros((0, d), dtype=np.int64))
            forced_zero.add(b)
            continue
        if a in tie_of_src or b in determined or b in tie_of_src:
            general.append(_tie_as_constraint(d, a, b, t))
            continue
        tie_of_src[a] = (b, t)
        determined.add(b)

    free_cols = [c for c in range(d) if c not in forced_zero and c not in determined]
    n_ties = len(tie_of_src)
    if capacity is not None:
        bound = _enumeration_bound(N, len(free_cols), n_ties if not general else 0)
        if bound > capacity:
            raise CapacityError(
                f"enumeration bound {bound} exceeds capacity {capacity} "
                f"(M={M}, N={N}, {len(constraints)} constraints)")

    rows = _expand_compositions(d, N, free_cols, forced_zero, tie_of_src)
    for con in general:
        if len(rows) == 0:
            break
        rows = rows[con.evaluate(rows) == con.target]
    return BasisSector(M, N, constraints, rows)


def _tie_as_constraint(d, a, b, t) -> SectorConstraint:
    coeff = [0] * d
    coeff[a], coeff[b] = 1, -1
    return SectorConstraint(tuple(coeff), t)


def _expand_compositions(d, N, free_cols, forced_zero, tie_of_src) -> np.ndarray:
    """Breadth-first vectorized enumeration in flat column order.

    Tie partners are accounted for (budget-wise) at their source column, so
    the running remainder is always the exact budget for later columns.
    """
    if not free_cols:
        row = np.zeros((1, d), dtype=np.int64)
        return row if N == 0 else np.zeros((0, d), dtype=np.int64)

    rows = np.zeros((1, d), dtype=np.int64)
    rem = np.full(1, N, dtype=np.int64)
    last_free = free_cols[-1]
    for c in free_cols:
        tie = tie_of_src.get(c)
        if c == last_free:
            if tie is None:
                vals = rem.copy()
                ok = vals >= 0
            else:
                b, t = tie
                # v + (v - t) = rem  ->  v = (rem + t) / 2
                num = rem + t
                vals = num // 2
                ok = (num % 2 == 0) & (vals >= 0) & (vals - t >= 0)
            rows = rows[ok]
            vals = vals[ok]
            rows[:, c] = vals
            if tie is not None:
                rows[:, tie[0]] = vals - tie[1]
            rem = np.zeros(len(rows), dtype=np.int64)
            continue
        if tie is None:
            lo = np.zeros(len(rows), dtype=np.int64)
            hi = rem
        else:
            b, t = tie
            lo = np.maximum(0, t) * np.ones(len(rows), dtype=np.int64)
            hi = (rem + t) // 2          # v + (v - t) <= rem
        span = hi - lo + 1
        keep = span > 0
        rows, rem, lo, span = rows[keep], rem[keep], lo[keep], span[keep]
        if len(rows) == 0:
            break
        reps = np.repeat(np.arange(len(rows)), span)
        offsets = np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span)
        vals = lo[reps] + offsets
        rows = rows[reps]
        rows[:, c] = vals
        if tie is None:
            rem = rem[reps] - vals
        else:
            b, t = tie
            rows[:, b] = vals - t
            rem = rem[reps] - vals - (vals - t)
    return rows[rem == 0] if len(rows) else rows


def _lambda_sector_signature(M: int, constraints):
    """Recognize 'one tied coherence pair, all other coherences zero' sectors.

    Returns the number of unconstrained diagonal levels, or None if the
    constraint set does not have that shape.
    """
    forced_zero, ties, general, empty = _classify_constraints(M, 0, constraints)
    if empty or general or len(ties) != 1:
        return None
    a, b, t = ties[0]
    if t != 0 or a in forced_zero or b in forced_zero:
        return None
    pa, qa = divmod(a, M)
    pb, qb = divmod(b, M)
    if pa == qa or (pa, qa) != (qb, pb):
        return None
    off_diag = {p * M + q for p in range(M) for q in range(M) if p != q}
    if forced_zero - off_diag:
        return None            # a pinned diagonal level changes the count
    if off_diag - forced_zero != {a, b}:
        return None
    diag_free = M            # all diagonals free
    return diag_free


def sector_size_formula(M: int, N: int, constraints=()) -> int:
    """Closed-form size of the supported sectors.

    Supported: the unconstrained basis, the two-level balanced-coherence
    sector, and the pump/decay cascade sectors with three or four active
    levels and a single tied coherence pair.
    """
    constraints = tuple(constraints)
    if not constraints:
        return math.comb(N + M * M - 1, N)
    diag_free = _lambda_sector_signature(M, constraints)
    if diag_free == 2:
        return (N + 2) ** 2 // 4
    if diag_free == 3:
        return (N + 2) * (N + 4) * (2 * N + 3) // 24
    if diag_free == 4:
        return (N + 2) * (N + 4) * (N * N + 6 * N + 6) // 48
    raise UnsupportedConstraintError(
        f"no closed form for this constraint set (M={M}, {len(constraints)} constraints)")


@lru_cache(maxsize=None)
def _cached_two_level_sector(N: int) -> BasisSector:
    return enumerate_basis(2, N, (occupation_balance(2, (0, 1), (1, 0)),))


def two_level_coherence_sector(N: int) -> BasisSector:
    """Two-level sector with balanced coherences n_01 = n_10 (size (N+2)^2 // 4)."""
    return _cached_two_level_sector(N)
