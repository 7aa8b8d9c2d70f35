"""Time integration of coefficient ODE systems and two-time correlations.

Three explicit steppers are provided:

* ``rk45``  - embedded Dormand-Prince 5(4) pair with PI step-size control
  (default; good up to moderate stiffness, which for collective decay means
  emitter numbers of order one hundred),
* ``rk4``   - classic fixed-step fourth order,
* ``rkc``   - adaptive Runge-Kutta-Chebyshev (second order, damped), whose
  stage count tracks the spectral radius; orders of magnitude cheaper for the
  large, purely dissipative systems where rk45 is stability-limited.

All times are in the scaled units of the assembled operator (1/gamma for the
decay scenarios, 1/g for the cavity model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import blas as _blas

from .observables import KBodySpec, OperatorCoefficients, operator_to_coefficients
from .states import DensityCoefficients
from . import superops

__all__ = [
    "IntegrationError",
    "IntegratorConfig",
    "TwoTimeResult",
    "SpectrumResult",
    "integrate",
    "evolve",
    "evolve_adjoint",
    "two_time_correlation",
    "spectrum",
]


class IntegrationError(RuntimeError):
    """Step-size underflow or budget exhaustion; carries the time reached."""

    def __init__(self, message, time_reached):
        super().__init__(f"{message} (time reached: {time_reached:.6g})")
        self.time_reached = time_reached


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"                  # rk45 | rk4 | rkc
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    fixed_step: float | None = None       # required by rk4
    max_steps: int = 50_000_000
    precision: str = "double"             # "single" halves memory traffic on
    output_grid: tuple = ()               # real systems; for loose-tolerance runs

    def __post_init__(self):
        if self.method not in ("rk45", "rk4", "rkc"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if self.precision not in ("double", "single"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        grid = tuple(float(t) for t in self.output_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("output_grid must be strictly increasing")
        object.__setattr__(self, "output_grid", grid)

    def with_grid(self, grid) -> "IntegratorConfig":
        return replace(self, output_grid=tuple(float(t) for t in grid))


# ---------------------------------------------------------------------------
# core steppers
# ---------------------------------------------------------------------------

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _axpy(out, x, a):
    """out += a * x in a single memory pass (BLAS when the dtype allows)."""
    if out.ndim != 1:
        out += a * x
    elif out.dtype == np.float64:
        _blas.daxpy(x, out, a=a)
    elif out.dtype == np.complex128:
        _blas.zaxpy(x, out, a=a)
    elif out.dtype == np.float32:
        _blas.saxpy(x, out, a=a)
    else:
        out += a * x


def _error_norm(err, y_old, y_new, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))


def _initial_step(f, t0, y0, f0, cfg, span):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((np.abs(y0) / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((np.abs(f0) / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h0, span, cfg.max_step)


def _integrate_rk45(f, t0, y0, t_out, cfg):
    t, y = t0, y0.copy()
    f1 = f(t, y)
    h = _initial_step(f, t, y, f1, cfg, t_out[-1] - t0)
    fac_old = 1e-4
    out = []
    out_iter = iter(t_out)
    next_out = next(out_iter)
    steps = 0
    while True:
        while next_out is not None and next_out <= t + 1e-14 * max(1.0, abs(t)):
            out.append(y.copy())
            next_out = next(out_iter, None)
        if next_out is None:
            return out
        h = min(h, cfg.max_step, next_out - t)
        if h < 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise IntegrationError("step size underflow", t)
        k = [f1]
        for i in range(1, 7):
            yi = y + h * sum(a * ki for a, ki in zip(_DP_A[i], k) if a != 0.0)
            k.append(f(t + _DP_C[i] * h, yi))
        y_new = yi                       # stage-7 argument is the 5th-order solution
        err_vec = h * sum(e * ki for e, ki in zip(_DP_E, k) if e != 0.0)
        err = _error_norm(err_vec, y, y_new, cfg)
        steps += 1
        if steps > cfg.max_steps:
            raise IntegrationError("step budget exhausted", t)
        if err <= 1.0:
            fac = 0.9 * fac_old ** 0.08 / max(err, 1e-10) ** 0.17
            fac_old = max(err, 1e-4)
            t = t + h
            y = y_new
            f1 = k[6]
            h = h * min(10.0, max(0.2, fac))
        else:
            h = h * min(1.0, max(0.2, 0.9 / err ** 0.2))


def _integrate_rk4(f, t0, y0, t_out, cfg):
    if not cfg.fixed_step or cfg.fixed_step <= 0:
        raise ValueError("rk4 requires a positive fixed_step")
    t, y = t0, y0.copy()
    out = []
    out_iter = iter(t_out)
    next_out = next(out_iter)
    steps = 0
    while True:
        while next_out is not None and next_out <= t + 1e-14 * max(1.0, abs(t)):
            out.append(y.copy())
            next_out = next(out_iter, None)
        if next_out is None:
            return out
        h = min(cfg.fixed_step, cfg.max_step, next_out - t)
        k1 = f(t, y)
        k2 = f(t + h / 2, y + (h / 2) * k1)
        k3 = f(t + h / 2, y + (h / 2) * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + h
        steps += 1
        if steps > cfg.max_steps:
            raise IntegrationError("step budget exhausted", t)


def _rkc_coefficients(s: int, eps: float = 2 / 13):
    """Chebyshev recursion data for the damped s-stage RKC2 step."""
    w0 = 1.0 + eps / s ** 2
    T = np.empty(s + 1)
    Tp = np.empty(s + 1)
    Tpp = np.empty(s + 1)
    T[0], T[1] = 1.0, w0
    Tp[0], Tp[1] = 0.0, 1.0
    Tpp[0], Tpp[1] = 0.0, 0.0
    for j in range(2, s + 1):
        T[j] = 2 * w0 * T[j - 1] - T[j - 2]
        Tp[j] = 2 * T[j - 1] + 2 * w0 * Tp[j - 1] - Tp[j - 2]
        Tpp[j] = 4 * Tp[j - 1] + 2 * w0 * Tpp[j - 1] - Tpp[j - 2]
    w1 = Tp[s] / Tpp[s]
    b = np.empty(s + 1)
    b[2:] = Tpp[2:] / Tp[2:] ** 2
    b[0] = b[1] = b[2]
    a = 1.0 - b * T
    c = np.empty(s + 1)
    c[0] = 0.0
    c[2:] = (Tp[s] / Tpp[s]) * (Tpp[2:] / Tp[2:])
    c[1] = c[2] / 4.0
    c[s] = 1.0
    return w0, w1, a, b, c


def _integrate_rkc(f, t0, y0, t_out, cfg, spectral_bound, s_max=512):
    if spectral_bound is None:
        raise ValueError("rkc needs a spectral_bound(t) callback")
    t, y = t0, y0.copy()
    f0 = f(t, y)
    out = []
    out_iter = iter(t_out)
    next_out = next(out_iter)
    h = min(_initial_step(f, t, y, f0, cfg, t_out[-1] - t0), cfg.max_step)
    # second-order error ~ h^3: start conservatively but not absurdly small
    h = max(h, min(cfg.max_step, (t_out[-1] - t0) * 1e-6))
    steps = 0
    err_ok = True
    while True:
        while next_out is not None and next_out <= t + 1e-14 * max(1.0, abs(t)):
            out.append(y.copy())
            next_out = next(out_iter, None)
        if next_out is None:
            return out
        h = min(h, cfg.max_step, next_out - t)
        if h < 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise IntegrationError("step size underflow", t)
        rho = 1.05 * max(spectral_bound(t), spectral_bound(t + h / 2),
                         spectral_bound(t + h), 1e-12)
        s = max(2, int(math.ceil(math.sqrt(h * rho / 0.653))) + 1)
        if s > s_max:
            h = 0.653 * s_max ** 2 / rho
            s = s_max
        w0, w1, a, b, c = _rkc_coefficients(s)
        # the stage recursion is the hot loop for million-label sectors: keep
        # it allocation-light with in-place updates
        yjm2 = y
        yjm1 = y + (h * b[1] * w1) * f0
        scratch = np.empty_like(y)
        for j in range(2, s + 1):
            mu = 2 * b[j] * w0 / b[j - 1]
            nu = -b[j] / b[j - 2]
            mut = 2 * b[j] * w1 / b[j - 1]
            gt = -a[j - 1] * mut
            fj = f(t + c[j - 1] * h, yjm1)
            np.multiply(yjm1, mu, out=scratch)
            _axpy(scratch, y, 1.0 - mu - nu)
            _axpy(scratch, yjm2, nu)
            _axpy(scratch, fj, h * mut)
            _axpy(scratch, f0, h * gt)
            if j == 2:
                yjm2 = np.empty_like(y)
            yjm1, yjm2, scratch = scratch, yjm1, yjm2
        y_new = yjm1
        f_new = f(t + h, y_new)
        err_vec = 0.8 * (y - y_new) + 0.4 * h * (f0 + f_new)
        err = _error_norm(err_vec, y, y_new, cfg)
        steps += 1
        if steps > cfg.max_steps:
            raise IntegrationError("step budget exhausted", t)
        if err <= 1.0:
            t = t + h
            y, f0 = y_new, f_new
            h = h * min(10.0, max(0.1, 0.8 * max(err, 1e-10) ** (-1 / 3)))
        else:
            h = h * min(1.0, max(0.1, 0.8 * err ** (-1 / 3)))


def integrate(f, t0, y0, t_out, cfg: IntegratorConfig, spectral_bound=None):
    """Integrate dy/dt = f(t, y) from t0, returning snapshots at t_out."""
    t_out = [float(t) for t in t_out]
    if any(t < t0 - 1e-12 for t in t_out):
        raise ValueError("output times precede the initial time")
    if not t_out:
        return []
    if cfg.method == "rk45":
        return _integrate_rk45(f, t0, y0, t_out, cfg)
    if cfg.method == "rk4":
        return _integrate_rk4(f, t0, y0, t_out, cfg)
    return _integrate_rkc(f, t0, y0, t_out, cfg, spectral_bound)


# ---------------------------------------------------------------------------
# operator-driven right-hand sides
# ---------------------------------------------------------------------------

class _OperatorRHS:
    """RHS wrapper around a LiouvillianOperator.

    When every matrix part and the initial vector are real (as in the purely
    dissipative scenarios), the hot loop runs in float64 — or float32 when the
    config asks for single precision — and casts back at the end.
    """

    def __init__(self, liouvillian, y0: np.ndarray, precision: str = "double"):
        mats = [liouvillian.constant_part] + [m for _, _, m in liouvillian.envelope_parts]
        real_ok = all(abs(m.data.imag).max(initial=0.0) < 1e-300 for m in mats)
        real_ok = real_ok and abs(y0.imag).max(initial=0.0) < 1e-300
        self.real = real_ok
        self.liouvillian = liouvillian
        if real_ok:
            dtype = np.float32 if precision == "single" else np.float64
            self._const = liouvillian.constant_part.real.astype(dtype).tocsr()
            self._parts = [(func, m.real.astype(dtype).tocsr())
                           for _, func, m in liouvillian.envelope_parts]
            self.y0 = np.ascontiguousarray(y0.real.astype(dtype))
        else:
            self._const = liouvillian.constant_part
            self._parts = [(func, m) for _, func, m in liouvillian.envelope_parts]
            self.y0 = y0.astype(complex)

    def __call__(self, t, y):
        out = self._const @ y
        for func, mat in self._parts:
            out += func(t) * (mat @ y)
        return out

    def spectral_bound(self, t):
        return self.liouvillian.spectral_bound(t)

    def finalize(self, y):
        return y.astype(complex)


def evolve(liouvillian, rho0: DensityCoefficients, cfg: IntegratorConfig
           ) -> list[DensityCoefficients]:
    """Propagate density coefficients, returning snapshots at cfg.output_grid."""
    if len(rho0.sector) != liouvillian.dim:
        raise ValueError("initial state does not match the operator sector")
    if not cfg.output_grid:
        raise ValueError("output_grid is empty")
    rhs = _OperatorRHS(liouvillian, rho0.values, cfg.precision)
    snaps = integrate(rhs, rho0.time, rhs.y0, cfg.output_grid, cfg,
                      spectral_bound=rhs.spectral_bound)
    return [DensityCoefficients(liouvillian.sector, rhs.finalize(y), t)
            for t, y in zip(cfg.output_grid, snaps)]


def evolve_adjoint(liouvillian, op0: OperatorCoefficients, cfg: IntegratorConfig
                   ) -> list[OperatorCoefficients]:
    """Propagate an operator supervector under the adjoint generator.

    The adjoint is defined by conservation of the transposed trace pairing
    P(O, rho) = sum_n O({n_ij}) rho({n_ji}) against the forward evolution.
    Delay times in cfg.output_grid start from 0.
    """
    dual = superops.adjoint(liouvillian)
    rhs = _OperatorRHS(dual, op0.values, cfg.precision)
    snaps = integrate(rhs, 0.0, rhs.y0, cfg.output_grid, cfg,
                      spectral_bound=rhs.spectral_bound)
    return [OperatorCoefficients(liouvillian.sector, rhs.finalize(y)) for y in snaps]


# ---------------------------------------------------------------------------
# two-time correlations and spectra
# ---------------------------------------------------------------------------

@dataclass
class TwoTimeResult:
    """X(t, tau) on a rectangular grid; rows follow t_grid, columns tau_grid."""

    t_grid: np.ndarray
    tau_grid: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.X = np.asarray(self.X, dtype=complex)
        if self.X.shape != (len(self.t_grid), len(self.tau_grid)):
            raise ValueError("correlation matrix does not match the grids")


def two_time_correlation(liouvillian, rho0: DensityCoefficients, a_spec: KBodySpec,
                         b_monomials, t_grid, tau_grid, cfg: IntegratorConfig
                         ) -> TwoTimeResult:
    """X(t, tau) = <A^dag(t + tau) B(t)> by the regression recipe.

    B is applied to the state at t; the A side enters through its hermitian
    conjugate supervector propagated in the delay variable.  For a
    time-independent generator the delay propagation is done once and paired
    against every t column.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if len(t_grid) == 0 or len(tau_grid) == 0:
        raise ValueError("correlation grids must be non-empty")
    sector = liouvillian.sector
    b_op = superops.assemble(b_monomials, sector)
    states = evolve(liouvillian, rho0, cfg.with_grid(t_grid))
    phi = np.stack([b_op.matvec(s.values) for s in states])
    perm = sector.transpose_permutation()
    a_dag = operator_to_coefficients(a_spec.dagger(), sector)

    if liouvillian.is_constant():
        a_traj = evolve_adjoint(liouvillian, a_dag, cfg.with_grid(tau_grid))
        a_mat = np.stack([o.values for o in a_traj])
        X = phi[:, perm] @ a_mat.T
    else:
        # time-dependent generator: the delay propagator depends on t, so each
        # t column is propagated forward and paired with the static A side
        X = np.empty((len(t_grid), len(tau_grid)), dtype=complex)
        for j, (t, row) in enumerate(zip(t_grid, phi)):
            rhs = _OperatorRHS(liouvillian, row, cfg.precision)
            snaps = integrate(rhs, t, rhs.y0.copy(), t + tau_grid, cfg,
                              spectral_bound=rhs.spectral_bound)
            for k, y in enumerate(snaps):
                X[j, k] = a_dag.values @ rhs.finalize(y)[perm]
    return TwoTimeResult(t_grid, tau_grid, X)


@dataclass
class SpectrumResult:
    omega: np.ndarray
    values: np.ndarray
    normalized: np.ndarray


def _uniform_spacing(grid, name):
    if len(grid) < 2:
        raise ValueError(f"{name} grid needs at least two points")
    d = np.diff(grid)
    if not np.allclose(d, d[0], rtol=1e-8, atol=1e-12):
        raise ValueError(f"{name} grid is not uniform")
    return float(d[0])


def spectrum(result: TwoTimeResult, omega_grid) -> SpectrumResult:
    """Emission spectrum S(w) = Re sum_t sum_tau w_t w_tau X(t,tau) e^{-i w tau}.

    Trapezoidal weights on both (uniform) grids; the overall scale is left
    unnormalized, with a max-normalized copy alongside.
    """
    omega = np.asarray(omega_grid, dtype=float)
    dt = _uniform_spacing(result.t_grid, "t")
    dtau = _uniform_spacing(result.tau_grid, "tau")
    w_t = np.full(len(result.t_grid), dt)
    w_t[0] = w_t[-1] = dt / 2
    w_tau = np.full(len(result.tau_grid), dtau)
    w_tau[0] = w_tau[-1] = dtau / 2
    y = w_t @ result.X                      # integrate out t
    phases = np.exp(-1j * np.outer(omega, result.tau_grid))
    values = (phases @ (w_tau * y)).real
    peak = np.abs(values).max(initial=0.0)
    normalized = values / peak if peak > 0 else np.zeros_like(values)
    return SpectrumResult(omega, values, normalized)
