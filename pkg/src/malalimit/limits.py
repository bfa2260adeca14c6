"""Limit dynamics of the chain: the fluid ODE for S and the diffusion for x.

``alpha_l(s) = min(1, exp(l^2 (s - 1) / 2))`` is the limiting acceptance
probability, ``h_l = l * alpha_l`` the speed and ``b_l(s) = 2 (1 - s) h_l(s)``
the drift of ``dS = b_l(S) dt``. The state diffusion is

    dx = h_l(S(t)) F(x) dt + sqrt(2 h_l(S(t))) dW,    F(x) = -x - C grad Psi(x)

with ``W`` a C-Brownian motion and ``S`` the (independently solved) ODE path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import _backend
from .spectral import CovarianceModel, ParameterError, check_field, s_statistic, tail_trace
from .target import TargetModel, c_grad_psi


@dataclass(frozen=True)
class LimitParams:
    ell: float = 1.0

    def __post_init__(self):
        if not self.ell > 0:
            raise ParameterError("ell", f"must be positive, got {self.ell}")


def _ell(p) -> float:
    return p.ell if isinstance(p, LimitParams) else float(p)


def alpha_l(s, p):
    ell = _ell(p)
    s = np.asarray(s, dtype=float)
    out = np.exp(np.minimum(0.0, 0.5 * ell * ell * (s - 1.0)))
    return float(out) if out.ndim == 0 else out


def h_l(s, p):
    out = _ell(p) * np.asarray(alpha_l(s, p))
    return float(out) if out.ndim == 0 else out


def b_l(s, p):
    s_arr = np.asarray(s, dtype=float)
    out = 2.0 * (1.0 - s_arr) * np.asarray(h_l(s_arr, p))
    return float(out) if out.ndim == 0 else out


def lipschitz_constants(p) -> dict:
    """Analytic Lipschitz bounds of ``alpha_l``, ``h_l`` and ``sqrt(h_l)`` on the real line.

    The exponential branch lives on ``s < 1`` where its slope is maximal at
    ``s = 1``.
    """
    ell = _ell(p)
    return {
        "alpha": 0.5 * ell**2,
        "h": 0.5 * ell**3,
        "sqrt_h": 0.25 * ell**2.5,
    }


@dataclass
class OdeSolution:
    t: np.ndarray
    S: np.ndarray
    ell: float
    h: float
    method: str = "rk4"

    def __call__(self, t):
        """Dense output: cubic Hermite interpolation with ``b_l(S)`` as the slope."""
        spline = getattr(self, "_spline", None)
        if spline is None:
            if len(self.t) == 1:
                return np.full(np.shape(t), self.S[0]) if np.ndim(t) else float(self.S[0])
            spline = CubicHermiteSpline(self.t, self.S, b_l(self.S, self.ell))
            self._spline = spline
        out = spline(t)
        return float(out) if np.ndim(t) == 0 else out

    @property
    def S0(self) -> float:
        return float(self.S[0])

    def check_bounds(self, tol: float = 1e-8) -> bool:
        lo = min(self.S0, 1.0) - tol
        hi = max(self.S0, 1.0) + tol
        return bool(np.all(self.S >= lo) and np.all(self.S <= hi) and np.all(self.S >= 0))


def solve_s_ode(S0: float, p, T: float, h: float = 1e-3) -> OdeSolution:
    """Classical RK4 for ``dS/dt = b_l(S)`` on a uniform grid covering ``[0, T]``.

    The step is shrunk to ``T / ceil(T / h)`` so the grid ends exactly at ``T``.
    """
    if S0 < 0:
        raise ParameterError("S0", f"must be nonnegative, got {S0}")
    if not h > 0:
        raise ParameterError("h", f"step must be positive, got {h}")
    if not T >= 0:
        raise ParameterError("T", f"horizon must be nonnegative, got {T}")
    ell = _ell(p)
    n = max(1, int(math.ceil(T / h - 1e-12))) if T > 0 else 0
    step = T / n if n else h
    S = np.empty(n + 1)
    S[0] = S0
    c = 0.5 * ell * ell

    def f(v):
        return 2.0 * ell * (1.0 - v) * (math.exp(c * (v - 1.0)) if v < 1.0 else 1.0)

    s = float(S0)
    for i in range(n):
        k1 = f(s)
        k2 = f(s + 0.5 * step * k1)
        k3 = f(s + 0.5 * step * k2)
        k4 = f(s + step * k3)
        s = s + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        S[i + 1] = s
    return OdeSolution(np.linspace(0.0, T, n + 1), S, ell, step)


def drift_F(x, model: TargetModel, cov: CovarianceModel):
    """``F(x) = -x - C grad Psi(x)``."""
    x = np.asarray(x, dtype=float)
    return -x - c_grad_psi(model, x, cov)


def limit_drift_theta(x, S: float, model: TargetModel, cov: CovarianceModel, p):
    return h_l(S, p) * drift_F(x, model, cov)


@dataclass
class SdePath:
    t: np.ndarray
    x: np.ndarray  # (records, M)
    S_ode: np.ndarray  # ODE value driving the coefficient at each record
    dt: float
    M: int
    discarded_trace: float
    meta: dict = field(default_factory=dict)

    def s_values(self, cov: CovarianceModel) -> np.ndarray:
        """Empirical ``||x||_C^2 / M`` along the stored records."""
        return (self.x * self.x) @ cov.inv_lambda_sq / self.M


def _record_steps(n: int, records) -> np.ndarray:
    if records is None:
        return np.arange(n + 1)
    if np.ndim(records) == 0:
        return np.unique(np.linspace(0, n, max(int(records), 2)).round().astype(int))
    return np.unique(np.asarray(records, dtype=int))


def _weights_for(model: TargetModel, cov: CovarianceModel) -> np.ndarray:
    if model.kind == "sqrt_sobolev" and model.s != cov.s:
        return np.arange(1, cov.N + 1, dtype=float) ** (2.0 * model.s)
    return np.ascontiguousarray(cov.sobolev_weights)


SDE_CHUNK_ELEMS = 1 << 20


def _em(x, h_seq, model, cov, dt, rng, record_at, backend, xi_fn=None):
    n = len(h_seq)
    rec = {0: x.copy()} if 0 in record_at else {}
    w = _weights_for(model, cov)
    if model.code < 0:
        kern = None
    else:
        kern = _backend.get_kernels(backend)
    chunk = max(1, SDE_CHUNK_ELEMS // cov.N)
    cuts = sorted(k for k in record_at if 0 < k <= n)
    done = 0
    while done < n:
        c = min(chunk, n - done)
        xi = rng.standard_normal((c, cov.N)) if xi_fn is None else xi_fn(c)
        start = 0
        bounds = [k - done for k in cuts if done < k < done + c] + [c]
        for stop in bounds:
            if kern is not None:
                kern.advance_sde(x, cov.lambdas, cov.lambda_sq, w, model.code, dt,
                                 np.ascontiguousarray(h_seq[done + start:done + stop]), xi[start:stop])
            else:
                for i in range(start, stop):
                    hk = h_seq[done + i]
                    x += dt * hk * drift_F(x, model, cov) + math.sqrt(2.0 * hk * dt) * cov.lambdas * xi[i]
            if done + stop in record_at:
                rec[done + stop] = x.copy()
            start = stop
        done += c
    return rec


def simulate_limit_sde(
    x0,
    S0: float,
    model: TargetModel,
    cov: CovarianceModel,
    p,
    T: float,
    dt: float = 1e-3,
    rng: np.random.Generator | None = None,
    ode: OdeSolution | None = None,
    records=129,
    backend: str | None = None,
    zero_noise: bool = False,
) -> SdePath:
    """Euler-Maruyama for the limit diffusion truncated to ``M = cov.N`` modes.

    The speed ``h_l(S(t_n))`` is read off an RK4 solution of the S-equation on
    the same grid (solved here unless ``ode`` is supplied). ``records`` is a
    count of evenly spaced stored steps, an explicit list of step indices,
    or ``None`` for every step.
    """
    if not dt > 0:
        raise ParameterError("dt", f"must be positive, got {dt}")
    x = check_field(x0, cov).astype(float, copy=True)
    rng = np.random.default_rng() if rng is None else rng
    n = max(0, int(math.ceil(T / dt - 1e-12)))
    step = T / n if n else dt
    grid = np.arange(n + 1) * step
    if ode is None:
        ode = solve_s_ode(S0, p, T, step)
    S_grid = np.asarray(ode(grid)) if n else np.array([S0])
    h_seq = np.asarray(h_l(S_grid[:-1], p)) if n else np.empty(0)
    record_at = set(_record_steps(n, records).tolist())
    xi_fn = (lambda c: np.zeros((c, cov.N))) if zero_noise else None
    rec = _em(x, np.atleast_1d(h_seq), model, cov, step, rng, record_at, backend, xi_fn)
    ks = sorted(rec)
    return SdePath(
        t=grid[ks],
        x=np.array([rec[k] for k in ks]),
        S_ode=S_grid[ks],
        dt=step,
        M=cov.N,
        discarded_trace=tail_trace(cov.kappa, cov.s, cov.N),
        meta={"ell": _ell(p), "S0": S0, "model": model.describe(), "scheme": "euler-maruyama"},
    )


def simulate_ergodic_sde(
    x0,
    model: TargetModel,
    cov: CovarianceModel,
    p,
    T: float,
    dt: float = 1e-3,
    rng: np.random.Generator | None = None,
    records=129,
    backend: str | None = None,
    zero_noise: bool = False,
) -> SdePath:
    """Long-time limit: same scheme with the speed frozen at ``h_l(1) = l``."""
    n = max(0, int(math.ceil(T / dt - 1e-12)))
    step = T / n if n else dt
    const = OdeSolution(np.arange(n + 1) * step, np.ones(n + 1), _ell(p), step, method="constant")
    path = simulate_limit_sde(x0, 1.0, model, cov, p, T, dt, rng, const, records, backend, zero_noise)
    path.meta["scheme"] = "euler-maruyama, constant speed"
    return path


def path_s_statistic(path: SdePath, cov: CovarianceModel) -> np.ndarray:
    return np.array([s_statistic(v, cov) for v in path.x])
