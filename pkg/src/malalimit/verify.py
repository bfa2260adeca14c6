"""Invariant suites run by ``malalimit verify``.

Each suite returns a list of :class:`Check`; a suite passes when all of its
checks do.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .limits import LimitParams, solve_s_ode
from .mala import MalaConfig, log_accept_decomposed, log_accept_direct, make_rng, propose, run_steps
from .spectral import make_covariance, sample_scaled_noise, sobolev_norm_sq
from .target import c_grad_psi, check_assumptions, sqrt_sobolev_target, zero_target

VERIFY_STREAM = 99


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.suite}: {self.name}  ({self.detail})"


def q_identity(seed: int = 0, pairs: int = 100, dims=(1, 2, 4, 16, 64, 256)) -> list:
    """Density route and three-term decomposition of ``Q`` agree to ``1e-10 (1 + |Q|)``."""
    out = []
    for kind in ("zero", "sqrt_sobolev"):
        for N in dims:
            cov = make_covariance(1.0, 0.25, N)
            model = zero_target() if kind == "zero" else sqrt_sobolev_target(cov.s)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cfg = MalaConfig(1.0, 0.5, N, seed)
            rng = make_rng(seed, VERIFY_STREAM, 1, N)
            worst = 0.0
            for _ in range(pairs):
                # states spread over S in roughly [0, 4]
                x = rng.uniform(0.0, 2.0) * sample_scaled_noise(cov, rng)
                y, _ = propose(x, model, cov, cfg, rng)
                qd = log_accept_direct(x, y, model, cov, cfg)
                qs = log_accept_decomposed(x, y, model, cov, cfg).Q
                worst = max(worst, abs(qd - qs) / (1.0 + abs(qd)))
            out.append(Check("q-identity", f"{kind} N={N}", worst <= 1e-10, f"max rel gap {worst:.2e}"))
    return out


def gradients(seed: int = 0, trials: int = 100, tol: float = 1e-5, dims=(2, 8, 32)) -> list:
    """Finite-difference gradients, Lipschitz ratios and an N-uniform bound on ``||C grad Psi||_s``."""
    out = []
    bounds = []
    for N in dims:
        cov = make_covariance(1.0, 0.25, N)
        model = sqrt_sobolev_target(cov.s)
        rep = check_assumptions(model, cov, trials=trials, tol=tol, rng=make_rng(seed, VERIFY_STREAM, 2, N))
        out.append(Check("gradients", f"sqrt_sobolev N={N}", rep.passed,
                         f"fd err {rep.max_fd_error:.1e}, lipschitz ratio {rep.lipschitz_ratio:.3f}"))
        rng = make_rng(seed, VERIFY_STREAM, 3, N)
        X = rng.uniform(0.0, 3.0, (trials, 1)) * sample_scaled_noise(cov, rng, trials)
        cg = c_grad_psi(model, X, cov)
        bounds.append(max(math.sqrt(sobolev_norm_sq(v, cov.s)) for v in cg))
    # with lambda_j j^s <= 1 the norm can never exceed 1
    out.append(Check("gradients", "||C grad Psi||_s bounded across N", max(bounds) <= 1.0,
                     "max " + ", ".join(f"{b:.3f}" for b in bounds)))
    return out


def ode_bounds(starts=(0.0, 0.25, 1.0, 2.0, 5.0), ells=(0.5, 1.0, 2.0), h: float = 1e-3) -> list:
    """Confinement between ``S0`` and 1, monotonicity, equilibrium by ``t = 50`` and RK4 order."""
    out = []
    for ell in ells:
        for S0 in starts:
            sol = solve_s_ode(S0, LimitParams(ell), 50.0, h)
            d = np.diff(sol.S) * np.sign(1.0 - S0)
            mono = bool(np.all(d >= -1e-15))
            end = abs(sol.S[-1] - 1.0)
            ok = sol.check_bounds(1e-8) and mono and end < 1e-3
            out.append(Check("ode", f"S0={S0:g} ell={ell:g}", ok, f"|S(50)-1|={end:.1e}, monotone={mono}"))
    orders = []
    for S0 in (0.0, 0.5, 2.0, 5.0):
        # coarse steps keep the error well above rounding
        e = [solve_s_ode(S0, 1.0, 2.0, hh).S[-1] for hh in (0.2, 0.1, 0.05)]
        orders.append(math.log2(abs(e[0] - e[1]) / abs(e[1] - e[2])))
    out.append(Check("ode", "RK4 self-convergence order", min(orders) >= 3.5,
                     "orders " + ", ".join(f"{o:.2f}" for o in orders)))
    return out


def batch_means(v, batches: int = 1000):
    """Mean and batch-means standard error of a correlated series."""
    v = np.asarray(v, dtype=float)
    m = v[: v.size - v.size % batches].reshape(batches, -1).mean(axis=1)
    return float(m.mean()), float(m.std(ddof=1) / math.sqrt(batches))


def stationary_moments(seed: int = 0, burn: int = 10**4, steps: int = 10**6, backend=None) -> list:
    """Psi = 0, N = 1: the chain must leave N(0, 1) invariant."""
    cov = make_covariance(1.0, 0.25, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cfg = MalaConfig(1.0, 0.5, 1, seed)
    traj = run_steps(np.zeros(1), zero_target(), cov, cfg, burn + steps,
                     rng=make_rng(seed, VERIFY_STREAM, 4), snapshot_steps=(), backend=backend, trace=True)
    x = traj.states[burn + 1:, 0]
    m1, e1 = batch_means(x)
    m2, e2 = batch_means(x * x - 1.0)
    return [
        Check("moments", "E x = 0", abs(m1) < 4 * e1, f"{m1:+.4f} vs 4*se {4 * e1:.4f}"),
        Check("moments", "E x^2 = 1", abs(m2) < 4 * e2, f"{m2:+.4f} vs 4*se {4 * e2:.4f}"),
    ]


SUITES = {
    "q-identity": q_identity,
    "gradients": gradients,
    "ode": ode_bounds,
    "moments": stationary_moments,
}


def run_all(seed: int = 0) -> list:
    out = []
    for name, fn in SUITES.items():
        out.extend(fn() if name == "ode" else fn(seed=seed))
    return out
