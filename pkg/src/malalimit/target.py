"""Change-of-measure functionals Psi and the induced target log-density.

The target on the N-mode subspace has density proportional to
``exp(-Psi(x))`` with respect to ``N(0, C_N)``. Gradients are returned as
coefficient vectors in the dual space ``H^{-s}``; multiplying by
``lambda_j**2`` maps them back to ``H^s``.

All functions accept a single state of shape ``(N,)`` or a batch of shape
``(..., N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import CovarianceModel, ParameterError, sobolev_norm_sq

ZERO = "zero"
SQRT_SOBOLEV = "sqrt_sobolev"
CUSTOM = "custom"

KINDS = (ZERO, SQRT_SOBOLEV, CUSTOM)


@dataclass(frozen=True)
class TargetModel:
    kind: str
    s: float = 0.0
    value_fn: Callable | None = None
    grad_fn: Callable | None = None
    # sup of ||grad Psi||_{-s}; 1 for the built-in square-root functional
    grad_bound: float = 0.0

    @property
    def code(self) -> int:
        """Integer tag understood by the compiled kernels (-1: Python only)."""
        return {ZERO: 0, SQRT_SOBOLEV: 1}.get(self.kind, -1)

    def describe(self) -> dict:
        return {"kind": self.kind, "s": self.s}


def zero_target() -> TargetModel:
    return TargetModel(ZERO)


def sqrt_sobolev_target(s: float) -> TargetModel:
    """``Psi(x) = sqrt(1 + ||x||_s^2)``, bounded and globally Lipschitz gradient."""
    if s < 0:
        raise ParameterError("s", f"Sobolev index must be nonnegative, got {s}")
    return TargetModel(SQRT_SOBOLEV, float(s), grad_bound=1.0)


def custom_target(
    value_fn: Callable,
    grad_fn: Callable,
    s: float,
    grad_bound: float = np.inf,
    check_cov: CovarianceModel | None = None,
    tol: float = 1e-5,
) -> TargetModel:
    """Wrap a user (value, gradient) pair; refuses it unless the gradient check passes.

    ``value_fn(x)`` and ``grad_fn(x)`` receive a single 1-d coefficient vector.
    The gradient must be expressed in the dual ``H^{-s}`` coordinates, i.e. as
    plain partial derivatives ``dPsi/dx_j``.
    """
    model = TargetModel(CUSTOM, float(s), value_fn, grad_fn, float(grad_bound))
    if check_cov is not None:
        report = check_assumptions(model, check_cov, trials=20, tol=tol)
        if not report.passed:
            raise ParameterError(
                "target",
                f"gradient disagrees with finite differences (max error "
                f"{report.max_fd_error:.3g} > {tol:g})",
            )
    return model


def make_target(kind: str, cov: CovarianceModel) -> TargetModel:
    """Built-in model by name; SqrtSobolev inherits the Sobolev index of ``cov``."""
    if kind == ZERO:
        return zero_target()
    if kind == SQRT_SOBOLEV:
        return sqrt_sobolev_target(cov.s)
    raise ParameterError("target", f"unknown built-in model {kind!r}; choose from {ZERO!r}, {SQRT_SOBOLEV!r}")


def _weights(s: float, n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=float) ** (2.0 * s)


def _apply(fn, x):
    if x.ndim == 1:
        return fn(x)
    flat = x.reshape(-1, x.shape[-1])
    out = np.array([fn(row) for row in flat])
    return out.reshape(x.shape[:-1] + np.shape(out)[1:])


def psi_eval(model: TargetModel, x):
    x = np.asarray(x, dtype=float)
    if model.kind == ZERO:
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[:-1])
    if model.kind == SQRT_SOBOLEV:
        val = np.sqrt(1.0 + (x * x) @ _weights(model.s, x.shape[-1]))
        return float(val) if x.ndim == 1 else val
    return _apply(lambda r: float(model.value_fn(r)), x)


def grad_psi(model: TargetModel, x):
    """Coefficients of ``grad Psi(x)`` in ``H^{-s}``."""
    x = np.asarray(x, dtype=float)
    if model.kind == ZERO:
        return np.zeros_like(x)
    if model.kind == SQRT_SOBOLEV:
        w = _weights(model.s, x.shape[-1])
        psi = np.sqrt(1.0 + (x * x) @ w)
        return w * x / np.expand_dims(psi, -1)
    return _apply(lambda r: np.asarray(model.grad_fn(r), dtype=float), x)


def c_grad_psi(model: TargetModel, x, cov: CovarianceModel):
    """Preconditioned gradient ``C_N grad Psi^N(x)``, coefficient ``lambda_j**2 * grad_j``."""
    return cov.lambda_sq * grad_psi(model, x)


def log_target_unnorm(model: TargetModel, x, cov: CovarianceModel):
    """``-Psi(x) - ||x||_C^2 / 2``: log-density of the target up to an additive constant."""
    x = np.asarray(x, dtype=float)
    return -psi_eval(model, x) - 0.5 * ((x * x) @ cov.inv_lambda_sq)


@dataclass(frozen=True)
class AssumptionReport:
    max_fd_error: float
    lipschitz_ratio: float
    grad_bound: float
    psi_lipschitz_ratio: float
    trials: int
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_fd_error <= self.tol)


def _random_states(cov: CovarianceModel, rng, n: int) -> np.ndarray:
    # mix of scales so the check sees both the quadratic core and the linear tail of Psi
    scale = 10.0 ** rng.uniform(-1.0, 1.5, size=(n, 1))
    return scale * cov.lambdas * rng.standard_normal((n, cov.N))


def fd_gradient(model: TargetModel, x, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of ``psi_eval``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (psi_eval(model, x + e) - psi_eval(model, x - e)) / (2.0 * h)
    return out


def check_assumptions(
    model: TargetModel,
    cov: CovarianceModel,
    trials: int = 100,
    tol: float = 1e-5,
    pairs: int | None = None,
    h: float = 1e-6,
    rng: np.random.Generator | None = None,
) -> AssumptionReport:
    """Empirical gradient consistency, Lipschitz and boundedness statistics.

    Failures are reported through :attr:`AssumptionReport.passed`, never raised.
    """
    if trials < 1:
        raise ParameterError("trials", f"must be at least 1, got {trials}")
    rng = np.random.default_rng(20240521) if rng is None else rng
    pairs = trials if pairs is None else pairs
    s = model.s if model.kind != ZERO else cov.s
    dual_w = _weights(-s, cov.N)
    primal_w = _weights(s, cov.N)

    xs = _random_states(cov, rng, trials)
    fd_err = 0.0
    gbound = 0.0
    for x in xs:
        g = grad_psi(model, x)
        fd_err = max(fd_err, float(np.max(np.abs(fd_gradient(model, x, h) - g))))
        gbound = max(gbound, float(np.sqrt(g * g @ dual_w)))

    xa = _random_states(cov, rng, pairs)
    xb = xa + _random_states(cov, rng, pairs) * rng.uniform(0.01, 1.0, size=(pairs, 1))
    dx = np.sqrt(((xa - xb) ** 2) @ primal_w)
    dg = grad_psi(model, xa) - grad_psi(model, xb)
    dg_norm = np.sqrt((dg * dg) @ dual_w)
    dpsi = np.abs(np.asarray(psi_eval(model, xa)) - np.asarray(psi_eval(model, xb)))
    ok = dx > 0
    lip = float(np.max(dg_norm[ok] / dx[ok])) if ok.any() else 0.0
    psi_lip = float(np.max(dpsi[ok] / dx[ok])) if ok.any() else 0.0
    return AssumptionReport(fd_err, lip, gbound, psi_lip, trials, tol)


__all__ = [
    "TargetModel",
    "AssumptionReport",
    "zero_target",
    "sqrt_sobolev_target",
    "custom_target",
    "make_target",
    "psi_eval",
    "grad_psi",
    "c_grad_psi",
    "log_target_unnorm",
    "check_assumptions",
    "fd_gradient",
    "sobolev_norm_sq",
]
