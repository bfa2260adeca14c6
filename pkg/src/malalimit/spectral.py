"""Karhunen-Loeve coordinates for a diagonal Gaussian reference measure.

A point of the N-dimensional subspace is stored as its coefficient vector
``x_j = <x, phi_j>`` in the covariance eigenbasis, a plain float64 array.
The covariance acts as ``C phi_j = lambda_j**2 phi_j`` with
``lambda_j = j**(-kappa)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Raised when a model parameter lies outside its admissible range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Eigenstructure of the truncated covariance ``C_N``.

    Use :func:`make_covariance` rather than constructing directly.
    """

    kappa: float
    s: float
    N: int
    lambdas: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.lambdas.setflags(write=False)
        object.__setattr__(self, "lambda_sq", self.lambdas**2)
        object.__setattr__(self, "inv_lambda_sq", 1.0 / self.lambda_sq)
        j = np.arange(1, self.N + 1, dtype=float)
        object.__setattr__(self, "sobolev_weights", j ** (2.0 * self.s))
        for name in ("lambda_sq", "inv_lambda_sq", "sobolev_weights"):
            getattr(self, name).setflags(write=False)

    @property
    def dim(self) -> int:
        return self.N

    def with_dimension(self, N: int) -> "CovarianceModel":
        return make_covariance(self.kappa, self.s, N)


def _validate(kappa: float, s: float, N: int) -> None:
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ParameterError("N", f"dimension must be a positive integer, got {N!r}")
    if not np.isfinite(kappa) or kappa <= 0.5:
        raise ParameterError(
            "kappa",
            f"eigenvalues not trace class: kappa must exceed 1/2 "
            f"(trace-class covariance requirement), got {kappa}",
        )
    if not np.isfinite(s) or s < 0 or s >= kappa - 0.5:
        raise ParameterError(
            "s",
            f"Sobolev index outside admissible range: need 0 <= s < kappa - 1/2 = "
            f"{kappa - 0.5:g} so that C_s is trace class on H^s, got {s}",
        )


def make_covariance(kappa: float = 1.0, s: float = 0.25, N: int = 64) -> CovarianceModel:
    """Build ``C_N`` with eigenvalue square roots ``lambda_j = j**(-kappa)``."""
    _validate(kappa, s, N)
    j = np.arange(1, N + 1, dtype=float)
    return CovarianceModel(float(kappa), float(s), int(N), j ** (-float(kappa)))


def covariance_from_lambdas(lambdas, kappa: float, s: float) -> CovarianceModel:
    """Custom eigenvalue sequence, re-validated against the decay exponent.

    ``lambdas`` must be positive and satisfy ``lambda_j * j**s <= const`` with
    a summable ``sum_j lambda_j**2 j**(2s)``; this is checked through the
    comparison ``lambda_j <= c * j**(-kappa)`` for the supplied ``kappa``.
    """
    lam = np.array(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ParameterError("lambdas", "expected a nonempty 1-d sequence")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise ParameterError("lambdas", "eigenvalues must be finite and positive")
    _validate(kappa, s, lam.size)
    j = np.arange(1, lam.size + 1, dtype=float)
    ratio = lam * j**kappa
    if ratio.max() > 1e3 * ratio[0]:
        raise ParameterError(
            "lambdas",
            f"sequence does not decay like j^-{kappa}: eigenvalues not trace class",
        )
    return CovarianceModel(float(kappa), float(s), int(lam.size), lam)


def sobolev_norm_sq(x, s: float) -> float:
    """``sum_j j**(2s) x_j**2``."""
    x = np.asarray(x, dtype=float)
    j = np.arange(1, x.shape[-1] + 1, dtype=float)
    return float(np.dot(j ** (2.0 * s), x * x))


def sobolev_inner(x, y, s: float) -> float:
    x = np.asarray(x, dtype=float)
    j = np.arange(1, x.shape[-1] + 1, dtype=float)
    return float(np.dot(j ** (2.0 * s), x * np.asarray(y, dtype=float)))


def cameron_martin_norm_sq(x, cov: CovarianceModel) -> float:
    """``sum_j x_j**2 / lambda_j**2``."""
    x = np.asarray(x, dtype=float)
    return float(np.dot(cov.inv_lambda_sq, x * x))


def cameron_martin_inner(x, y, cov: CovarianceModel) -> float:
    return float(np.dot(cov.inv_lambda_sq, np.asarray(x, dtype=float) * np.asarray(y, dtype=float)))


def s_statistic(x, cov: CovarianceModel) -> float:
    """Normalised Cameron-Martin energy ``||x||_C^2 / N``; equals 1 in equilibrium on average."""
    return cameron_martin_norm_sq(x, cov) / cov.N


def trace_hs(cov: CovarianceModel) -> float:
    """Truncated trace of ``C_s`` on ``H^s``: ``sum_{j<=N} lambda_j**2 j**(2s)``."""
    return float(np.dot(cov.lambda_sq, cov.sobolev_weights))


def tail_trace(kappa: float, s: float, M: int) -> float:
    """Trace discarded by truncating at ``M`` modes: ``sum_{j>M} j**(2s - 2 kappa)``."""
    from scipy.special import zeta

    return float(zeta(2.0 * kappa - 2.0 * s, M + 1))


def modes_for_trace(kappa: float, s: float, rel_tol: float = 1e-6, cap: int = 2**16) -> int:
    """Smallest mode count whose discarded trace is below ``rel_tol`` of the full trace.

    The result is clipped to ``cap``; for slowly decaying spectra the rule asks
    for far more modes than fit in memory, so callers should report
    :func:`tail_trace` alongside the returned count.
    """
    from scipy.special import zeta

    full = float(zeta(2.0 * kappa - 2.0 * s, 1))
    lo, hi = 1, cap
    if tail_trace(kappa, s, hi) >= rel_tol * full:
        return cap
    while lo < hi:
        mid = (lo + hi) // 2
        if tail_trace(kappa, s, mid) < rel_tol * full:
            hi = mid
        else:
            lo = mid + 1
    return lo


def sample_scaled_noise(cov: CovarianceModel, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw ``C_N^{1/2} xi`` with ``xi`` standard normal; ``size`` prepends batch axes."""
    shape = (cov.N,) if size is None else tuple(np.atleast_1d(size)) + (cov.N,)
    return cov.lambdas * rng.standard_normal(shape)


def field_from_s(S0: float, cov: CovarianceModel) -> np.ndarray:
    """Deterministic state with ``s_statistic == S0`` exactly: ``x_j = sqrt(S0) lambda_j``."""
    if S0 < 0:
        raise ParameterError("S0", f"must be nonnegative, got {S0}")
    return np.sqrt(S0) * np.array(cov.lambdas)


def check_field(x, cov: CovarianceModel) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (cov.N,):
        raise ParameterError("x", f"expected {cov.N} coefficients, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("x", "coefficients must be finite")
    return x
