"""The preconditioned MALA chain on the N-mode subspace.

Proposal from state ``x`` with step ``delta = ell / N**zeta``::

    y = (1 - delta) x - delta C grad Psi(x) + sqrt(2 delta) C^{1/2} xi

accepted with probability ``min(1, exp(Q))``. ``Q`` is available both as the
plain Metropolis-Hastings log ratio of densities and as the three-term
split into a Gaussian part and two Psi-dependent corrections; the two must
agree to rounding.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .spectral import CovarianceModel, ParameterError, check_field, s_statistic
from .target import TargetModel, c_grad_psi, grad_psi, log_target_unnorm, psi_eval

# random numbers are drawn in blocks of about this many normals; the block
# length depends on N only, so the stream layout is backend independent
CHUNK_ELEMS = 1 << 20


@dataclass(frozen=True)
class MalaConfig:
    ell: float = 1.0
    zeta: float = 0.5
    N: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.ell > 0:
            raise ParameterError("ell", f"must be positive, got {self.ell}")
        if not 0 < self.zeta <= 1:
            raise ParameterError("zeta", f"scaling exponent must lie in (0, 1], got {self.zeta}")
        if self.N < 1:
            raise ParameterError("N", f"must be a positive integer, got {self.N}")
        if not self.delta < 1:
            warnings.warn(
                f"proposal step delta = ell/N^zeta = {self.delta:g} is not below 1; "
                "the drift term overshoots the origin",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def delta(self) -> float:
        return self.ell / self.N**self.zeta


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *key)``.

    Streams for distinct keys are statistically independent, and adding new
    keys never changes the stream of an existing one.
    """
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _check_dims(cov: CovarianceModel, cfg: MalaConfig):
    if cov.N != cfg.N:
        raise ParameterError("N", f"covariance has {cov.N} modes but the chain is configured for {cfg.N}")


def propose(x, model: TargetModel, cov: CovarianceModel, cfg: MalaConfig, rng=None, xi=None):
    """One MALA proposal; returns ``(y, C^{1/2} xi)``.

    Pass ``xi`` (standard normals) to force the noise instead of drawing it.
    """
    _check_dims(cov, cfg)
    x = check_field(x, cov)
    if xi is None:
        xi = rng.standard_normal(cov.N)
    noise = cov.lambdas * np.asarray(xi, dtype=float)
    d = cfg.delta
    y = (1.0 - d) * x - d * c_grad_psi(model, x, cov) + math.sqrt(2.0 * d) * noise
    return y, noise


def _log_q(x, y, model, cov, delta):
    # log proposal density of moving x -> y, normalising constant dropped
    drift = -x - c_grad_psi(model, x, cov)
    r = (y - x) - delta * drift
    return -np.dot(cov.inv_lambda_sq, r * r) / (4.0 * delta)


def log_accept_direct(x, y, model: TargetModel, cov: CovarianceModel, cfg: MalaConfig) -> float:
    """Log Metropolis-Hastings ratio ``log pi(y) q(y,x) - log pi(x) q(x,y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = cfg.delta
    return float(
        log_target_unnorm(model, y, cov)
        - log_target_unnorm(model, x, cov)
        + _log_q(y, x, model, cov, d)
        - _log_q(x, y, model, cov, d)
    )


@dataclass(frozen=True)
class AcceptanceBreakdown:
    I1: float
    I2: float
    I3: float

    @property
    def Q(self) -> float:
        return self.I1 + self.I2 + self.I3


def log_accept_decomposed(x, y, model: TargetModel, cov: CovarianceModel, cfg: MalaConfig) -> AcceptanceBreakdown:
    """Split of ``Q`` into the Gaussian term ``I1`` and the Psi terms ``I2``, ``I3``.

    ``I1 = -(delta/4)(||y||_C^2 - ||x||_C^2)``; ``I2`` collects the cross terms
    with ``C grad Psi`` and the increment of ``Psi``; ``I3`` the difference of
    ``||C grad Psi||_C^2``. Cameron-Martin products against ``C grad Psi``
    reduce to plain dot products with ``grad Psi``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = cfg.delta
    a = 1.0 - d
    i1 = -0.25 * d * (np.dot(cov.inv_lambda_sq, y * y) - np.dot(cov.inv_lambda_sq, x * x))
    gx = grad_psi(model, x)
    gy = grad_psi(model, y)
    i2 = -0.5 * (np.dot(x - a * y, gy) - np.dot(y - a * x, gx)) - (psi_eval(model, y) - psi_eval(model, x))
    i3 = -0.25 * d * (np.dot(cov.lambda_sq, gy * gy) - np.dot(cov.lambda_sq, gx * gx))
    return AcceptanceBreakdown(float(i1), float(i2), float(i3))


@dataclass(frozen=True)
class ChainState:
    x: np.ndarray
    k: int
    S: float
    accepts: int = 0


@dataclass(frozen=True)
class StepRecord:
    Q: float
    accepted: bool
    S: float
    noise: np.ndarray
    proposal: np.ndarray


def initial_state(x0, cov: CovarianceModel) -> ChainState:
    x0 = check_field(x0, cov).copy()
    return ChainState(x0, 0, s_statistic(x0, cov), 0)


def step(state: ChainState, model, cov, cfg, rng, u=None, xi=None, cross_check=False):
    """Single accept/reject transition; ``u`` and ``xi`` may be forced for testing."""
    y, noise = propose(state.x, model, cov, cfg, rng, xi=xi)
    q = log_accept_decomposed(state.x, y, model, cov, cfg).Q
    if cross_check:
        qd = log_accept_direct(state.x, y, model, cov, cfg)
        if abs(q - qd) > 1e-10 * (1.0 + abs(q)):
            raise AssertionError(f"acceptance routes disagree: {q!r} vs {qd!r}")
    if u is None:
        u = 1.0 - rng.random()
    accept = u <= 0 or (not math.isnan(q) and math.log(u) <= min(0.0, q))
    if accept:
        new = ChainState(y, state.k + 1, s_statistic(y, cov), state.accepts + 1)
    else:
        new = replace(state, k=state.k + 1)
    return new, StepRecord(q, bool(accept), new.S, noise, y)


@dataclass
class Trajectory:
    """S recorded every step plus sparse state snapshots."""

    N: int
    S: np.ndarray
    accepted: np.ndarray
    Q: np.ndarray
    snapshots: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    states: np.ndarray | None = None  # every state, only when traced

    @property
    def steps(self) -> int:
        return len(self.S) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.S)) / math.sqrt(self.N)

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted[1:].mean()) if self.steps else float("nan")


def n_steps(T: float, N: int) -> int:
    """Steps needed to cover ``[0, T]`` on the grid ``k / sqrt(N)``."""
    return int(math.ceil(T * math.sqrt(N) - 1e-9))


def run_chain(
    x0,
    model: TargetModel,
    cov: CovarianceModel,
    cfg: MalaConfig,
    T: float,
    rng: np.random.Generator | None = None,
    snapshots: int = 16,
    snapshot_steps=None,
    backend: str | None = None,
) -> Trajectory:
    """Run ``ceil(T sqrt(N))`` steps from ``x0``.

    The state is stored at ``snapshots`` evenly spaced steps (always
    including the first and last), or exactly at ``snapshot_steps`` when
    given. Without ``rng`` the stream is derived from ``cfg.seed``.
    """
    if not T >= 0:
        raise ParameterError("T", f"horizon must be nonnegative, got {T}")
    traj = run_steps(x0, model, cov, cfg, n_steps(T, cov.N), rng, snapshots, snapshot_steps, backend)
    traj.config["T"] = T
    return traj


def run_steps(
    x0,
    model: TargetModel,
    cov: CovarianceModel,
    cfg: MalaConfig,
    total: int,
    rng: np.random.Generator | None = None,
    snapshots: int = 16,
    snapshot_steps=None,
    backend: str | None = None,
    trace: bool = False,
) -> Trajectory:
    """Same as :func:`run_chain` with the step count given directly.

    ``trace=True`` additionally keeps every state in ``Trajectory.states``
    (shape ``(total + 1, N)``), which is only sensible for small ``N``.
    """
    _check_dims(cov, cfg)
    x = check_field(x0, cov).astype(float, copy=True)
    rng = make_rng(cfg.seed) if rng is None else rng
    if snapshot_steps is None:
        snap = set(np.unique(np.linspace(0, total, max(snapshots, 2)).round().astype(int)).tolist())
    else:
        snap = {int(k) for k in snapshot_steps if 0 <= k <= total}

    S = np.empty(total + 1)
    Q = np.full(total + 1, np.nan)
    acc = np.zeros(total + 1, dtype=np.uint8)
    S[0] = s_statistic(x, cov)
    stored = {0: x.copy()} if 0 in snap else {}
    X = None
    if trace:
        X = np.empty((total + 1, cov.N))
        X[0] = x

    if model.code < 0:
        _run_python_model(x, model, cov, cfg, rng, total, S, Q, acc, snap, stored, X)
    else:
        kern = _backend.get_kernels(backend)
        weights = _weights_for(model, cov)
        chunk = max(1, CHUNK_ELEMS // cov.N)
        cuts = sorted(k for k in snap if 0 < k < total)
        done = 0
        while done < total:
            c = min(chunk, total - done)
            xi = rng.standard_normal((c, cov.N))
            logu = np.log1p(-rng.random(c))
            start = 0
            # split the block at snapshot steps so states can be copied out
            bounds = [k - done for k in cuts if done < k < done + c] + [c]
            for stop in bounds:
                sl = slice(start, stop)
                out = slice(done + 1 + start, done + 1 + stop)
                kern.advance_chain(
                    x, cov.lambdas, cov.lambda_sq, cov.inv_lambda_sq, weights, model.code, cfg.delta, xi[sl], logu[sl], S[out], Q[out], acc[out],
                    None if X is None else X[out],
                )
                if done + stop in snap:
                    stored[done + stop] = x.copy()
                start = stop
            done += c
    if total in snap:
        stored[total] = x.copy()
    return Trajectory(
        N=cov.N,
        S=S,
        accepted=acc.astype(bool),
        Q=Q,
        snapshots=stored,
        states=X,
        config={"ell": cfg.ell, "zeta": cfg.zeta, "N": cfg.N, "seed": cfg.seed, "steps": total,
                "model": model.describe(), "kappa": cov.kappa, "s": cov.s},
    )


def log_accept_batch(x, Y, model: TargetModel, cov: CovarianceModel, cfg: MalaConfig) -> np.ndarray:
    """Decomposed ``Q`` for one current state ``x`` against a batch of proposals ``Y``."""
    x = np.asarray(x, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    d = cfg.delta
    a = 1.0 - d
    q = -0.25 * d * ((Y * Y) @ cov.inv_lambda_sq - np.dot(cov.inv_lambda_sq, x * x))
    if model.kind != "zero":
        gx = grad_psi(model, x)
        gy = grad_psi(model, Y)
        q -= 0.5 * (((x - a * Y) * gy).sum(axis=1) - (Y - a * x) @ gx)
        q -= np.asarray(psi_eval(model, Y)) - psi_eval(model, x)
        q -= 0.25 * d * ((gy * gy) @ cov.lambda_sq - np.dot(cov.lambda_sq, gx * gx))
    return q


def _weights_for(model: TargetModel, cov: CovarianceModel) -> np.ndarray:
    if model.kind == "sqrt_sobolev" and model.s != cov.s:
        return np.arange(1, cov.N + 1, dtype=float) ** (2.0 * model.s)
    return np.ascontiguousarray(cov.sobolev_weights)


def _run_python_model(x, model, cov, cfg, rng, total, S, Q, acc, snap, stored, X=None):
    # custom Psi: same stream layout as the kernels, arithmetic through the public functions
    chunk = max(1, CHUNK_ELEMS // cov.N)
    state = initial_state(x, cov)
    done = 0
    while done < total:
        c = min(chunk, total - done)
        xi = rng.standard_normal((c, cov.N))
        logu = np.log1p(-rng.random(c))
        for i in range(c):
            y, _ = propose(state.x, model, cov, cfg, xi=xi[i])
            q = log_accept_decomposed(state.x, y, model, cov, cfg).Q
            k = done + i + 1
            Q[k] = q
            if not math.isnan(q) and logu[i] <= min(0.0, q):
                state = ChainState(y, k, s_statistic(y, cov), state.accepts + 1)
                acc[k] = 1
            else:
                state = replace(state, k=k)
            S[k] = state.S
            if X is not None:
                X[k] = state.x
            if k in snap:
                stored[k] = state.x.copy()
        done += c
    x[:] = state.x


def interpolate_s(traj: Trajectory, t):
    """Piecewise-linear interpolant of ``S`` on the grid ``t_k = k / sqrt(N)``."""
    t_arr = np.asarray(t, dtype=float)
    rt = math.sqrt(traj.N)
    t_max = traj.steps / rt
    if np.any(t_arr < 0) or np.any(t_arr > t_max * (1 + 1e-12) + 1e-12):
        raise ValueError(f"time outside recorded range [0, {t_max:g}]")
    u = np.clip(t_arr * rt, 0.0, traj.steps)
    k = np.minimum(np.floor(u).astype(int), max(traj.steps - 1, 0))
    if traj.steps == 0:
        out = np.full(u.shape, traj.S[0])
    else:
        out = (u - k) * traj.S[k + 1] + (k + 1 - u) * traj.S[k]
    return float(out) if np.ndim(t) == 0 else out


def snapshot_steps_for(times, N: int) -> set:
    """Grid steps whose states :func:`interpolate_x` needs at ``times``."""
    need = set()
    for t in times:
        u = t * math.sqrt(N)
        k = int(math.floor(u))
        need.add(k)
        if u != k:
            need.add(k + 1)
    return need


def interpolate_x(traj: Trajectory, t: float) -> np.ndarray:
    """State interpolant at ``t``; the neighbouring grid states must be stored."""
    u = t * math.sqrt(traj.N)
    k = int(math.floor(u))
    if u == k:
        return traj.snapshots[k].copy()
    return (u - k) * traj.snapshots[k + 1] + (k + 1 - u) * traj.snapshots[k]


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path, snapshots_path=None) -> None:
    """Columns ``k,t,S,accepted,Q``; optional long-format snapshot file ``k,j,x_j``."""
    times = traj.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "t", "S", "accepted", "Q"])
        for k in range(len(traj.S)):
            w.writerow([k, _fmt(times[k]), _fmt(traj.S[k]), int(traj.accepted[k]), _fmt(traj.Q[k])])
    if snapshots_path is not None:
        with open(snapshots_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "j", "x_j"])
            for k in sorted(traj.snapshots):
                for j, v in enumerate(traj.snapshots[k], start=1):
                    w.writerow([k, j, _fmt(v)])


def read_trajectory_csv(path, N: int, snapshots_path=None) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    S = np.array([float(r["S"]) for r in rows])
    acc = np.array([r["accepted"] == "1" for r in rows])
    Q = np.array([float(r["Q"]) for r in rows])
    snaps = {}
    if snapshots_path is not None:
        with open(snapshots_path, newline="") as fh:
            for r in csv.DictReader(fh):
                snaps.setdefault(int(r["k"]), []).append(float(r["x_j"]))
        snaps = {k: np.array(v) for k, v in snaps.items()}
    return Trajectory(N=N, S=S, accepted=acc, Q=Q, snapshots=snaps)
