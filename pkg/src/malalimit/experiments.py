"""Ensemble studies comparing finite-N chains with their limits.

Every replica draws from its own stream keyed by ``(seed, study, N,
zeta index, replica)``, so results do not depend on thread scheduling and
adding cells to a plan leaves the existing cells untouched.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .limits import alpha_l, b_l, simulate_limit_sde, solve_s_ode
from .mala import (
    MalaConfig,
    interpolate_s,
    interpolate_x,
    log_accept_batch,
    make_rng,
    run_chain,
    run_steps,
    snapshot_steps_for,
)
from .spectral import (
    ParameterError,
    field_from_s,
    make_covariance,
    s_statistic,
    sobolev_norm_sq,
)
from .target import grad_psi, make_target

# stream namespaces, one per study
CONVERGENCE, ACCEPTANCE, DRIFT, PATHS_MALA, PATHS_SDE = 1, 2, 3, 4, 5

DEFAULT_OUTPUT = "malalimit-out"


@dataclass
class ExperimentPlan:
    N: list = field(default_factory=lambda: [64, 256, 1024, 4096])
    zeta: list = field(default_factory=lambda: [0.5])
    ell: float = 1.0
    target: str = "sqrt_sobolev"
    kappa: float = 1.0
    s: float = 0.25
    T: float = 5.0
    S0: float = 0.25
    replicas: int = 64
    seed: int = 2024
    n_noise: int = 20000
    dt: float = 1e-3
    ode_h: float = 1e-3
    grid_points: int = 129
    checkpoints: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    threads: int = 0
    output_dir: str = field(default_factory=lambda: os.environ.get("MALALIMIT_OUTPUT", DEFAULT_OUTPUT))

    def __post_init__(self):
        self.N = [int(n) for n in np.atleast_1d(self.N)]
        self.zeta = [float(z) for z in np.atleast_1d(self.zeta)]
        self.checkpoints = [float(c) for c in np.atleast_1d(self.checkpoints)]
        self.validate()

    def validate(self) -> None:
        if not self.N or any(n < 1 for n in self.N):
            raise ParameterError("N", f"need a nonempty list of positive dimensions, got {self.N}")
        if not self.zeta or any(not 0 < z <= 1 for z in self.zeta):
            raise ParameterError("zeta", f"scaling exponents must lie in (0, 1], got {self.zeta}")
        if self.replicas < 1:
            raise ParameterError("replicas", f"must be at least 1, got {self.replicas}")
        if not self.ell > 0:
            raise ParameterError("ell", f"must be positive, got {self.ell}")
        if not self.T > 0:
            raise ParameterError("T", f"horizon must be positive, got {self.T}")
        if self.S0 < 0:
            raise ParameterError("S0", f"must be nonnegative, got {self.S0}")
        if self.n_noise < 1:
            raise ParameterError("n_noise", f"must be at least 1, got {self.n_noise}")
        if self.grid_points < 2:
            raise ParameterError("grid_points", f"must be at least 2, got {self.grid_points}")
        if any(not 0 <= c <= 1 for c in self.checkpoints):
            raise ParameterError("checkpoints", "fractions of T must lie in [0, 1]")
        make_covariance(self.kappa, self.s, 1)
        if self.target not in ("zero", "sqrt_sobolev"):
            raise ParameterError("target", f"unknown model {self.target!r}; choose 'zero' or 'sqrt_sobolev'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(sorted(unknown)[0], f"unknown plan key; valid keys are {sorted(known)}")
        clean = {}
        for key, value in data.items():
            kind = _SCHEMA[key]
            try:
                if kind is list:
                    items = value if isinstance(value, (list, tuple)) else [value]
                    conv = int if key == "N" else float
                    clean[key] = [_strict(conv, v, key) for v in items]
                else:
                    clean[key] = _strict(kind, value, key)
            except (TypeError, ValueError):
                raise ParameterError(key, f"expected {_SCHEMA_NAMES[kind]}, got {value!r}") from None
        return cls(**clean)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentPlan":
        return cls.from_dict(json.loads(text))

    def model_for(self, N: int):
        cov = make_covariance(self.kappa, self.s, N)
        return cov, make_target(self.target, cov)


_SCHEMA = {f.name: (list if f.name in ("N", "zeta", "checkpoints") else None) for f in fields(ExperimentPlan)}
_SCHEMA.update(ell=float, target=str, kappa=float, s=float, T=float, S0=float, replicas=int, seed=int,
               n_noise=int, dt=float, ode_h=float, grid_points=int, threads=int, output_dir=str)
_SCHEMA_NAMES = {list: "a number or list of numbers", float: "a number", int: "an integer", str: "a string"}


def _strict(kind, value, key):
    if kind is str:
        if not isinstance(value, str):
            raise TypeError(key)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise TypeError(key)
    if kind is int:
        f = float(value)
        if not f.is_integer():
            raise ValueError(key)
        return int(f)
    return float(value)


def _pmap(fn, items, threads: int = 0):
    items = list(items)
    if threads == 1 or len(items) < 2:
        return [fn(i) for i in items]
    workers = threads if threads > 0 else min(32, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _zeta_index(plan: ExperimentPlan, zeta: float) -> int:
    return plan.zeta.index(zeta) if zeta in plan.zeta else 0


def _stderr(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")


class _Table:
    name = ""
    columns: tuple = ()

    def rows(self) -> list:
        return []

    def summary(self) -> dict:
        return {}


@dataclass
class ConvergenceReport(_Table):
    """Sup-distance between the interpolated S-chain and the ODE, per dimension."""

    name = "convergence"
    columns = ("N", "replicas", "median", "q25", "q75", "mean", "max")

    errors: dict = field(default_factory=dict)  # N -> per-replica sup errors
    grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    ode_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    mean_paths: dict = field(default_factory=dict)  # N -> ensemble mean of S^(N) on the grid
    ode_meta: dict = field(default_factory=dict)

    def medians(self) -> np.ndarray:
        return np.array([np.median(self.errors[n]) for n in sorted(self.errors)])

    def rows(self):
        out = []
        for n in sorted(self.errors):
            e = np.asarray(self.errors[n])
            q25, q50, q75 = np.percentile(e, [25, 50, 75])
            out.append([n, e.size, q50, q25, q75, e.mean(), e.max()])
        return out

    def summary(self):
        med = self.medians()
        return {"N": sorted(self.errors), "median_sup_error": med.tolist(), "ode": self.ode_meta}


def run_convergence_study(plan: ExperimentPlan) -> ConvergenceReport:
    """Median over replicas of ``sup_t |S^(N)(t) - S(t)|`` for each N (``zeta = 1/2``)."""
    if 0.5 not in plan.zeta:
        raise ParameterError("zeta", "the convergence study needs zeta = 1/2 in the plan")
    zi = plan.zeta.index(0.5)
    ode = solve_s_ode(plan.S0, plan.ell, plan.T, plan.ode_h)
    grid = np.linspace(0.0, plan.T, plan.grid_points)
    ode_vals = np.asarray(ode(grid))
    report = ConvergenceReport(grid=grid, ode_values=ode_vals,
                               ode_meta={"method": ode.method, "h": ode.h, "S0": plan.S0, "ell": plan.ell})
    for N in plan.N:
        cov, model = plan.model_for(N)
        cfg = MalaConfig(plan.ell, 0.5, N, plan.seed)
        x0 = field_from_s(plan.S0, cov)

        def one(r, N=N, cov=cov, model=model, cfg=cfg, x0=x0):
            rng = make_rng(plan.seed, CONVERGENCE, N, zi, r)
            traj = run_chain(x0, model, cov, cfg, plan.T, rng=rng, snapshot_steps=())
            path = interpolate_s(traj, grid)
            return float(np.max(np.abs(path - ode_vals))), path

        res = _pmap(one, range(plan.replicas), plan.threads)
        report.errors[N] = np.array([e for e, _ in res])
        report.mean_paths[N] = np.mean([p for _, p in res], axis=0)
    return report


@dataclass
class AcceptanceReport(_Table):
    name = "acceptance"
    columns = ("N", "zeta", "replicas", "S0", "accept_mean", "accept_stderr",
               "alpha_mean", "alpha_limit", "abs_dev_mean", "abs_dev_stderr")

    cells: list = field(default_factory=list)

    def rows(self):
        return [[c[k] for k in self.columns] for c in self.cells]

    def cell(self, N: int, zeta: float) -> dict:
        for c in self.cells:
            if c["N"] == N and c["zeta"] == zeta:
                return c
        raise KeyError((N, zeta))

    def summary(self):
        return {"cells": [{k: c[k] for k in ("N", "zeta", "accept_mean", "accept_stderr")} for c in self.cells]}


def first_move(x0, model, cov, cfg, rng):
    """One transition from ``x0``: returns ``(accepted, min(1, e^Q))``."""
    traj = run_steps(x0, model, cov, cfg, 1, rng=rng, snapshot_steps=())
    q = traj.Q[1]
    return bool(traj.accepted[1]), float(math.exp(min(0.0, q)))


def run_acceptance_study(plan: ExperimentPlan) -> AcceptanceReport:
    """First-move acceptance for every ``(N, zeta)`` cell, started from ``S^{0,N} = S0``.

    Besides the accept indicator the exact conditional probability
    ``min(1, e^Q)`` is averaged, together with its distance to ``alpha_l(S0)``.
    """
    report = AcceptanceReport()
    a_lim = alpha_l(plan.S0, plan.ell)
    for zi, zeta in enumerate(plan.zeta):
        for N in plan.N:
            cov, model = plan.model_for(N)
            cfg = MalaConfig(plan.ell, zeta, N, plan.seed)
            x0 = field_from_s(plan.S0, cov)
            res = _pmap(
                lambda r, N=N, cov=cov, model=model, cfg=cfg, x0=x0, zi=zi: first_move(
                    x0, model, cov, cfg, make_rng(plan.seed, ACCEPTANCE, N, zi, r)
                ),
                range(plan.replicas),
                plan.threads,
            )
            acc = np.array([a for a, _ in res], dtype=float)
            alpha = np.array([p for _, p in res])
            dev = np.abs(alpha - a_lim)
            report.cells.append({
                "N": N, "zeta": zeta, "replicas": plan.replicas, "S0": plan.S0,
                "accept_mean": float(acc.mean()),
                "accept_stderr": float(math.sqrt(acc.mean() * (1 - acc.mean()) / acc.size)),
                "alpha_mean": float(alpha.mean()),
                "alpha_limit": a_lim,
                "abs_dev_mean": float(dev.mean()),
                "abs_dev_stderr": _stderr(dev),
            })
    return report


@dataclass(frozen=True)
class DriftEstimate:
    b_hat: float
    b_limit: float
    err: float
    stderr: float


def _noise_batches(cov, n_noise, rng, batch_elems=1 << 22):
    per = max(1, batch_elems // cov.N)
    done = 0
    while done < n_noise:
        c = min(per, n_noise - done)
        yield rng.standard_normal((c, cov.N)), rng.random(c)
        done += c


def drift_diagnostic(x, model, cov, cfg: MalaConfig, n_noise: int, rng=None) -> DriftEstimate:
    """Monte Carlo ``sqrt(N) E[S' - S]`` at a frozen state versus ``b_l(S)``.

    Each sample uses a fresh proposal noise and a fresh uniform for the
    accept decision, exactly as one chain transition would.
    """
    if n_noise < 1:
        raise ParameterError("n_noise", f"must be at least 1, got {n_noise}")
    rng = make_rng(cfg.seed, DRIFT, cov.N) if rng is None else rng
    x = np.asarray(x, dtype=float)
    d = cfg.delta
    base = (1.0 - d) * x - d * cov.lambda_sq * grad_psi(model, x)
    cm_x = float(np.dot(cov.inv_lambda_sq, x * x))
    vals = []
    for xi, u in _noise_batches(cov, n_noise, rng):
        Y = base + math.sqrt(2.0 * d) * cov.lambdas * xi
        q = log_accept_batch(x, Y, model, cov, cfg)
        gamma = u <= np.exp(np.minimum(q, 0.0))
        dS = ((Y * Y) @ cov.inv_lambda_sq - cm_x) / cov.N
        vals.append(math.sqrt(cov.N) * np.where(gamma, dS, 0.0))
    v = np.concatenate(vals)
    b_hat = float(v.mean())
    b_lim = b_l(cm_x / cov.N, cfg.ell)
    return DriftEstimate(b_hat, b_lim, abs(b_hat - b_lim), _stderr(v))


def epsilon_diagnostic(x, model, cov, cfg: MalaConfig, n_noise: int, rng=None) -> float:
    """``|| mean of gamma C^{1/2} xi ||_s``: correlation between acceptance and noise."""
    if n_noise < 1:
        raise ParameterError("n_noise", f"must be at least 1, got {n_noise}")
    rng = make_rng(cfg.seed, DRIFT, cov.N, 1) if rng is None else rng
    x = np.asarray(x, dtype=float)
    d = cfg.delta
    base = (1.0 - d) * x - d * cov.lambda_sq * grad_psi(model, x)
    total = np.zeros(cov.N)
    for xi, u in _noise_batches(cov, n_noise, rng):
        noise = cov.lambdas * xi
        Y = base + math.sqrt(2.0 * d) * noise
        q = log_accept_batch(x, Y, model, cov, cfg)
        gamma = u <= np.exp(np.minimum(q, 0.0))
        total += noise[gamma].sum(axis=0)
    return math.sqrt(sobolev_norm_sq(total / n_noise, cov.s))


@dataclass
class DriftReport(_Table):
    name = "drift"
    columns = ("N", "S", "b_hat", "b_limit", "err", "stderr", "eps_norm")

    cells: list = field(default_factory=list)

    def rows(self):
        return [[c[k] for k in self.columns] for c in self.cells]

    def slope(self) -> float:
        """Least-squares slope of ``log err`` against ``log N``."""
        n = np.array([c["N"] for c in self.cells], dtype=float)
        e = np.array([c["err"] for c in self.cells])
        if n.size < 2:
            return float("nan")
        return float(np.polyfit(np.log(n), np.log(e), 1)[0])

    def summary(self):
        return {"slope_log_err_vs_log_N": self.slope(), "N": [c["N"] for c in self.cells]}


def run_drift_study(plan: ExperimentPlan) -> DriftReport:
    """Drift and noise-correlation diagnostics at the frozen state with ``S = S0``."""
    report = DriftReport()

    def one(N):
        cov, model = plan.model_for(N)
        cfg = MalaConfig(plan.ell, 0.5, N, plan.seed)
        x = field_from_s(plan.S0, cov)
        est = drift_diagnostic(x, model, cov, cfg, plan.n_noise, make_rng(plan.seed, DRIFT, N, 0))
        eps = epsilon_diagnostic(x, model, cov, cfg, plan.n_noise, make_rng(plan.seed, DRIFT, N, 1))
        return {"N": N, "S": s_statistic(x, cov), "b_hat": est.b_hat, "b_limit": est.b_limit,
                "err": est.err, "stderr": est.stderr, "eps_norm": eps}

    report.cells = _pmap(one, plan.N, plan.threads)
    return report


@dataclass
class PathReport(_Table):
    name = "paths"
    columns = ("N", "t", "ode_S", "mala_S_mean", "mala_S_var", "sde_S_mean", "sde_S_var",
               "mala_norm_mean", "mala_norm_var", "sde_norm_mean", "sde_norm_var", "ks_norm")

    cells: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)  # (N, t) -> dict of raw functionals

    def rows(self):
        return [[c[k] for k in self.columns] for c in self.cells]

    def cell(self, N: int, t: float) -> dict:
        for c in self.cells:
            if c["N"] == N and abs(c["t"] - t) < 1e-12:
                return c
        raise KeyError((N, t))

    def summary(self):
        return {"cells": [{k: c[k] for k in ("N", "t", "ks_norm")} for c in self.cells]}


def run_path_comparison(plan: ExperimentPlan, x0_S: float | None = None, sde_modes: int | None = None) -> PathReport:
    """Checkpoint distributions of ``S`` and ``||x||_s``: MALA chains versus the limit SDE.

    The chain starts from ``x_j = sqrt(S0) lambda_j``; the SDE uses the same
    initial state and ``sde_modes`` modes (default: the chain dimension).
    """
    if 0.5 not in plan.zeta:
        raise ParameterError("zeta", "the path comparison needs zeta = 1/2 in the plan")
    zi = plan.zeta.index(0.5)
    S0 = plan.S0 if x0_S is None else x0_S
    checkpoints = [f * plan.T for f in plan.checkpoints]
    ode = solve_s_ode(S0, plan.ell, plan.T, plan.dt)
    report = PathReport()
    for N in plan.N:
        cov, model = plan.model_for(N)
        cfg = MalaConfig(plan.ell, 0.5, N, plan.seed)
        x0 = field_from_s(S0, cov)
        need = snapshot_steps_for(checkpoints, N)

        def mala_one(r, cov=cov, model=model, cfg=cfg, x0=x0, need=need, N=N):
            traj = run_chain(x0, model, cov, cfg, plan.T, rng=make_rng(plan.seed, PATHS_MALA, N, zi, r),
                             snapshot_steps=need)
            xs = [interpolate_x(traj, t) for t in checkpoints]
            return [(s_statistic(v, cov), math.sqrt(sobolev_norm_sq(v, cov.s))) for v in xs]

        M = sde_modes or N
        scov, smodel = plan.model_for(M)
        sx0 = field_from_s(S0, scov)
        n_sde = max(0, int(math.ceil(plan.T / plan.dt - 1e-12)))
        step = plan.T / n_sde
        rec_idx = [int(round(t / step)) for t in checkpoints]

        def sde_one(r, scov=scov, smodel=smodel, sx0=sx0, M=M, N=N):
            path = simulate_limit_sde(sx0, S0, smodel, scov, plan.ell, plan.T, plan.dt,
                                      make_rng(plan.seed, PATHS_SDE, N, M, r), ode=ode, records=rec_idx)
            by_t = dict(zip(np.round(path.t / step).astype(int).tolist(), path.x))
            return [(s_statistic(by_t[k], scov), math.sqrt(sobolev_norm_sq(by_t[k], scov.s))) for k in rec_idx]

        mala = np.array(_pmap(mala_one, range(plan.replicas), plan.threads))  # (R, checkpoints, 2)
        sde = np.array(_pmap(sde_one, range(plan.replicas), plan.threads))
        for i, t in enumerate(checkpoints):
            ms, mn = mala[:, i, 0], mala[:, i, 1]
            ss, sn = sde[:, i, 0], sde[:, i, 1]
            ks = 0.0 if np.array_equal(np.sort(mn), np.sort(sn)) else float(stats.ks_2samp(mn, sn).statistic)
            report.cells.append({
                "N": N, "t": t, "ode_S": float(ode(t)),
                "mala_S_mean": float(ms.mean()), "mala_S_var": float(ms.var(ddof=1)) if ms.size > 1 else 0.0,
                "sde_S_mean": float(ss.mean()), "sde_S_var": float(ss.var(ddof=1)) if ss.size > 1 else 0.0,
                "mala_norm_mean": float(mn.mean()), "mala_norm_var": float(mn.var(ddof=1)) if mn.size > 1 else 0.0,
                "sde_norm_mean": float(sn.mean()), "sde_norm_var": float(sn.var(ddof=1)) if sn.size > 1 else 0.0,
                "ks_norm": ks,
            })
            report.samples[(N, t)] = {"mala_S": ms, "sde_S": ss, "mala_norm": mn, "sde_norm": sn}
    return report


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def version_string() -> str:
    """``git describe`` when run from a checkout, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_table(table: _Table, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows():
            w.writerow([_fmt(v) for v in row])


def read_table(path) -> list:
    """Rows of a report CSV as dicts of floats (integers where exact)."""
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                f = float(v)
                row[k] = int(f) if f.is_integer() and "." not in v and "e" not in v.lower() else f
            out.append(row)
    return out


def write_report(reports, path, plan: ExperimentPlan | None = None, plots: bool = False,
                 started: float | None = None) -> dict:
    """Write CSV tables, ``plan.json`` and ``summary.json`` into directory ``path``.

    Returns the summary dictionary. I/O failures are re-raised naming the path.
    """
    if isinstance(reports, _Table):
        reports = [reports]
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for rep in reports:
            write_table(rep, out / f"{rep.name}.csv")
        if plan is not None:
            (out / "plan.json").write_text(plan.to_json() + "\n")
        summary = {
            "version": version_string(),
            "plan": plan.to_dict() if plan is not None else None,
            "python": platform.python_version(),
            "wall_clock_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "elapsed_seconds": None if started is None else time.time() - started,
            "reports": {rep.name: _jsonable(rep.summary()) for rep in reports},
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        if plots:
            from .plots import write_plots

            write_plots(reports, out / "plots")
    except OSError as exc:
        raise OSError(f"could not write report to {out}: {exc}") from exc
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
