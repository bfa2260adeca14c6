"""Static SVG figures for experiment reports (needs matplotlib)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("plots need matplotlib; install the 'plots' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "malalimit"
    return plt


def write_plots(reports, out_dir) -> list:
    """Write one SVG per report that has something to draw; returns the paths."""
    plt = _pyplot()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rep in reports:
        draw = _DRAWERS.get(rep.name)
        if draw is None or not rep.rows():
            continue
        fig, ax = plt.subplots(figsize=(5.5, 4))
        draw(rep, ax)
        fig.tight_layout()
        path = out / f"{rep.name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
        if rep.name == "convergence" and rep.mean_paths:
            fig, ax = plt.subplots(figsize=(5.5, 4))
            _overlay(rep, ax)
            fig.tight_layout()
            path = out / "s_overlay.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written


def _convergence(rep, ax):
    n = np.array(sorted(rep.errors), dtype=float)
    ax.loglog(n, rep.medians(), "o-", label="median sup error")
    ax.set_xlabel("N")
    ax.set_ylabel("sup |S^(N) - S|")
    ax.legend()


def _overlay(rep, ax):
    ax.plot(rep.grid, rep.ode_values, "k-", lw=2, label="ODE")
    for n in sorted(rep.mean_paths):
        ax.plot(rep.grid, rep.mean_paths[n], lw=1, label=f"N={n}")
    ax.set_xlabel("t")
    ax.set_ylabel("S")
    ax.legend()


def _acceptance(rep, ax):
    for z in sorted({c["zeta"] for c in rep.cells}):
        cells = sorted((c for c in rep.cells if c["zeta"] == z), key=lambda c: c["N"])
        ax.errorbar([c["N"] for c in cells], [c["accept_mean"] for c in cells],
                    yerr=[4 * c["accept_stderr"] for c in cells], marker="o", capsize=3, label=f"zeta={z:g}")
    ax.axhline(rep.cells[0]["alpha_limit"], color="k", ls="--", lw=1, label="alpha_l(S0)")
    ax.set_xscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("first-move acceptance")
    ax.legend()


def _drift(rep, ax):
    n = np.array([c["N"] for c in rep.cells], dtype=float)
    e = np.array([c["err"] for c in rep.cells])
    ax.loglog(n, e, "o-", label=f"slope {rep.slope():.2f}")
    ax.set_xlabel("N")
    ax.set_ylabel("|b_hat - b_l(S)|")
    ax.legend()


def _paths(rep, ax):
    for n in sorted({c["N"] for c in rep.cells}):
        cells = sorted((c for c in rep.cells if c["N"] == n), key=lambda c: c["t"])
        t = [c["t"] for c in cells]
        ax.plot(t, [c["mala_S_mean"] for c in cells], "o-", label=f"MALA N={n}")
        ax.plot(t, [c["sde_S_mean"] for c in cells], "s--", label=f"SDE N={n}")
    cells = sorted(rep.cells, key=lambda c: c["t"])
    ax.plot([c["t"] for c in cells], [c["ode_S"] for c in cells], "k:", label="ODE")
    ax.set_xlabel("t")
    ax.set_ylabel("mean S")
    ax.legend()


_DRAWERS = {
    "convergence": _convergence,
    "acceptance": _acceptance,
    "drift": _drift,
    "paths": _paths,
}
