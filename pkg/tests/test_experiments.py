import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import setup
from malalimit.experiments import (
    AcceptanceReport,
    ConvergenceReport,
    ExperimentPlan,
    _pmap,
    drift_diagnostic,
    epsilon_diagnostic,
    read_table,
    run_acceptance_study,
    run_convergence_study,
    run_drift_study,
    run_path_comparison,
    version_string,
    write_report,
)
from malalimit.limits import b_l
from malalimit.mala import make_rng
from malalimit.spectral import ParameterError, field_from_s


def small_plan(**kw):
    base = dict(N=[16, 64], replicas=8, T=1.0, n_noise=2000, output_dir="unused")
    base.update(kw)
    return ExperimentPlan(**base)


def exact_drift_zero_psi(S, N, ell):
    """sqrt(N) E[gamma (S' - S)] for Psi = 0 via the noncentral chi-square law of ||y||_C^2."""
    d = ell / math.sqrt(N)
    c = N * S
    law = stats.ncx2(N, (1 - d) ** 2 * c / (2 * d))

    def f(w):
        inc = 2 * d * w - c
        return min(1.0, math.exp(-0.25 * d * inc)) * inc / N * law.pdf(w)

    lo, hi = law.ppf(1e-14), law.ppf(1 - 1e-14)
    mid = law.mean()
    val = integrate.quad(f, lo, mid, limit=200, epsabs=1e-13)[0] + integrate.quad(f, mid, hi, limit=200, epsabs=1e-13)[0]
    return math.sqrt(N) * val


def test_plan_json_roundtrip():
    p = small_plan(zeta=[0.5, 1 / 3], seed=11)
    q = ExperimentPlan.from_json(p.to_json())
    assert q == p
    assert json.loads(p.to_json())["seed"] == 11


@pytest.mark.parametrize("data,field", [
    ({"N": [0]}, "N"),
    ({"zeta": [1.5]}, "zeta"),
    ({"kappa": 0.4}, "kappa"),
    ({"s": 0.6}, "s"),
    ({"replicas": 0}, "replicas"),
    ({"target": "quartic"}, "target"),
    ({"bogus": 1}, "bogus"),
    ({"T": "soon"}, "T"),
    ({"replicas": 2.5}, "replicas"),
])
def test_plan_validation(data, field):
    with pytest.raises(ParameterError) as err:
        ExperimentPlan.from_dict(data)
    assert err.value.field == field


def test_plan_accepts_scalars_for_lists():
    p = ExperimentPlan.from_dict({"N": 128, "zeta": "0.5", "output_dir": "x"})
    assert p.N == [128] and p.zeta == [0.5]


def test_output_dir_from_environment(monkeypatch):
    monkeypatch.setenv("MALALIMIT_OUTPUT", "/tmp/somewhere")
    assert ExperimentPlan().output_dir == "/tmp/somewhere"


def test_pmap_preserves_order():
    assert _pmap(lambda i: i * i, range(50), threads=4) == [i * i for i in range(50)]
    assert _pmap(lambda i: i, [], threads=4) == []


@pytest.mark.parametrize("N", [16, 64, 256])
def test_drift_diagnostic_against_quadrature(N):
    cov, model, cfg = setup(N, "zero")
    x = field_from_s(0.25, cov)
    est = drift_diagnostic(x, model, cov, cfg, 40000, make_rng(0, 1, N))
    exact = exact_drift_zero_psi(0.25, N, 1.0)
    assert abs(est.b_hat - exact) < 4 * est.stderr
    assert est.b_limit == pytest.approx(b_l(0.25, 1.0))
    assert est.err == pytest.approx(abs(est.b_hat - est.b_limit))


def test_drift_quadrature_tends_to_limit():
    errs = [abs(exact_drift_zero_psi(0.25, N, 1.0) - b_l(0.25, 1.0)) for N in (64, 1024, 16384)]
    assert errs[0] > errs[1] > errs[2]


def test_epsilon_diagnostic_shrinks():
    vals = []
    for N in (16, 1024):
        cov, model, cfg = setup(N)
        vals.append(epsilon_diagnostic(field_from_s(0.25, cov), model, cov, cfg, 4000, make_rng(1, N)))
    assert vals[1] < vals[0]
    with pytest.raises(ParameterError):
        epsilon_diagnostic(np.zeros(16), *setup(16), 0)


def test_convergence_study_shapes():
    rep = run_convergence_study(small_plan())
    assert sorted(rep.errors) == [16, 64]
    assert all(len(v) == 8 for v in rep.errors.values())
    assert rep.grid.size == 129 and rep.grid[-1] == 1.0
    assert len(rep.rows()) == 2
    with pytest.raises(ParameterError):
        run_convergence_study(small_plan(zeta=[0.4]))


def test_acceptance_study_cells():
    rep = run_acceptance_study(small_plan(zeta=[0.5, 1 / 3], S0=0.5))
    assert len(rep.cells) == 4
    c = rep.cell(64, 0.5)
    assert 0 <= c["accept_mean"] <= 1
    assert c["alpha_limit"] == pytest.approx(math.exp(-0.25))
    with pytest.raises(KeyError):
        rep.cell(32, 0.5)


def test_drift_study_rows():
    rep = run_drift_study(small_plan(N=[16, 64, 256]))
    assert [c["N"] for c in rep.cells] == [16, 64, 256]
    assert all(c["S"] == pytest.approx(0.25) for c in rep.cells)
    assert np.isfinite(rep.slope())


def test_path_comparison_zero_checkpoint_identical():
    rep = run_path_comparison(small_plan(N=[16], checkpoints=[0.0, 1.0], target="zero"))
    c0 = rep.cell(16, 0.0)
    assert c0["ks_norm"] == 0.0
    assert c0["mala_S_mean"] == pytest.approx(c0["sde_S_mean"])
    assert rep.cell(16, 1.0)["ode_S"] > 0.25


def test_studies_are_deterministic_and_thread_independent():
    a = run_acceptance_study(small_plan(threads=1))
    b = run_acceptance_study(small_plan(threads=4))
    assert a.rows() == b.rows()


def test_adding_cells_leaves_existing_ones():
    a = run_acceptance_study(small_plan(N=[64]))
    b = run_acceptance_study(small_plan(N=[16, 64, 256]))
    assert a.cell(64, 0.5) == b.cell(64, 0.5)


def test_write_report_empty(tmp_path):
    summary = write_report([ConvergenceReport(), AcceptanceReport()], tmp_path)
    assert (tmp_path / "convergence.csv").read_text() == "N,replicas,median,q25,q75,mean,max\n"
    assert read_table(tmp_path / "acceptance.csv") == []
    assert json.loads((tmp_path / "summary.json").read_text())["version"] == summary["version"]


def test_write_report_roundtrip_and_bytes(tmp_path):
    plan = small_plan()
    reps = [run_acceptance_study(plan), run_drift_study(plan)]
    write_report(reps, tmp_path / "a", plan=plan)
    write_report([run_acceptance_study(plan), run_drift_study(plan)], tmp_path / "b", plan=plan)
    for name in ("acceptance.csv", "drift.csv", "plan.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    back = read_table(tmp_path / "a" / "acceptance.csv")
    for row, cell in zip(back, reps[0].cells):
        assert row == pytest.approx(cell)
    assert ExperimentPlan.from_json((tmp_path / "a" / "plan.json").read_text()) == plan


def test_write_report_plots(tmp_path):
    pytest.importorskip("matplotlib")
    plan = small_plan()
    write_report([run_convergence_study(plan), run_acceptance_study(plan)], tmp_path, plan=plan, plots=True)
    names = sorted(p.name for p in (tmp_path / "plots").iterdir())
    assert names == ["acceptance.svg", "convergence.svg", "s_overlay.svg"]


def test_write_report_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match=str(blocker)):
        write_report([AcceptanceReport()], blocker / "sub")


def test_version_string():
    assert version_string().startswith("0.1.0")
