import math

import numpy as np
import pytest

from skdv import ApproxParams, FieldPair, Forcing, NoiseOperator, PhysicalConstants, SchemeConfig, SpectralGrid, benchmark_initial
from skdv import experiments as ex
from skdv.dynamics import LINEAR

G = SpectralGrid(8 * math.pi, 128)


def forcing(lam=0.2, seed=1):
    return Forcing(NoiseOperator.from_decay(G.half_length, lam, 2.0, 21, 1),
                   NoiseOperator.from_decay(G.half_length, lam, 2.0, 21, 2), seed)


def test_fsum_mean_and_se():
    a = np.array([[1e16, 1.0, -1e16, 1.0]])
    assert ex.fsum_mean(a)[0] == 0.5
    m, se = ex.mean_and_se(np.array([1.0, 2.0, 3.0, 4.0]))
    assert m == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_ensemble_independent_of_threads_and_batches():
    cfg = SchemeConfig(0.01, 0.05)
    w = benchmark_initial(G)
    a = ex.run_ensemble(G, w, ApproxParams(), cfg, forcing(), 10, batch_size=4, threads=1)
    b = ex.run_ensemble(G, w, ApproxParams(), cfg, forcing(), 10, batch_size=4, threads=3)
    for k in a.diagnostics:
        np.testing.assert_array_equal(a.diagnostics[k], b.diagnostics[k])
    c = ex.run_ensemble(G, w, ApproxParams(), cfg, forcing(), 10, batch_size=10)
    np.testing.assert_allclose(a.diagnostics["mass"], c.diagnostics["mass"], rtol=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_rate_error():
    u = np.zeros(128, complex)
    u[0] = np.nan
    with pytest.raises(ex.BlowUpRateError):
        ex.run_ensemble(G, FieldPair(u, np.zeros(128)), ApproxParams(constants=LINEAR), SchemeConfig(0.01, 0.02),
                        forcing(), 4)


def test_zero_noise_drift_is_zero():
    zero = Forcing(None, None)
    est = ex.mc_drift_study(G, benchmark_initial(G), ApproxParams(), zero, 100, 0.1, 0.01,
                            selector=("mass", "I", "E"))
    for e in est.values():
        assert e.predicted_slope == 0.0
    # mass is conserved to round-off; I and E only carry the splitting error
    assert abs(est["mass"].measured_slope) < 1e-10
    for name in ("I", "E"):
        e = est[name]
        assert np.all(e.se < 1e-14)
        assert abs(e.measured_slope) * e.t_end < 1e-3 * abs(e.mean[0])


def test_mc_drift_requires_paths():
    with pytest.raises(ValueError):
        ex.mc_drift_study(G, benchmark_initial(G), ApproxParams(), forcing(), 50, 0.1, 0.01)


def test_drift_diagnostics_unknown_name():
    with pytest.raises(ValueError):
        ex.drift_diagnostics(None, None, ("momentum",))


def test_linear_mass_drift_small_ensemble():
    est = ex.mc_drift_study(G, FieldPair(np.zeros(128, complex), np.zeros(128)), ApproxParams(constants=LINEAR),
                            forcing(0.3), 400, 0.2, 0.02, selector=("mass", "mass_p2"))
    for e in est.values():
        assert abs(e.z) < 4


def test_linear_stochastic_small():
    nu = NoiseOperator.from_decay(G.half_length, 0.3, 2.0, 21, 1)
    checks = ex.linear_stochastic_study(G, nu, 300, 0.2, 0.02)
    assert [c.sigma for c in checks] == [0.0, 1.0]
    for c in checks:
        assert abs(c.z) < 4
        assert c.predicted == pytest.approx(0.2 * nu.hs_norm(c.sigma) ** 2)


def test_hierarchy_spec_validation():
    with pytest.raises(ValueError):
        ex.HierarchySpec((ApproxParams(K=2.0),))
    with pytest.raises(ValueError):
        ex.HierarchySpec((ApproxParams(K=2.0), ApproxParams(K=4.0)))
    with pytest.raises(ValueError):
        ex.HierarchySpec((ApproxParams(K=4.0), ApproxParams(K=2.0), ApproxParams()))
    with pytest.raises(ValueError):
        ex.HierarchySpec.ladder("beta", [1])
    spec = ex.HierarchySpec.ladder("n", [8, 4], ApproxParams(m=4))
    assert [p.n for p in spec.members] == [4, 8, math.inf]
    assert spec.reference.m == 4


def test_identical_members_have_zero_error():
    spec = ex.HierarchySpec((ApproxParams(), ApproxParams()))
    table = ex.converge_study(G, spec, benchmark_initial(G), SchemeConfig(0.01, 0.1), forcing())
    assert table.errors.tolist() == [0.0, 0.0]


def test_plateau_k_ladder_is_exact():
    spec = ex.HierarchySpec.ladder("K", [2, 4])
    table = ex.converge_study(G, spec, benchmark_initial(G, 0.5, 0.5), SchemeConfig(0.01, 0.2), forcing())
    assert np.all(table.errors <= 1e-10)
    assert table.nonincreasing()


def test_n_ladder_saturates_at_nyquist():
    spec = ex.HierarchySpec.ladder("n", [2, 4, 8], ApproxParams(m=2))
    table = ex.converge_study(G, spec, benchmark_initial(G), SchemeConfig(0.01, 0.1))
    assert table.saturation == G.nyquist == 8
    assert table.errors[2] == 0.0
    assert table.nonincreasing()


def test_deterministic_suite_linear():
    rep = ex.deterministic_suite(G, SchemeConfig(0.01, 0.2), ApproxParams(constants=PhysicalConstants(0, 1, 0)),
                                 convergence_dt=None)
    for name in ("mass",):
        assert rep["drift"][name] < 1e-12


def test_apriori_scan_small():
    rep = ex.apriori_scan(G, benchmark_initial(G), ApproxParams(), [0.05, 0.2], 20, 0.1, 0.01, num_modes=21)
    assert rep.blowups == 0
    assert rep.lhs[0] < rep.lhs[1]
    assert rep.rhs[0] < rep.rhs[1]
    assert rep.bounded()
