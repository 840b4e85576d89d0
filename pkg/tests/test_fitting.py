import dataclasses

import numpy as np
import pytest
from conftest import generate, load_config
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from casimircal.errors import DomainError, FitError
from casimircal.fitting import (
    CurvatureSample,
    curvature_samples,
    distance_parameters,
    effective_mass_from_gamma,
    exponent_chi2_scan,
    fit_curvature_powerlaw,
    fit_fast_approach,
    fit_parabola,
    gamma_from_effective_mass,
    group_by_position,
    residual_analysis,
    split_by_bias,
    truncation_scan,
)
from casimircal.models import Geometry, Resonator, curvature_coefficient
from casimircal.synth import (
    CalibrationPoint,
    ConstantV0,
    NoiseModel,
    PiezoMap,
    PureCoulomb,
    Scenario,
    gap_to_piezo,
    generate_calibration_run,
    generate_fast_approach_run,
    piezo_to_gap,
)

CYL = Geometry.cylinder(a=12e-3, L=4e-3)
RES = Resonator(m_eff=1e-3, nu0=1e3)
BETA = 91.9e-9
PIEZO = PiezoMap(beta=BETA, V0_PZT=79.52)


def synthetic_samples(gamma, V0, q, V, sigma=1.0, offset=0.0):
    V = np.asarray(V, dtype=float)
    K = gamma * (V0 - V) ** (-q) + offset
    return [CurvatureSample(v, k, sigma, 0.0, 0.0, 1.0) for v, k in zip(V, K)]


class TestParabola:
    def sweep(self, K, V0, nu0_sq, V, sigma=0.0):
        return [CalibrationPoint(10.0, v, float(np.sqrt(nu0_sq - K * (v - V0) ** 2)), sigma, i)
                for i, v in enumerate(V)]

    @pytest.mark.parametrize("V", [[-1.0, 0.0, 1.0], np.linspace(-0.4, 0.7, 11), [0.1, 0.3, 0.35, 2.0]])
    def test_exact_inversion(self, V):
        s = fit_parabola(self.sweep(123.4, 0.163, 1e6, V))
        assert_allclose([s.K_el, s.V0, s.nu0_sq], [123.4, 0.163, 1e6], rtol=1e-9)
        assert s.flags == ()

    def test_weighted_exact(self):
        s = fit_parabola(self.sweep(50.0, -0.2, 1e4, np.linspace(-1, 1, 7), sigma=1e-3))
        assert_allclose([s.K_el, s.V0], [50.0, -0.2], rtol=1e-9)
        assert s.sigma_K > 0 and s.sigma_V0 > 0

    def test_offset_absorbed(self):
        V = np.linspace(-0.5, 0.5, 9)
        pts = self.sweep(80.0, 0.05, 1e6, V)
        shifted = [dataclasses.replace(p, nu=float(np.sqrt(p.nu**2 + 500.0))) for p in pts]
        a, b = fit_parabola(pts), fit_parabola(shifted)
        assert_allclose(b.K_el, a.K_el, rtol=1e-9)
        assert_allclose(b.nu0_sq - a.nu0_sq, 500.0, rtol=1e-6)

    def test_non_attractive_flag(self):
        pts = [CalibrationPoint(1.0, v, float(np.sqrt(1e6 + 10 * v * v)), 0.0, 0) for v in (-1.0, 0.0, 1.0, 2.0)]
        assert "non-attractive curvature" in fit_parabola(pts).flags

    def test_too_few_biases(self):
        with pytest.raises(FitError):
            fit_parabola(self.sweep(1.0, 0.0, 1e6, [0.0, 1.0]))

    def test_mixed_positions(self):
        pts = self.sweep(1.0, 0.0, 1e6, [0.0, 1.0, 2.0])
        pts[0] = dataclasses.replace(pts[0], V_PZT=11.0)
        with pytest.raises(FitError):
            fit_parabola(pts)

    def test_v0_jitter_distribution(self):
        # repeated sweeps with Gaussian V0 jitter: fitted V0 mean 0.163 within its standard error
        sc = Scenario(RES, PureCoulomb(), ConstantV0(0.163), NoiseModel(v0_sigma=0.01, seed=11), CYL)
        V = gap_to_piezo(PIEZO, np.full(300, 1e-6) * np.linspace(1, 1.0001, 300))
        pts = generate_calibration_run(sc, PIEZO, V, np.linspace(-0.5, 0.8, 9))
        v0 = np.array([fit_parabola(g).V0 for g in group_by_position(pts).values()])
        assert abs(v0.mean() - 0.163) < 3 * v0.std(ddof=1) / np.sqrt(len(v0))

    def test_sigma_matches_scatter(self):
        # propagated sigma_K agrees with the Monte Carlo scatter of K_el
        K_fit, sig = [], []
        for seed in range(200):
            sc = Scenario(RES, PureCoulomb(), ConstantV0(0.1), NoiseModel(sigma_nu=1e-3, seed=seed), CYL)
            s = fit_parabola(generate_calibration_run(sc, PIEZO, [78.0], np.linspace(-1, 1, 11)))
            K_fit.append(s.K_el)
            sig.append(s.sigma_K)
        assert_allclose(np.std(K_fit, ddof=1), np.mean(sig), rtol=0.15)


class TestPowerLaw:
    V = np.linspace(10.0, 75.0, 25)

    def test_exact_free_q(self):
        S = synthetic_samples(6e4, 79.52, 2.5, self.V, sigma=0.01)
        r = fit_curvature_powerlaw(S)
        assert_allclose([r.params["gamma"], r.params["V0_PZT"], r.params["q"]], [6e4, 79.52, 2.5], rtol=1e-8)
        K = np.array([s.K_el for s in S])
        assert r.chi2 < 1e-12 * np.sum(K**2 / 0.01**2)
        assert r.dof == len(S) - 3 and r.free == ("gamma", "V0_PZT", "q")

    def test_exact_with_offset(self):
        S = synthetic_samples(6e4, 79.52, 1.7, self.V, sigma=0.01, offset=3.0)
        r = fit_curvature_powerlaw(S, offset=True)
        assert_allclose([r.params["gamma"], r.params["V0_PZT"], r.params["q"], r.params["offset"]],
                        [6e4, 79.52, 1.7, 3.0], rtol=1e-7)

    def test_fixed_q(self):
        S = synthetic_samples(2e3, 80.0, 2.5, self.V)
        r = fit_curvature_powerlaw(S, q=2.5)
        assert r.params["q"] == 2.5 and r.sigmas["q"] == 0.0
        assert_allclose([r.params["gamma"], r.params["V0_PZT"]], [2e3, 80.0], rtol=1e-9)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.8, 4.0), st.floats(1.0, 50.0))
    def test_exact_recovery_property(self, q, gap):
        V0 = self.V.max() + gap
        S = synthetic_samples(1e3, V0, q, self.V, sigma=1e-4)
        r = fit_curvature_powerlaw(S)
        assert_allclose([r.params["q"], r.params["V0_PZT"]], [q, V0], rtol=1e-6)

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(0)
        S = synthetic_samples(6e4, 79.52, 2.5, self.V, sigma=0.01)
        S = [dataclasses.replace(s, K_el=s.K_el + rng.normal(0, 0.01)) for s in S]
        a = fit_curvature_powerlaw(S)
        b = fit_curvature_powerlaw([dataclasses.replace(s, sigma_K=0.07) for s in S])
        assert_allclose(b.params["q"], a.params["q"], rtol=1e-7)
        assert_allclose(b.chi2 * 49, a.chi2, rtol=1e-7)
        # near-linear regime: uncertainties scale with sigma
        assert_allclose(b.sigmas["q"], 7 * a.sigmas["q"], rtol=1e-2)

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        S = synthetic_samples(6e4, 79.52, 2.5, self.V, sigma=0.5)
        S = [dataclasses.replace(s, K_el=s.K_el + rng.normal(0, 0.5)) for s in S]
        a = fit_curvature_powerlaw(S)
        b = fit_curvature_powerlaw(list(rng.permutation(S)))
        for k in a.params:
            assert_allclose(b.params[k], a.params[k], rtol=1e-9)

    def test_hessian_errors_match_gauss_newton(self):
        # near-linear regime: curvature errors equal the linearized covariance
        rng = np.random.default_rng(2)
        S = synthetic_samples(6e4, 79.52, 2.5, self.V, sigma=0.05)
        S = [dataclasses.replace(s, K_el=s.K_el + rng.normal(0, 0.05)) for s in S]
        r = fit_curvature_powerlaw(S)
        g, V0, q = r.params["gamma"], r.params["V0_PZT"], r.params["q"]
        x = V0 - self.V
        t = x ** (-q)
        J = np.column_stack([t, -g * q * t / x, -g * t * np.log(x)]) / 0.05
        gn = np.sqrt(np.diag(np.linalg.inv(J.T @ J)))
        assert_allclose([r.sigmas["gamma"], r.sigmas["V0_PZT"], r.sigmas["q"]], gn, rtol=0.05)
        assert r.flags == []

    def test_contact_voltage_above_data(self):
        rng = np.random.default_rng(3)
        S = synthetic_samples(6e4, 79.52, 2.5, self.V, sigma=50.0)
        S = [dataclasses.replace(s, K_el=s.K_el + rng.normal(0, 50.0)) for s in S]
        try:
            r = fit_curvature_powerlaw(S)
        except FitError:
            return
        assert r.params["V0_PZT"] > self.V.max()

    def test_too_few_samples(self):
        with pytest.raises(FitError):
            fit_curvature_powerlaw(synthetic_samples(1.0, 80.0, 2.5, [1.0, 2.0, 3.0]))

    def test_zero_sigma_rejected(self):
        with pytest.raises(FitError):
            fit_curvature_powerlaw(synthetic_samples(1.0, 80.0, 2.5, self.V, sigma=0.0))

    def test_trace_on_failure(self):
        # flat data: the contact voltage runs away to the edge of its range
        S = [CurvatureSample(v, 1.0, 0.1, 0.0, 0.0, 1.0) for v in self.V]
        with pytest.raises(FitError) as info:
            fit_curvature_powerlaw(S, q=2.5)
        assert info.value.trace


class TestExponentScan:
    def test_coulomb_minimum(self):
        S = synthetic_samples(6e4, 79.52, 2.5, np.linspace(10, 75, 25), sigma=0.01)
        scan = exponent_chi2_scan(S, np.arange(2.0, 3.0001, 0.01))
        assert abs(scan.q_best - 2.5) <= 0.01
        assert not scan.plateau

    def test_weight_scaling(self):
        rng = np.random.default_rng(4)
        S = synthetic_samples(6e4, 79.52, 2.5, np.linspace(10, 75, 25), sigma=1.0)
        S = [dataclasses.replace(s, K_el=s.K_el + rng.normal(0, 1.0)) for s in S]
        grid = np.arange(1.5, 3.5001, 0.05)
        a = exponent_chi2_scan(S, grid)
        b = exponent_chi2_scan([dataclasses.replace(s, sigma_K=3.0) for s in S], grid)
        assert a.q_best == b.q_best
        assert_allclose(a.reduced_chi2, 9 * b.reduced_chi2, rtol=1e-6)

    def test_tie_break(self):
        S = synthetic_samples(6e4, 79.52, 2.5, np.linspace(10, 75, 25), sigma=0.01)
        scan = exponent_chi2_scan(S, [2.6, 2.5, 2.5, 3.0])
        assert scan.q_best == 2.5 and scan.plateau

    def test_grid_domain(self):
        S = synthetic_samples(6e4, 79.52, 2.5, np.linspace(10, 75, 25))
        with pytest.raises(DomainError):
            exponent_chi2_scan(S, [0.0, 1.0])
        with pytest.raises(DomainError):
            exponent_chi2_scan(S, [1.0, 6.5])

    def test_default_grid(self):
        S = synthetic_samples(6e4, 79.52, 2.5, np.linspace(10, 75, 25), sigma=0.01)
        scan = exponent_chi2_scan(S)
        assert len(scan.q) == 351 and scan.q[0] == 0.5 and scan.q[-1] == 4.0
        assert scan.q_best == 2.5

    def test_scan_agrees_with_free_fit(self, extra_power_samples):
        # in the dip region the profile minimum sits at the free-exponent optimum
        S = sorted(extra_power_samples[10], key=lambda s: -s.V_PZT)[45:]
        free = fit_curvature_powerlaw(S)
        scan = exponent_chi2_scan(S, np.arange(1.5, 3.5001, 0.01))
        assert abs(scan.q_best - free.params["q"]) <= 0.01


class TestExtraPowerWindow:
    """Extra-power data whose closest gap sits near the crossover of the two terms."""

    def window(self, extra_power_samples):
        piezo = load_config("extra_power_ratio10").piezo()
        return piezo, [s for s in extra_power_samples[10] if 2.5e-6 <= piezo_to_gap(piezo, s.V_PZT) <= 20e-6]

    def test_free_exponent_below_coulomb_with_positive_offset(self, extra_power_samples):
        piezo, S = self.window(extra_power_samples)
        r = fit_curvature_powerlaw(S)
        assert r.params["q"] < 2.5 - 10 * r.sigmas["q"]
        _, _, d0, s_d0 = distance_parameters(r, BETA, piezo.V0_PZT)
        assert d0 > 10 * s_d0 > 0

    def test_scan_minimum_below_coulomb(self, extra_power_samples):
        _, S = self.window(extra_power_samples)
        assert exponent_chi2_scan(S).q_best < 2.4


class TestTruncation:
    def test_coulomb_flat(self):
        cfg = load_config("coulomb_curvature")
        sc = dataclasses.replace(cfg.scenario(), noise=NoiseModel(sigma_nu=2e-4, inject=False))
        S = curvature_samples(generate_calibration_run(sc, cfg.piezo(), cfg.V_PZT(), cfg.V_bias()))
        rows = truncation_scan(S, beta=BETA)
        assert len(rows) == len(S) - 6 + 1
        assert_allclose([r.free.params["q"] for r in rows], 2.5, rtol=1e-7)

    def test_nominal_distances(self):
        S = synthetic_samples(6e4, 79.52, 2.5, np.linspace(10, 75, 12), sigma=0.01)
        rows = truncation_scan(S, beta=BETA, stride=2)
        assert [r.n_removed for r in rows] == [0, 2, 4, 6]
        assert_allclose(rows[0].d_min_nominal, BETA * (79.52 - 75.0), rtol=1e-8)
        assert all(r.fixed is not None for r in rows)

    def test_min_samples(self):
        with pytest.raises(FitError):
            truncation_scan(synthetic_samples(1.0, 80.0, 2.5, [1.0, 2.0, 3.0, 4.0, 5.0]), beta=BETA)

    def test_extra_power_shape(self, extra_power_samples):
        rows = truncation_scan(extra_power_samples[10], beta=BETA, stride=4, with_fixed=False)
        q = np.array([r.free.params["q"] for r in rows])
        assert q[0] > 4.5 and q.min() < 2.5 and abs(q[-1] - 2.5) < 0.05


class TestFastApproach:
    def test_noiseless_coulomb(self):
        sc = Scenario(Resonator(1e-3, 1e4), PureCoulomb(), ConstantV0(0.163), NoiseModel(sigma_nu=1e-5, inject=False), CYL)
        V = np.sort(gap_to_piezo(PIEZO, np.geomspace(0.3e-6, 10e-6, 60)))
        pts = generate_fast_approach_run(sc, PIEZO, V, 4.0)
        r = fit_fast_approach(pts)
        A = curvature_coefficient(CYL, sc.resonator, BETA) * (4.0 - 0.163) ** 2
        assert_allclose([r.params["q"], r.params["V0_PZT"], r.params["A"], r.params["nu0_sq"]],
                        [2.5, 79.52, A, 1e8], rtol=1e-8)

    def test_truncation_error_bars_grow(self):
        cfg = load_config("fast_approach_coulomb")
        sc = dataclasses.replace(cfg.scenario(), noise=NoiseModel(sigma_nu=1e-5, seed=5))
        pts = sorted(generate_fast_approach_run(sc, cfg.piezo(), cfg.V_PZT(), 4.0), key=lambda p: -p.V_PZT)
        sig = []
        for n in (0, 5, 10, 15, 20):
            r = fit_fast_approach(pts[n:])
            assert abs(r.params["q"] - 2.5) < 4 * r.sigmas["q"]
            sig.append(r.sigmas["q"])
        assert np.all(np.diff(sig) > 0)

    def test_needs_constant_bias(self):
        sc = Scenario(Resonator(1e-3, 1e4), PureCoulomb(), ConstantV0(0.0), geometry=CYL)
        pts = generate_fast_approach_run(sc, PIEZO, gap_to_piezo(PIEZO, np.geomspace(1e-6, 5e-6, 8)), [3.0, 4.0])
        with pytest.raises(FitError):
            fit_fast_approach(pts)
        assert sorted(split_by_bias(pts)) == [3.0, 4.0]


class TestEffectiveMass:
    def test_round_trip(self):
        g = gamma_from_effective_mass(1.7e-3, CYL, BETA)
        assert_allclose(effective_mass_from_gamma(g, CYL, BETA), 1.7e-3, rtol=1e-12)

    def test_matches_curvature_coefficient(self):
        # gamma is K_el at a 1 V piezo offset
        assert_allclose(gamma_from_effective_mass(1e-3, CYL, BETA), curvature_coefficient(CYL, RES, BETA), rtol=1e-12)

    @given(st.floats(1e-3, 1e6))
    def test_doubling_gamma_halves_mass(self, g):
        assert_allclose(effective_mass_from_gamma(2 * g, CYL, BETA), effective_mass_from_gamma(g, CYL, BETA) / 2)

    @pytest.mark.parametrize("g", [0.0, -1.0])
    def test_domain(self, g):
        with pytest.raises(DomainError):
            effective_mass_from_gamma(g, CYL, BETA)

    def test_inflated_by_extra_force(self, extra_power_samples):
        # fixed-2.5 fit with cutoff near the crossover: alpha below alpha1, so the implied mass exceeds truth
        cfg = load_config("extra_power_ratio10")
        S = sorted(extra_power_samples[10], key=lambda s: -s.V_PZT)
        d_star = 10 ** (1 / 2.5) * 1e-6
        kept = [s for s in S if piezo_to_gap(cfg.piezo(), s.V_PZT) >= d_star]
        r = fit_curvature_powerlaw(kept, q=2.5)
        alpha, _, d0, s_d0 = distance_parameters(r, BETA, cfg.piezo().V0_PZT)
        alpha1 = cfg.force_model().alpha1
        assert alpha < alpha1 and d0 > s_d0 > 0
        geom = Geometry.cylinder(a=12e-3, L=4e-3)
        m_true = effective_mass_from_gamma(alpha1 / BETA**2.5, geom, BETA)
        assert effective_mass_from_gamma(r.params["gamma"], geom, BETA) / m_true > 1


class TestResiduals:
    def setup_method(self):
        self.cfg = load_config("fast_approach_coulomb")
        self.piezo = self.cfg.piezo()

    def test_noise_free_zero(self):
        sc = dataclasses.replace(self.cfg.scenario(), noise=NoiseModel(sigma_nu=1e-5, inject=False))
        pts = generate_fast_approach_run(sc, self.piezo, self.cfg.V_PZT(), 4.0)
        ra = residual_analysis(pts, self.cfg.window("fit_window"), self.cfg.window("eval_window"),
                               beta=BETA, geom=CYL, v0=0.163)
        res = np.array([r.nu_sq_residual for r in ra.rows])
        shift = np.array([p.nu**2 - 1e8 for p in pts])
        # floor: eps * nu0^2 against shifts of ~10 Hz^2 in the fit window, extrapolated
        assert np.max(np.abs(res)) < 1e-8 * np.max(np.abs(shift))
        assert_allclose(ra.m_eff, 1e-3, rtol=1e-7)
        F = np.array([r.force_residual for r in ra.rows])
        assert np.max(np.abs(F)) < 1e-12

    def test_force_anchor_and_sign(self):
        pts = generate(load_config("fast_approach_extra"))
        pts = [p for p in pts if p.V_bias == 4.0]
        fw = self.cfg.window("fit_window")
        ra = residual_analysis(pts, fw, self.cfg.window("eval_window"), beta=BETA, geom=CYL, v0=0.163)
        far = max(ra.rows, key=lambda r: r.d if fw[0] <= r.V_PZT <= fw[1] else -1)
        assert far.force_residual == 0.0
        near = min(ra.rows, key=lambda r: r.d)
        assert near.nu_sq_residual < 0 and near.force_residual > 0

    def test_no_geometry(self):
        pts = [p for p in generate(self.cfg) if p.V_bias == 3.0]
        ra = residual_analysis(pts, self.cfg.window("fit_window"), self.cfg.window("eval_window"), beta=BETA)
        assert np.isnan(ra.m_eff) and all(np.isnan(r.force_residual) for r in ra.rows)

    def test_small_window(self):
        pts = [p for p in generate(self.cfg) if p.V_bias == 3.0]
        with pytest.raises(FitError):
            residual_analysis(pts, (0.0, 1e-9), (-30.0, 77.0), beta=BETA)
