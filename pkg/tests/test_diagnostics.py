import numpy as np
import pytest

from thermistor_opt import FieldHistory, Mesh1D, OracleError, forward_solve
from thermistor_opt.diagnostics import (
    REFINEMENT_SEQUENCE,
    assembly_check,
    dense_reference_solve,
    energy_bound_report,
    linf_monitor,
    scheme_cross_check,
    star_norm_time_integral,
)

from conftest import make_params, uniform


def test_energy_of_zero_field(constant_case):
    p = constant_case
    u = FieldHistory(np.zeros((p.n_levels, p.n_elements + 1)), p.time_step, Mesh1D(p.n_elements))
    e = energy_bound_report(p, u)
    assert e.total == 0.0 and e.max_linf == 0.0


def test_energy_of_half_t_oracle(constant_case):
    p = constant_case
    u = forward_solve(p, uniform(p, 0.0))
    e = energy_bound_report(p, u)
    m, tau = p.box.m, p.time_step
    assert e.max_l2_sq == pytest.approx(0.25, abs=1e-12)
    assert e.gradient_part <= 1e-20
    # trapezoid in time of 2m(t/2)^2; tends to m/6 as tau -> 0
    assert e.boundary_part == pytest.approx(m / 2 * (1 / 3 + tau**2 / 6), rel=1e-10)
    assert e.boundary_part == pytest.approx(m / 6, rel=1e-3)
    assert e.star_part == pytest.approx(star_norm_time_integral(p, u), rel=1e-12)


def test_energy_refinement_is_stable():
    totals = []
    for n, steps in REFINEMENT_SEQUENCE:
        p = make_params("shifted_sine", n_elements=n, time_step=1.0 / steps)
        totals.append(energy_bound_report(p, forward_solve(p, uniform(p, 0.1))).total)
    assert max(totals) < 2 * min(totals)


def test_linf_monitor():
    u = FieldHistory(np.array([[0.0, -3.0], [1.0, 2.0]]), 0.5, Mesh1D(1))
    assert linf_monitor(u) == 3.0


def test_dense_oracle_half_t(constant_case):
    p = constant_case
    ref = dense_reference_solve(p, uniform(p, 0.0))
    assert np.max(np.abs(ref.levels - p.times[:, None] / 2)) <= 1e-12


def test_dense_oracle_pure_diffusion_agrees():
    p = make_params("shifted_sine", lam=0.0, u0=lambda x: np.sin(np.pi * x))
    beta = uniform(p, 0.5)
    gap = np.max(np.abs(dense_reference_solve(p, beta).levels - forward_solve(p, beta).levels))
    assert gap <= 1e-10


def test_dense_oracle_gap_is_first_order_in_tau():
    gaps = []
    for tau in (0.02, 0.01, 0.005):
        p = make_params("shifted_sine", horizon=2.0, time_step=tau)
        beta = uniform(p, 0.5)
        gaps.append(np.max(np.abs(dense_reference_solve(p, beta).levels - forward_solve(p, beta).levels)))
    ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
    assert all(1.8 < r < 2.2 for r in ratios)
    assert max(g / t for g, t in zip(gaps, (0.02, 0.01, 0.005))) < 0.1


def test_dense_oracle_limits():
    p = make_params(n_elements=201, time_step=0.5)
    with pytest.raises(ValueError):
        dense_reference_solve(p, uniform(p, 0.1))


def test_dense_oracle_reports_picard_failure(catalog_case):
    p = catalog_case.replace(horizon=0.1)
    with pytest.raises(OracleError, match="Picard"):
        dense_reference_solve(p, uniform(p, 0.1), max_picard=1)


def test_assembly_check_is_clean():
    res = assembly_check(10)
    assert res["mass"] <= 1e-15 and res["stiffness"] <= 1e-15


def test_cross_check_source_free():
    p = make_params("shifted_sine", lam=0.0)
    res = scheme_cross_check(p, uniform(p, 0.0))
    assert res.max_gap <= 1e-10
    assert res.level_gaps.shape == (p.n_levels,)


def test_cross_check_records_paper_divergence():
    p = make_params("shifted_sine", n_elements=20)
    res = scheme_cross_check(p, uniform(p, 0.1))
    assert res.paper_error is not None and "diverged" in res.paper_error
    assert res.as_dict()["max_gap"] is None


def test_cross_check_normalisation(catalog_case):
    p = catalog_case
    res = scheme_cross_check(p, uniform(p, 0.5))
    assert res.normalized_gap == pytest.approx(res.max_gap / (1 / 50 + 0.01))


@pytest.mark.xfail(strict=True, reason="paper-faithful mode is not exact on the constant-forcing oracle")
def test_cross_check_constant_oracle_both_modes(constant_case):
    p = constant_case
    res = scheme_cross_check(p, uniform(p, 0.0))
    assert res.max_gap <= 2e-12


@pytest.mark.xfail(strict=True, reason="normalized mode gap grows under refinement")
def test_cross_check_normalized_gap_bounded_under_refinement():
    out = []
    for n, steps in REFINEMENT_SEQUENCE:
        p = make_params("shifted_sine", horizon=2.0, n_elements=n, time_step=2.0 / steps)
        out.append(scheme_cross_check(p, uniform(p, 0.5)).normalized_gap)
    assert np.all(np.isfinite(out)) and max(out) <= 2 * min(out)


def test_diagnostics_do_not_mutate(catalog_case):
    p = catalog_case
    u = forward_solve(p, uniform(p, 0.3))
    before = u.levels.copy()
    energy_bound_report(p, u)
    linf_monitor(u)
    assert np.array_equal(before, u.levels)
