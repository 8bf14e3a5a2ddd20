"""Split-step solver: exact limits, convergence order, coherence statistics."""

import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from specklesim.grid import ComplexField, TransverseGrid, energy
from specklesim.medium import GaussianMedium
from specklesim.propagator import (
    BrownianScreens,
    ParaxialSanityWarning,
    PropagationPlan,
    free_space_propagate,
    make_incident,
    propagate,
    propagate_stack,
    split_screens,
)

pytestmark = pytest.mark.filterwarnings("ignore::specklesim.propagator.ParaxialSanityWarning")


def gaussian_beam(grid, waist=1.0):
    coords = grid.coords()
    rsq = sum(np.asarray(a, float) ** 2 for a in coords)
    return ComplexField(grid, np.exp(-rsq / (2 * waist**2)) + 0j)


# -- plan validation -----------------------------------------------------------


def test_plan_validation():
    with pytest.raises(ValueError, match="k0"):
        PropagationPlan(0.0, 1.0, 4)
    with pytest.raises(ValueError, match="thickness"):
        PropagationPlan(1.0, -1.0, 4)
    with pytest.raises(ValueError, match="nz"):
        PropagationPlan(1.0, 1.0, 0)
    with pytest.raises(ValueError, match="splitting"):
        PropagationPlan(1.0, 1.0, 4, splitting="verlet")


def test_plan_step_bound():
    med = GaussianMedium(1, 0.01, 1.0)
    # bound = lc * min(1, k0 lc)/4 = 0.25 here
    with pytest.raises(ValueError, match="step bound"):
        PropagationPlan(10.0, 10.0, 39, medium=med)
    plan = PropagationPlan(10.0, 10.0, 40, medium=med)
    assert plan.dz == 0.25
    # low-k0 medium tightens the bound through k0*lc
    with pytest.raises(ValueError, match="step bound"):
        PropagationPlan(0.1, 1.0, 39, medium=med)


# -- make_incident ---------------------------------------------------------------


def test_make_incident_identity_and_energy():
    g = TransverseGrid(1, 64, 0.5)
    f = gaussian_beam(g)
    out = make_incident(f, 0.0)
    assert np.array_equal(out.values, f.values)
    moved = make_incident(f, 4 * g.dx)
    back = make_incident(moved, -4 * g.dx)
    assert np.array_equal(back.values, f.values)
    assert energy(moved) == energy(f)
    with pytest.raises(ValueError, match="integer multiple"):
        make_incident(f, 0.3 * g.dx)


# -- free space ------------------------------------------------------------------


def test_free_space_zero_distance_identity():
    g = TransverseGrid(1, 64, 0.25)
    f = gaussian_beam(g)
    out = free_space_propagate(f, 10.0, 0.0)
    assert np.array_equal(out.values, f.values)


def test_free_space_validation():
    g = TransverseGrid(1, 64, 0.25)
    f = gaussian_beam(g)
    with pytest.raises(ValueError, match="non-negative"):
        free_space_propagate(f, 10.0, -1.0)
    with pytest.raises(ValueError, match="k0"):
        free_space_propagate(f, 0.0, 1.0)


def test_free_space_plane_wave_unchanged():
    g = TransverseGrid(1, 64, 0.25)
    f = ComplexField(g, np.ones(g.shape, dtype=complex))
    out = free_space_propagate(f, 10.0, 7.0)
    np.testing.assert_allclose(out.values, f.values, atol=1e-12)


def test_free_space_gaussian_closed_form():
    # waist 1, k0 = 100, distance 50: intensity radius sqrt(1.25)
    g = TransverseGrid(1, 512, 0.125)
    f = gaussian_beam(g, waist=1.0)
    k0, z = 100.0, 50.0
    out = free_space_propagate(f, k0, z)

    s = 1.0 + 1j * z / k0
    want = (1.0 / np.sqrt(s)) * np.exp(-g.axis**2 / (2 * s))
    np.testing.assert_allclose(out.values, want, atol=1e-9)

    intens = out.intensity()
    var = float(np.sum(g.axis**2 * intens) / np.sum(intens))
    radius = np.sqrt(2 * var)
    assert abs(radius - np.sqrt(1.25)) / np.sqrt(1.25) < 1e-6

    assert abs(energy(out) - energy(f)) < 1e-12 * energy(f)


def test_free_space_matches_direct_fresnel_quadrature():
    # independent route: trapezoid quadrature of the quadratic-phase kernel
    g = TransverseGrid(1, 512, 0.125)
    f = gaussian_beam(g, waist=1.0)
    k0, z = 100.0, 50.0
    out = free_space_propagate(f, k0, z)
    xs = np.arange(-8.0, 8.0, 0.002)
    u0 = np.exp(-(xs**2) / 2)
    pref = np.sqrt(k0 / (2j * np.pi * z))
    for x in [0.0, 0.75, 1.875]:
        kernel = np.exp(0.5j * k0 * (x - xs) ** 2 / z)
        want = pref * np.trapezoid(u0 * kernel, xs)
        got = out.values[g.radius_in_cells(x) + g.n // 2]
        assert abs(got - want) < 1e-5


# -- propagate: exact limits ------------------------------------------------------


def test_propagate_no_medium_equals_free_space():
    g = TransverseGrid(1, 128, 0.25)
    f = gaussian_beam(g)
    plan = PropagationPlan(10.0, 5.0, 8)
    a = propagate(f, plan)
    b = free_space_propagate(f, 10.0, 5.0)
    assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("splitting", ["strang", "lie"])
def test_propagate_zero_screens_is_free_space(splitting):
    g = TransverseGrid(1, 128, 0.25)
    f = gaussian_beam(g)
    med = GaussianMedium(1, 0.01, 1.0)
    plan = PropagationPlan(10.0, 5.0, 32, splitting=splitting, medium=med)
    out = propagate(f, plan, screens=lambda j: np.zeros(g.shape))
    ref = free_space_propagate(f, 10.0, 5.0)
    np.testing.assert_allclose(out.values, ref.values, atol=1e-12)


def test_propagate_unitary_and_deterministic():
    g = TransverseGrid(1, 256, 0.25)
    f = gaussian_beam(g, waist=4.0)
    med = GaussianMedium(1, 0.02, 1.0)
    plan = PropagationPlan(10.0, 6.0, 24, medium=med)
    scr = BrownianScreens(plan, g, master_seed=99, realization=5)
    out = propagate(f, plan, scr)
    assert abs(energy(out) - energy(f)) < 1e-10 * energy(f)
    again = propagate(f, plan, BrownianScreens(plan, g, 99, 5))
    assert np.array_equal(out.values, again.values)
    other = propagate(f, plan, BrownianScreens(plan, g, 99, 6))
    assert not np.array_equal(out.values, other.values)


def test_propagate_guards():
    g = TransverseGrid(1, 64, 0.25)
    f = gaussian_beam(g)
    med = GaussianMedium(1, 0.01, 1.0)
    plan = PropagationPlan(10.0, 1.0, 8, medium=med)
    with pytest.raises(ValueError, match="screens"):
        propagate(f, plan)
    with pytest.raises(ValueError, match="medium"):
        BrownianScreens(PropagationPlan(10.0, 1.0, 8), g, 0, 0)
    scr = BrownianScreens(plan, g, 0, 0)
    with pytest.raises(IndexError):
        scr(8)
    spec_field = ComplexField(g, f.values, kind="spectrum")
    with pytest.raises(ValueError, match="spatial"):
        propagate(spec_field, plan, scr)


def test_paraxial_warning():
    g = TransverseGrid(1, 64, 0.25)  # nyquist 12.57
    f = gaussian_beam(g)
    with pytest.warns(ParaxialSanityWarning):
        free = PropagationPlan(5.0, 1.0, 2)  # 0.5*k0 = 2.5 < nyquist
        propagate(f, free)


# -- convergence order -------------------------------------------------------------


def refinement_errors(splitting):
    g = TransverseGrid(1, 256, 0.25)
    f = gaussian_beam(g, waist=2.0)
    med = GaussianMedium(1, 0.02, 2.0)
    base = PropagationPlan(5.0, 8.0, 16, splitting=splitting, medium=med)
    scr = BrownianScreens(base, g, master_seed=31, realization=0)
    outs = []
    for factor in (1, 2, 4):
        plan = replace(base, nz=base.nz * factor)
        outs.append(propagate(f, plan, split_screens(scr, factor)).values)
    e1 = np.linalg.norm(outs[0] - outs[1])
    e2 = np.linalg.norm(outs[1] - outs[2])
    return e1, e2


def test_strang_second_order_on_refinement():
    e1, e2 = refinement_errors("strang")
    assert e1 > 0 and e2 > 0
    order = np.log2(e1 / e2)
    assert order >= 1.9


def test_lie_first_order_on_refinement():
    e1, e2 = refinement_errors("lie")
    order = np.log2(e1 / e2)
    assert 0.7 <= order <= 1.4


# -- statistics --------------------------------------------------------------------


@pytest.fixture(scope="module")
def plane_wave_ensemble():
    """2000 transmitted fields for a plane wave through a 1-d medium."""
    g = TransverseGrid(1, 512, 0.125)
    med = GaussianMedium(1, 0.016, 1.0)
    plan = PropagationPlan(10.0, 5.0, 20, medium=med)
    f = ComplexField(g, np.ones(g.shape, dtype=complex))
    fields = np.empty((2000, g.n), dtype=complex)
    for r in range(2000):
        scr = BrownianScreens(plan, g, master_seed=777, realization=r)
        fields[r] = propagate(f, plan, scr).values
    return g, med, plan, fields


def test_plane_wave_mutual_coherence(plane_wave_ensemble):
    # transmitted coherence at lag q decays with the covariance deficit at q
    g, med, plan, fields = plane_wave_ensemble
    for lag_cells in [4, 8, 16, 24]:  # 0.5, 1, 2, 3 correlation lengths
        q = lag_cells * g.dx
        prod = fields * np.conj(np.roll(fields, -lag_cells, axis=1))
        got = complex(prod.mean())
        decay = (med.cov0 - med.cov_at(q)) * plan.k0**2 * plan.thickness / 4.0
        want = np.exp(-decay)
        assert abs(got - want) <= 0.05 * want


def test_intensity_stationarity_chi2(plane_wave_ensemble):
    # intensity statistics must not depend on transverse position
    g, _, _, fields = plane_wave_ensemble
    intens = np.abs(fields[:64]) ** 2
    samples = intens[:, ::12]  # decimate to roughly independent cells
    left = samples[:, : samples.shape[1] // 2].ravel()
    right = samples[:, samples.shape[1] // 2 :].ravel()
    edges = np.quantile(np.concatenate([left, right]), [0.2, 0.4, 0.6, 0.8])
    lcounts, _ = np.histogram(left, bins=np.concatenate([[-np.inf], edges, [np.inf]]))
    rcounts, _ = np.histogram(right, bins=np.concatenate([[-np.inf], edges, [np.inf]]))
    _, pvalue, _, _ = chi2_contingency(np.array([lcounts, rcounts]))
    assert pvalue > 0.01


def test_mean_field_decay_quick():
    # small-ensemble sanity check of the coherent-amplitude damping rate
    grid = TransverseGrid(1, 256, 0.25)
    med = GaussianMedium(1, 0.016, 1.0)
    plan = PropagationPlan(10.0, 5.0, 20, medium=med)
    f = ComplexField(grid, np.ones(grid.shape, dtype=complex))
    acc = np.zeros(grid.shape, dtype=complex)
    reals = 600
    for r in range(reals):
        acc += propagate(f, plan, BrownianScreens(plan, grid, 4242, r)).values
    mean_amp = float(np.abs(acc.mean())) / reals
    want = np.exp(-med.cov0 * plan.k0**2 * plan.thickness / 8.0)
    assert mean_amp == pytest.approx(want, rel=0.08)


# -- stack propagation ---------------------------------------------------------------


def test_stack_matches_single_runs():
    g = TransverseGrid(1, 128, 0.25)
    med = GaussianMedium(1, 0.02, 1.0)
    plan = PropagationPlan(10.0, 4.0, 16, medium=med)
    base = gaussian_beam(g, waist=2.0)
    fields = [make_incident(base, s * g.dx) for s in (-8, 0, 8)]
    scr = BrownianScreens(plan, g, 55, 0)
    stacked = propagate_stack(fields, plan, scr)
    for f_in, f_out in zip(fields, stacked):
        single = propagate(f_in, plan, scr)
        np.testing.assert_allclose(f_out.values, single.values, atol=1e-12)
    assert propagate_stack([], plan, scr) == []


def test_stack_requires_common_grid():
    g1 = TransverseGrid(1, 128, 0.25)
    g2 = TransverseGrid(1, 64, 0.25)
    plan = PropagationPlan(10.0, 1.0, 4)
    with pytest.raises(ValueError, match="grid"):
        propagate_stack([gaussian_beam(g1), gaussian_beam(g2)], plan)
