import numpy as np
import pytest

from cp3.core import (F, ErrorContext, Pulse, PulseSequence, compose, compose_many, populations,
                      propagator, unitarity_error)
from cp3.profile import ProfileCurve, sweep, widths
from cp3.robustness import (CONTOUR_LEVELS, ConvergenceError, ErrorKind, ErrorModel,
                            apply_phase_error, integrate_tdse, reference_coupling,
                            sigmoid_waveform, sweep2d, waveform_profile)

EPS = np.linspace(-1, 1, 201)

# max |P_eta=100 - P_ideal| for P-NB5 measured on this grid (0.102); the
# bound leaves a small margin for platform round-off
PNB5_ETA100_BOUND = 0.11


def test_phase_difference_immunity(table):
    seq = table("S-NB5")
    ref = populations(seq, EPS)[:, F]
    for d in np.linspace(-0.2, 0.2, 9):
        moved = apply_phase_error(seq, ErrorModel("phase-difference", d))
        assert np.max(np.abs(populations(moved, EPS)[:, F] - ref)) < 1e-12


def test_zero_error_is_identity(table):
    seq = table("P-NB5")
    moved = apply_phase_error(seq, ErrorModel("phase-pair", 0.0))
    assert np.allclose(moved.phases, seq.phases)
    assert np.allclose(moved.thetas, seq.thetas)


def test_phase_pair_keeps_inversion(table):
    moved = apply_phase_error(table("P-NB5"), ErrorModel("phase-pair", 0.1))
    assert abs(compose(moved)[F, 0]) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_kind_mismatch(table):
    with pytest.raises(ValueError):
        apply_phase_error(table("S-NB5"), ErrorModel("phase-pair", 0.1))
    with pytest.raises(ValueError):
        apply_phase_error(table("P-NB5"), ErrorModel("phase-difference", 0.1))
    with pytest.raises(ValueError):
        ErrorModel("waveform", 0.0)


def test_global_phase_invariance(rng):
    seq = PulseSequence.strength(rng.uniform(0, 2 * np.pi, 4))
    shifted = PulseSequence(tuple(Pulse(p.theta, p.phi + 0.7, p.varphi - 1.3) for p in seq), None)
    assert np.allclose(populations(shifted, EPS), populations(seq, EPS), atol=1e-12)


def test_zero_detuning_row_matches_profile(table):
    seq = table("S-NB5")
    grid = sweep2d(seq, "detuning", (-1, 1), (0, 0.05), (201, 6))
    assert np.max(np.abs(grid.probability[0] - sweep(seq, -1, 1, 201).values)) < 1e-12


def test_detuning_keeps_width(table):
    seq = table("S-NB5")
    w0 = widths(seq).W
    grid = sweep2d(seq, "detuning", (-1.2, 1.2), (0, 0.05), (2401, 6))
    for i in range(grid.errors.size):
        assert widths(grid.row(i)).W == pytest.approx(w0, rel=0.10)


def test_pnb5_narrowband_under_detuning(table):
    seq = table("P-NB5")
    det = 0.15 * reference_coupling()
    eps = np.concatenate([np.linspace(-1, -0.8, 51), np.linspace(0.8, 1, 51)])
    assert populations(seq, eps, det)[:, F].max() < 0.1


def test_grid_csv_and_contours(table):
    grid = sweep2d(table("S-NB5"), "phase-difference", (-1, 1), (-0.2, 0.2), (101, 3))
    lines = grid.to_csv().strip().split("\n")
    assert lines[0] == "eps,error,probability"
    assert len(lines) == 1 + 3 * 101
    assert [float(x) for x in lines[1].split(",")[:2]] == [-1.0, -0.2]
    c = grid.contours()
    assert tuple(c) == CONTOUR_LEVELS
    assert all(len(pts) > 0 for pts in c.values())


def test_waveform_plateaus_and_continuity(table):
    seq = table("S-NB3")
    wf = sigmoid_waveform(seq, 500.0)
    mids = np.array([0.5, 1.5, 2.5])
    steps = np.abs(np.diff([p.omega for p in seq]))
    dev = np.abs(wf.controls(mids)["omega"] - [p.omega for p in seq])
    assert np.all(dev < 1e-3 * steps.max())
    fine = wf.controls(np.linspace(0, 3, 30001))["omega"]
    assert np.max(np.abs(np.diff(fine))) < 0.05 * steps.max()
    # lambda is not smoothed: exact plateau values away from the edges
    assert np.allclose(wf.controls(mids + 0.3)["lam"], [p.lam for p in seq], atol=1e-14)


def test_waveform_boundary_tail(table):
    seq = table("S-NB3")
    eta = 40.0
    wf = sigmoid_waveform(seq, eta)
    first, last = seq.pulses[0].omega, seq.pulses[-1].omega
    c = wf.controls([0.0, 3.0])["omega"]
    scale = np.abs(np.diff([p.omega for p in seq])).sum()
    assert abs(c[0] - first) <= scale * np.exp(-eta / 2)
    assert abs(c[1] - last) <= scale * np.exp(-eta / 2)


def test_waveform_requires_modulation(table):
    seq = PulseSequence(tuple(table("S-NB3")), None)
    with pytest.raises(ValueError):
        sigmoid_waveform(seq, 10.0)


def test_constant_controls_match_propagator():
    seq = PulseSequence.strength([0.6])
    wf = sigmoid_waveform(seq, 10.0)
    u = integrate_tdse(wf, [0.0, 0.3], dt=0.01)
    for k, e in enumerate([0.0, 0.3]):
        assert np.allclose(u[k], propagator(seq.pulses[0], ErrorContext(eps=e)), atol=1e-9)


def test_steep_limit_matches_compose(table):
    seq = table("S-NB3")
    eps = np.linspace(-1, 1, 21)
    u = integrate_tdse(sigmoid_waveform(seq, 1e6), eps, dt=1e-3)
    assert np.max(np.abs(np.abs(u[:, F, 0]) ** 2 - populations(seq, eps)[:, F])) < 1e-3
    assert unitarity_error(u) < 1e-9


def test_second_order_convergence(table):
    wf = sigmoid_waveform(table("S-NB3"), 10.0)
    eps = np.array([0.1, 0.4])
    ref = integrate_tdse(wf, eps, dt=1e-4, check=False)[:, F, 0]
    e1 = np.max(np.abs(integrate_tdse(wf, eps, dt=0.02, check=False)[:, F, 0] - ref))
    e2 = np.max(np.abs(integrate_tdse(wf, eps, dt=0.01, check=False)[:, F, 0] - ref))
    assert np.log2(e1 / e2) == pytest.approx(2.0, abs=0.2)


def test_convergence_error_suggests_dt(table):
    wf = sigmoid_waveform(table("S-NB3"), 10.0)
    with pytest.raises(ConvergenceError, match="try dt"):
        integrate_tdse(wf, [0.2], dt=0.2)


@pytest.mark.slow
def test_snb5_severe_distortion_keeps_width(table):
    seq = table("S-NB5")
    eps = np.linspace(-1, 1, 401)
    p = waveform_profile(seq, 10.0, eps, dt=1e-3, check=False)
    w = widths(ProfileCurve(eps, np.clip(p, 0, 1))).W
    assert w == pytest.approx(widths(seq).W, rel=0.15)


@pytest.mark.slow
def test_pnb5_eta100_deviation(table):
    seq = table("P-NB5")
    p = waveform_profile(seq, 100.0, EPS, dt=2.5e-4)
    assert np.max(np.abs(p - populations(seq, EPS)[:, F])) < PNB5_ETA100_BOUND


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the reproduced maximum deviation at eta = 100 is 0.10")
def test_pnb5_eta100_provisional_bound(table):
    seq = table("P-NB5")
    p = waveform_profile(seq, 100.0, EPS, dt=2.5e-4)
    assert np.max(np.abs(p - populations(seq, EPS)[:, F])) < 0.05


def test_compose_many_consistency(table):
    seq = table("P-PB5b")
    eps = np.array([-0.3, 0.0, 0.7])
    stack = compose_many(seq, eps)
    for k, e in enumerate(eps):
        assert np.allclose(stack[k], compose(seq, ErrorContext(eps=e)), atol=1e-14)


def test_error_kind_values():
    assert {k.value for k in ErrorKind} == {"phase-difference", "phase-pair", "detuning", "waveform"}
