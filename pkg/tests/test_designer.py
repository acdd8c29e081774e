import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cp3.core import Modulation, PulseSequence, leak_prob, populations, transfer_prob
from cp3.designer import (CompositePulseDesigner, DesignSpec, Family, NoSolutionError,
                          closed_form_nb2, design, equation_names, filter_value, make_result,
                          residual_names, residual_vector, solve_arbitrary_transfer, solve_exact,
                          solve_filtered)
from cp3.tables import lookup


def spec(fam, mod, n, cls=None, prob=1.0, leak=0):
    return DesignSpec(Family(fam), Modulation(mod), n, cls, prob, leak)


@pytest.mark.parametrize("args, message", [
    (("nb", "strength", 1), "N ≥ 2 required"),
    (("pb", "strength", 2), "N ≥ 3 required for passband sequences"),
    (("nb", "phase", 4), "odd number of pulses"),
    (("pb", "strength", 3, "b"), "needs N ≥ 4"),
    (("nb", "strength", 3, None, 1.5), r"\(0, 1\]"),
    (("nb", "strength", 3, None, 0.0), r"\(0, 1\]"),
])
def test_spec_validation(args, message):
    with pytest.raises(ValueError, match=message):
        spec(*args)


@pytest.mark.parametrize("s, names", [
    (spec("nb", "strength", 5), ["xt4", "xt6", "xt8", "xt10"]),
    (spec("pb", "strength", 5, "b"), ["x2", "x4", "xt4", "xt6"]),
    (spec("bb", "strength", 4), ["x2", "x4", "x6"]),
    (spec("nb", "phase", 3), ["xt4", "xt6", "xt8", "xt10"]),
    (spec("pb", "phase", 3), ["x2", "x4", "xt4", "xt6"]),
    (spec("bb", "phase", 3), ["x2", "x4", "x6", "x8"]),
    (spec("nb", "strength", 5, prob=0.5, leak=1), ["xt4", "xt6", "y2", "yt2"]),
    (spec("pb", "strength", 5, "a", 0.5, 1), ["x2", "xt4", "y2", "yt2"]),
    (spec("nb", "phase", 5, prob=0.5, leak=2), ["xt4", "xt6", "xt8", "y2", "y4", "yt2", "yt4"]),
    (spec("pb", "phase", 5, "b", 0.5, 2), ["x2", "x4", "xt4", "xt6", "y2", "y4", "yt2", "yt4"]),
])
def test_equation_names(s, names):
    assert equation_names(s) == names
    if s.modulation is Modulation.STRENGTH:
        # square systems once x0 is included
        assert len(residual_names(s)) == s.n_params


def test_residual_dimension_check():
    with pytest.raises(ValueError):
        residual_vector(np.zeros(3), spec("nb", "strength", 2))


def test_snb2_printed_residuals():
    r = residual_vector(lookup("S-NB2").params, spec("nb", "strength", 2))
    assert np.max(np.abs(r)) < 1e-3


def test_snb5_transfer_exact():
    r = residual_vector(lookup("S-NB5").params, spec("nb", "strength", 5))
    assert abs(r[0]) < 1e-14


def test_two_pulse_branch_sets_first_residual(rng):
    for t2 in rng.uniform(0, 2 * np.pi, 5):
        r = residual_vector([t2 + np.pi / 4, t2], spec("nb", "strength", 2))
        assert abs(r[0]) < 1e-12


def test_closed_form_nb2():
    t = closed_form_nb2() / np.pi
    assert t == pytest.approx([0.6930, 0.4430], abs=1e-4)
    assert np.max(np.abs(residual_vector(closed_form_nb2(), spec("nb", "strength", 2)))) < 1e-12


def test_numeric_nb2_matches_closed_form_profile():
    s = spec("nb", "strength", 2)
    res = solve_exact(s, n_starts=10, random_state=0, use_closed_form=False)
    assert res.max_residual < 1e-8
    eps = np.linspace(-1, 1, 201)
    ref = populations(PulseSequence.strength(closed_form_nb2()), eps)[:, 1]
    assert np.max(np.abs(populations(res.sequence, eps)[:, 1] - ref)) < 1e-8


def test_nb2_symmetries_share_profile():
    t = closed_form_nb2()
    eps = np.linspace(-1, 1, 101)
    ref = populations(PulseSequence.strength(t), eps)[:, 1]
    for alt in (np.pi - t, -t, t + np.pi):
        assert np.max(np.abs(populations(PulseSequence.strength(alt), eps)[:, 1] - ref)) < 1e-10


@pytest.mark.parametrize("s", [spec("nb", "strength", 3), spec("pb", "strength", 4, "a"),
                               spec("nb", "phase", 3)])
def test_solve_exact_converges(s):
    res = solve_exact(s, n_starts=8, random_state=1)
    assert res.max_residual < 1e-8
    assert set(res.residuals) == set(residual_names(s))
    assert res.solver_report["converged"] >= 1


def test_residuals_recomputed_from_scratch():
    res = solve_exact(spec("nb", "strength", 3), n_starts=5, random_state=2)
    fresh = residual_vector(res.params, res.spec)
    assert np.allclose(fresh, [res.residuals[k] for k in residual_names(res.spec)], atol=1e-10)


def test_determinism():
    a = solve_exact(spec("nb", "strength", 3), n_starts=6, random_state=7)
    b = solve_exact(spec("nb", "strength", 3), n_starts=6, random_state=7)
    assert np.array_equal(a.params, b.params)


def test_no_solution_raises():
    with pytest.raises(NoSolutionError, match="no exact solution found; use solve_filtered"):
        solve_exact(spec("nb", "strength", 4), n_starts=1, random_state=0, tol=1e-300)


def test_filtered_rejects_exact_path():
    with pytest.raises(ValueError):
        solve_exact(spec("pb", "phase", 3))


def test_filter_value_formula():
    p = lookup("P-PB3").params
    s = spec("pb", "phase", 3)
    r = dict(zip(residual_names(s), residual_vector(p, s)))
    expected = (np.exp(-2) * abs(r["x2"]) + np.exp(-4) * (abs(r["x4"]) + abs(r["xt4"]))
                + np.exp(-6) * abs(r["xt6"]))
    assert filter_value(p, s) == pytest.approx(expected, rel=1e-12)


def test_solve_filtered_small():
    s = spec("pb", "phase", 3)
    res = solve_filtered(s, n_starts=6, random_state=0, n_refine=2)
    assert res.filter_value == pytest.approx(filter_value(res.params, s), rel=1e-9)
    assert abs(res.residuals["x0"]) < 1e-12


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the printed P-PB3 and P-BB3 rows are not filter minima: "
                                       "the search reaches filter values 20-30% lower")
@pytest.mark.parametrize("label", ["P-PB3", "P-BB3"])
def test_printed_filter_rows_within_5_percent(label):
    entry = lookup(label)
    best = solve_filtered(entry.spec, n_starts=60, random_state=0)
    printed = filter_value(entry.params, entry.spec)
    assert abs(printed - best.filter_value) <= 0.05 * best.filter_value


def test_arbitrary_transfer_snb5():
    s = spec("nb", "strength", 5, prob=0.5)
    res = solve_arbitrary_transfer(s, n_starts=10, random_state=0)
    assert res.spec.suppress_leakage == 1
    assert transfer_prob(res.sequence) == pytest.approx(0.5, abs=1e-9)
    assert leak_prob(res.sequence) < 1e-6


def test_arbitrary_transfer_full_limit():
    res = design(spec("nb", "strength", 5, leak=1), n_starts=10, random_state=0)
    eps = np.linspace(-1, 1, 401)
    p = populations(res.sequence, eps)[:, 1]
    assert p.max() == pytest.approx(1.0, abs=1e-9)
    assert p[200] == pytest.approx(1.0, abs=1e-9)
    assert max(p[0], p[-1]) < 1e-6


def test_table5_column_snb5():
    seq = lookup("Sa-NB5@P=0.5").sequence
    r = residual_vector(lookup("Sa-NB5@P=0.5").params, spec("nb", "strength", 5, prob=0.5, leak=1))
    assert np.max(np.abs(r)) < 2e-3
    assert populations(seq, np.linspace(-1, 1, 2001))[:, 2].max() < 0.05


def test_make_result_to_dict():
    res = make_result(closed_form_nb2(), spec("nb", "strength", 2))
    d = res.to_dict()
    assert d["params_pi"] == pytest.approx([0.6930, 0.4430], abs=1e-4)
    assert d["label"] == "S-NB2"


class TestEstimator:
    def test_fit_predict(self):
        est = CompositePulseDesigner(n_pulses=2).fit()
        assert est.predict([0.0, 1.0]) == pytest.approx([1.0, 0.0], abs=1e-12)
        assert est.transform([0.2]).sum() == pytest.approx(1.0)
        assert est.predict_leakage([0.0])[0] < 1e-20

    def test_clone_and_params(self):
        est = CompositePulseDesigner(family="pb", n_pulses=4, pb_class="a", random_state=3)
        assert clone(est).get_params() == est.get_params()

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            CompositePulseDesigner().predict([0.0])

    def test_bad_input(self):
        est = CompositePulseDesigner(n_pulses=2).fit()
        with pytest.raises(ValueError):
            est.predict([np.nan])
