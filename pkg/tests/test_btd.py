import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dialectica.ranking import btd_fit, btd_normalized_ability, btd_probs, calibration
from dialectica.ranking.btd import btd_probs_array, build_problem, calibration_from_probs
from dialectica.ranking.matches import Match

from .oracles import davidson_probs, simulate_davidson

finite = st.floats(min_value=-8, max_value=8, allow_nan=False)
nus = st.floats(min_value=0.0, max_value=20.0, allow_nan=False)


@given(finite, finite, finite, nus)
def test_probs_match_textbook_davidson(si, sj, g, nu):
    ours = btd_probs(si, sj, g, nu)
    ref = davidson_probs(si, sj, g, nu)
    assert np.allclose(ours, ref, rtol=1e-10, atol=1e-14)


@given(finite, finite, finite, nus)
def test_probs_on_simplex(si, sj, g, nu):
    p = btd_probs(si, sj, g, nu)
    assert abs(sum(p) - 1.0) < 1e-12
    assert all(0.0 <= x <= 1.0 for x in p)


@given(finite, finite)
def test_zero_tie_scale_is_bradley_terry(si, sj):
    pw, pd, pl = btd_probs(si, sj, 0.0, 0.0)
    assert pd == 0.0
    assert abs(pw - 1.0 / (1.0 + math.exp(sj - si))) < 1e-9


def test_swapping_players_mirrors_outcomes():
    pw, pd, pl = btd_probs(0.7, -0.2, 0.0, 0.4)
    qw, qd, ql = btd_probs(-0.2, 0.7, 0.0, 0.4)
    assert np.allclose([pw, pd, pl], [ql, qd, qw])


def test_array_form_agrees_with_scalar_form():
    d = np.linspace(-5, 5, 11)
    arr = btd_probs_array(d, 0.3)
    for k, x in enumerate(d):
        assert np.allclose(arr[k], btd_probs(x, 0.0, 0.0, 0.3), atol=1e-15)


def test_negative_nu_rejected():
    with pytest.raises(ValueError):
        btd_probs(0, 0, 0, -0.1)


# -- normalized ability ----------------------------------------------------------


def test_normalized_ability_equal_scores():
    assert np.allclose(btd_normalized_ability([0.3, 0.3, 0.3]), 1.0)


@given(st.lists(finite, min_size=1, max_size=8), finite)
def test_normalized_ability_shift_invariant(s, c):
    a = btd_normalized_ability(s)
    b = btd_normalized_ability([x + c for x in s])
    assert np.allclose(a, b, rtol=1e-9)
    assert abs(np.mean(a) - 1.0) < 1e-9


def test_normalized_ability_dict_form():
    out = btd_normalized_ability({"a": 0.0, "b": math.log(3.0)})
    assert out == pytest.approx({"a": 0.5, "b": 1.5})


# -- fitting --------------------------------------------------------------------------


def _sample_problem(seed, n=400):
    s = {f"a{k}": 0.4 * k for k in range(4)}
    ms = simulate_davidson(s, {"x": 0.0, "y": 0.2}, 0.6, n, seed)
    return build_problem(ms, sorted(s), ["x", "y"], 0)


def test_gradient_matches_central_differences():
    prob = _sample_problem(0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        theta = rng.normal(0, 1, prob.n_params)
        g = prob.gradient(theta)
        h = 1e-5
        fd = np.array([(prob.objective(theta + h * e) - prob.objective(theta - h * e)) / (2 * h)
                       for e in np.eye(prob.n_params)])
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), 1.0) < 1e-6


def test_symmetric_data_gives_zero_abilities():
    ms = []
    for a, b in [("a", "b"), ("a", "c"), ("b", "c")]:
        ms += [Match(a, b, "", "W"), Match(a, b, "", "L"), Match(b, a, "", "W"), Match(b, a, "", "L"),
               Match(a, b, "", "D"), Match(b, a, "", "D")]
    fit = btd_fit(ms)
    assert fit.converged
    assert all(abs(v) < 1e-3 for v in fit.s.values())
    assert abs(fit.nu - 1.0) < 1e-3  # one draw in three per pair: nu / (2 + nu) = 1/3 at s = 0


def test_separation_stays_finite():
    ms = [Match("a", "b", "", "W")] * 50
    fit = btd_fit(ms, reference="b")
    assert fit.converged
    assert math.isfinite(fit.s["a"]) and fit.s["a"] > fit.s["b"]


def test_reference_agent_pinned_at_zero():
    ms = simulate_davidson({"p": 0.0, "q": 0.5, "r": 1.0}, {"": 0.0}, 0.5, 300, 3)
    fit = btd_fit(ms, reference="q")
    assert fit.s["q"] == 0.0
    other = btd_fit(ms, reference="p")
    # changing the reference is a pure shift up to the tiny ridge
    diffs = [fit.s[a] - other.s[a] for a in "pqr"]
    assert max(diffs) - min(diffs) < 1e-2


def test_fit_recovers_parameters_on_large_sample():
    s = {"a": 0.0, "b": 0.5, "c": 1.0}
    ms = simulate_davidson(s, {"x": 0.0, "y": -0.4}, 0.8, 20000, 11)
    fit = btd_fit(ms, reference="a", contexts=["x", "y"])
    assert fit.converged and fit.grad_max < 1e-6
    for a in s:
        assert abs(fit.s[a] - s[a]) < 4 * fit.std_errors.get(f"s[{a}]", 0.05) + 1e-9
    assert abs(fit.gamma["y"] + 0.4) < 4 * fit.std_errors["gamma[y]"]
    assert abs(fit.nu - 0.8) < 4 * fit.std_errors["nu"]


def test_standard_errors_have_nominal_coverage():
    # Wald intervals from the finite-difference Hessian should cover the truth
    # about 95% of the time; 60 replicates x 2 free abilities.
    truth = {"a": 0.0, "b": 0.6, "c": 1.2}
    hits = total = 0
    for seed in range(60):
        fit = btd_fit(simulate_davidson(truth, {"": 0.0}, 0.5, 300, 100 + seed), reference="a")
        for a in ("b", "c"):
            total += 1
            hits += abs(fit.s[a] - truth[a]) < 1.96 * fit.std_errors[f"s[{a}]"]
    assert 0.88 <= hits / total <= 0.995


def test_disconnected_graph_fits_largest_component():
    ms = [Match("a", "b", "", "W"), Match("b", "c", "", "L"), Match("a", "c", "", "D"), Match("x", "y", "", "W")]
    fit = btd_fit(ms)
    assert sorted(fit.s) == ["a", "b", "c"]
    assert "components" in fit.message
    assert fit.components[1] == ["x", "y"]


def test_unknown_reference_rejected():
    with pytest.raises(ValueError):
        btd_fit([Match("a", "b", "", "W")], reference="zz")


# -- calibration ------------------------------------------------------------------------


def test_oracle_predictions_score_zero():
    outcomes = list("WDLWL")
    probs = np.array([[o == "W", o == "D", o == "L"] for o in outcomes], dtype=float)
    cal = calibration_from_probs(probs, outcomes)
    assert cal.brier == 0.0 and cal.logloss == 0.0


def test_uniform_predictor_baselines():
    outcomes = list("WDLLWDDW")
    cal = calibration_from_probs(np.full((len(outcomes), 3), 1 / 3), outcomes)
    assert abs(cal.brier - 2 / 3) < 1e-9
    assert abs(cal.logloss - math.log(3)) < 1e-9
    assert [r["bin"] for r in cal.reliability] == [5]  # expected score 0.5 lands in [0.5, 0.6)


def test_reliability_hand_computed_bins():
    probs = np.array([[0.9, 0.0, 0.1], [0.1, 0.0, 0.9], [0.05, 0.1, 0.85]])
    cal = calibration_from_probs(probs, ["W", "W", "L"], bins=10)
    by_bin = {r["bin"]: r for r in cal.reliability}
    assert set(by_bin) == {1, 9}
    assert by_bin[9]["empirical"] == 1.0 and by_bin[9]["count"] == 1
    assert by_bin[1]["count"] == 2 and by_bin[1]["empirical"] == 0.5
    assert by_bin[1]["mean_predicted"] == pytest.approx((0.1 + 0.1) / 2)


def test_calibration_skips_agents_outside_fit():
    ms = simulate_davidson({"a": 0.0, "b": 1.0}, {"": 0.0}, 0.5, 200, 0)
    fit = btd_fit(ms)
    cal = calibration(ms + [Match("a", "zz", "", "W")], fit)
    assert sum(r["count"] for r in cal.reliability) == 200
