import json

import numpy as np
import pytest

import fredse


def test_examples_are_registered():
    names = fredse.example_names()
    for name in ("mnar", "sensitivity", "shift", "toy"):
        assert name in names


def test_generate_hides_the_full_outcome():
    observed, truth = fredse.generate("mnar", 200, 3)
    assert set(observed) == {"x", "a", "y"}
    assert set(truth) == {"y_full"}
    seen = observed["a"] == 1.0
    np.testing.assert_array_equal(observed["y"][seen], truth["y_full"][seen])
    assert np.isnan(observed["y"][~seen]).all()


def test_canonical_config_fills_bundle_defaults():
    cfg = fredse.canonical_config({"example": "mnar"})
    assert cfg["solver"] == {"kind": "neural", "width": 5, "depth": 3}
    assert cfg["j1"] == cfg["j2"] == 1000
    assert fredse.canonical_config(json.dumps(cfg)) == cfg


def test_config_errors_raise():
    with pytest.raises(fredse.ConfigError):
        fredse.canonical_config({"example": "mnar", "reps": 0})


def test_toy_estimate_reaches_the_fixed_point():
    out = fredse.estimate({"example": "toy"})
    assert out["converged"]
    assert abs(out["beta_hat"][0] - 1.0) < 1e-2


def test_simulate_and_report_agree():
    pd = pytest.importorskip("pandas")
    cfg = {"example": "shift", "n": 500, "reps": 2, "comparators": ["zeta_star"]}
    csv = fredse.simulate(cfg)
    assert csv == fredse.simulate(cfg)
    frame = pd.read_csv(__import__("io").StringIO(csv), na_values=["NA"])
    assert len(frame) == 4
    summary = fredse.report(csv)
    by_label = {s["solver"]: s for s in summary["solvers"]}
    expected = frame[frame.solver == "neural"]["bias_1"].mean()
    assert by_label["neural"]["mean_bias"][0] == pytest.approx(expected, rel=1e-12)


def test_trace_starts_at_beta_init():
    text = fredse.trace({"example": "toy", "beta_init": [0.5]})
    lines = text.strip().split("\n")
    assert lines[0] == "iter,beta_1,loss_psi,loss_K"
    assert lines[1].startswith("1,0.5,")


def test_solve_polynomial_is_exact():
    out = fredse.solve("analytic:degenerate", "poly:3")
    assert out["loss_K"] <= 1e-12
    assert out["sup_error"] <= 1e-8
