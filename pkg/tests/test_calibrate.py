"""Oracles for the toy calibration tools.

The AR(1) fit is checked against an independent numpy least-squares fit and
against parameter recovery on a long generated series; the sensitivity table
is checked against the closed-form stationary standard deviation.
"""

import math

import numpy as np
import pytest

from agentloom.toolkit.calibrate import (
    CalibrationError,
    estimate_ar1,
    sensitivity_analysis,
)
from agentloom.toolkit.datatools import ar1_values


def _numpy_ar1_fit(values):
    x = np.asarray(values, dtype=float)
    mean = x.mean()
    centered = x - mean
    slope = np.linalg.lstsq(
        centered[:-1].reshape(-1, 1), centered[1:], rcond=None
    )[0][0]
    resid = centered[1:] - slope * centered[:-1]
    return mean, slope, math.sqrt(float(np.mean(resid**2)))


class TestEstimateAr1:
    def test_matches_numpy_least_squares(self):
        values = ar1_values(200, mean=2.0, ar1=0.6, noise_sd=0.8, seed=11)
        got = estimate_ar1(values)
        mean, slope, sd = _numpy_ar1_fit(values)
        assert got["mean"] == pytest.approx(mean, rel=1e-12)
        assert got["ar1"] == pytest.approx(slope, rel=1e-9)
        assert got["noise_sd"] == pytest.approx(sd, rel=1e-9)
        assert got["n"] == 200

    def test_recovers_known_parameters_on_long_series(self):
        values = ar1_values(5000, mean=0.0, ar1=0.5, noise_sd=1.0, seed=42)
        got = estimate_ar1(values)
        assert got["mean"] == pytest.approx(0.0, abs=0.1)
        assert got["ar1"] == pytest.approx(0.5, abs=0.05)
        assert got["noise_sd"] == pytest.approx(1.0, abs=0.05)

    def test_constant_series_rejected(self):
        with pytest.raises(CalibrationError):
            estimate_ar1([3.0, 3.0, 3.0, 3.0])

    def test_too_short_rejected(self):
        with pytest.raises(CalibrationError):
            estimate_ar1([1.0, 2.0])

    def test_deterministic(self):
        values = ar1_values(50, mean=1.0, ar1=0.3, noise_sd=0.5, seed=7)
        assert estimate_ar1(values) == estimate_ar1(values)


class TestSensitivityAnalysis:
    def test_stationary_sd_matches_closed_form(self):
        report = sensitivity_analysis({"mean": 0.0, "ar1": 0.5, "noise_sd": 1.0})
        base = 1.0 / math.sqrt(1 - 0.5**2)
        assert report["metric"] == "stationary_sd"
        assert report["base"] == pytest.approx(base, rel=1e-12)

    def test_rows_cover_each_parameter_both_directions(self):
        report = sensitivity_analysis({"mean": 1.0, "ar1": 0.4, "noise_sd": 0.7}, step=0.2)
        rows = report["rows"]
        assert {(r["param"], r["direction"]) for r in rows} == {
            ("mean", "+"),
            ("mean", "-"),
            ("ar1", "+"),
            ("ar1", "-"),
            ("noise_sd", "+"),
            ("noise_sd", "-"),
        }
        up = next(r for r in rows if r["param"] == "noise_sd" and r["direction"] == "+")
        expected = (0.7 * 1.2) / math.sqrt(1 - 0.4**2)
        assert up["value"] == pytest.approx(expected, rel=1e-12)
        # Mean shifts never move the stationary sd.
        for r in rows:
            if r["param"] == "mean":
                assert r["value"] == pytest.approx(report["base"], rel=1e-12)

    def test_ar1_bump_is_clamped_inside_the_unit_interval(self):
        report = sensitivity_analysis({"mean": 0.0, "ar1": 0.95, "noise_sd": 1.0}, step=0.2)
        up = next(r for r in report["rows"] if r["param"] == "ar1" and r["direction"] == "+")
        assert up["clamped"] is True
        assert abs(up["perturbed"]) <= 0.995

    def test_bad_step_rejected(self):
        with pytest.raises(CalibrationError):
            sensitivity_analysis({"mean": 0.0, "ar1": 0.2, "noise_sd": 1.0}, step=0.0)

    def test_out_of_domain_parameters_rejected(self):
        with pytest.raises(CalibrationError):
            sensitivity_analysis({"mean": 0.0, "ar1": 1.0, "noise_sd": 1.0})
        with pytest.raises(CalibrationError):
            sensitivity_analysis({"mean": 0.0, "ar1": 0.5, "noise_sd": -1.0})
