"""Toy calibration helpers: AR(1) parameter fitting and a closed-form
sensitivity table over the stationary standard deviation."""

from __future__ import annotations

import math
from typing import Any, Dict, List, Sequence

AR1_CLAMP = 0.995


class CalibrationError(ValueError):
    """Input outside the domain the calibration helpers support."""


def estimate_ar1(values: Sequence[float]) -> Dict[str, Any]:
    """Fit x_t = mean + ar1 * (x_{t-1} - mean) + eps by method of moments.

    The mean is the sample mean; ar1 is the lag-1 regression slope through
    the centered series; noise_sd is the root mean squared residual.
    """
    xs = [float(v) for v in values]
    n = len(xs)
    if n < 3:
        raise CalibrationError(f"need at least 3 observations, got {n}")
    mean = sum(xs) / n
    centered = [x - mean for x in xs]
    denom = sum(c * c for c in centered[:-1])
    if denom == 0:
        raise CalibrationError("series is constant; AR(1) slope undefined")
    ar1 = sum(centered[t] * centered[t - 1] for t in range(1, n)) / denom
    residuals = [centered[t] - ar1 * centered[t - 1] for t in range(1, n)]
    noise_sd = math.sqrt(sum(r * r for r in residuals) / len(residuals))
    return {"mean": mean, "ar1": ar1, "noise_sd": noise_sd, "n": n}


def _stationary_sd(ar1: float, noise_sd: float) -> float:
    return noise_sd / math.sqrt(1.0 - ar1 * ar1)


def sensitivity_analysis(params: Dict[str, float], step: float = 0.1) -> Dict[str, Any]:
    """Bump each parameter by ±step (relative) and report the stationary sd.

    ar1 bumps are clamped to |ar1| <= 0.995 so the metric stays defined; a
    clamped row is flagged.  Additive bump for mean when it is exactly zero
    (a relative step would be a no-op).
    """
    if step <= 0:
        raise CalibrationError("step must be positive")
    for key in ("mean", "ar1", "noise_sd"):
        if key not in params:
            raise CalibrationError(f"missing parameter {key!r}")
    mean, ar1, noise_sd = params["mean"], params["ar1"], params["noise_sd"]
    if not -1.0 < ar1 < 1.0:
        raise CalibrationError("ar1 must lie in (-1, 1)")
    if noise_sd < 0:
        raise CalibrationError("noise_sd must be non-negative")

    base = _stationary_sd(ar1, noise_sd)
    rows: List[Dict[str, Any]] = []
    for name in ("mean", "ar1", "noise_sd"):
        value = params[name]
        for sign, direction in ((1.0, "+"), (-1.0, "-")):
            bump = sign * step * (value if value != 0 else 1.0)
            perturbed = value + bump
            clamped = False
            if name == "ar1" and abs(perturbed) > AR1_CLAMP:
                perturbed = math.copysign(AR1_CLAMP, perturbed)
                clamped = True
            if name == "noise_sd" and perturbed < 0:
                perturbed = 0.0
                clamped = True
            trial = {"mean": mean, "ar1": ar1, "noise_sd": noise_sd, name: perturbed}
            rows.append(
                {
                    "param": name,
                    "direction": direction,
                    "perturbed": perturbed,
                    "clamped": clamped,
                    "value": _stationary_sd(trial["ar1"], trial["noise_sd"]),
                }
            )
    return {"metric": "stationary_sd", "base": base, "step": step, "rows": rows}
