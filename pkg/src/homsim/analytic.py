"""Closed-form correlation quantities for two phase-randomized fields.

Everything here is exact (or controlled-accuracy quadrature) and serves
as the oracle the Monte-Carlo pipeline is checked against:

* ``g2_cw``          second-order cross-correlation of two unmodulated
                     fields vs. detection-time difference (the HOM dip),
* ``g2_pol_ideal``   structured pattern vs. modulator phase for ideal
                     50 percent duty square envelopes,
* ``g2_pol_general`` the same for arbitrary duty cycles and rise times,
* ``g2_triangle``    the modulator-phase-averaged pattern vs. optical
                     delay,
* ``coincidence_rate``  the double window integral relating correlation
                     functions to counted coincidences,
* ``expected_phase_profile``  the measurement-model prediction for a
                     modulator-phase histogram including the finite
                     coincidence window.

Normalized cross-correlations are scaled so that distinguishable
(non-interfering) fields sit at 1; every formula in scope then lies in
[0.5, 1], the 0.5 floor being the contrast ceiling of mutually
phase-randomized fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import AnalysisError, ConfigurationError
from .model import (
    CoherenceSpec,
    EnvelopeSet,
    PolarizationAxis,
    envelope,
    eval_triangle_wave,
    g1,
)

__all__ = [
    "G2Curve",
    "VisibilityValue",
    "g2_cw",
    "visibility",
    "g2_pol_ideal",
    "g2_pol_general",
    "g2_triangle",
    "coincidence_rate",
    "expected_phase_profile",
    "write_curve",
    "read_curve",
]


@dataclass
class G2Curve:
    """Sampled curve of a (normalized) correlation quantity.

    ``kind`` names the abscissa: "tau" (detection-time difference),
    "t0" (modulator phase) or "tau_opt" (optical delay).  ``yerr`` holds
    one-sigma counting uncertainties when the curve came from data.
    """

    kind: str
    x: np.ndarray
    y: np.ndarray
    yerr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise AnalysisError("curve abscissa and values must have equal length")
        if self.yerr is not None:
            self.yerr = np.asarray(self.yerr, dtype=float)
            if self.yerr.shape != self.y.shape:
                raise AnalysisError("curve uncertainties must match values")

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class VisibilityValue:
    """Interference contrast (max - min)/max with propagated uncertainty."""

    value: float
    uncertainty: float = 0.0


def g2_cw(tau, coh: CoherenceSpec):
    """Normalized cross-correlation of two unmodulated fields.

    1 - 0.5 * exp(-2|tau|/tau_coh - 2 tau^2/tau_coh^2): the HOM dip,
    with minimum 0.5 at tau = 0 and baseline 1.
    """
    tau = np.asarray(tau, dtype=float)
    mag = np.abs(g1(coh, tau))
    out = 1.0 - 0.5 * mag**2
    return out if out.ndim else float(out)


def visibility(curve: G2Curve) -> VisibilityValue:
    """Contrast (max - min)/max over the samples of a curve."""
    if len(curve) == 0:
        raise AnalysisError("cannot compute visibility of an empty curve")
    i_max = int(np.argmax(curve.y))
    i_min = int(np.argmin(curve.y))
    top = float(curve.y[i_max])
    bot = float(curve.y[i_min])
    if top <= 0:
        raise AnalysisError("curve maximum is not positive; visibility undefined")
    value = (top - bot) / top
    sigma = 0.0
    if curve.yerr is not None:
        s_top = float(curve.yerr[i_max])
        s_bot = float(curve.yerr[i_min])
        sigma = math.hypot(s_bot / top, bot * s_top / top**2)
    return VisibilityValue(value=value, uncertainty=sigma)


def _pm_square(x):
    """Symmetric unit-period square wave with values +-1 and value +1 at 0."""
    frac = np.mod(x, 1.0)
    return np.where(frac < 0.5, 1.0, -1.0)


def g2_pol_ideal(t0, tau_opt: float, t_mod: float):
    """Structured pattern for ideal square envelopes vs. modulator phase.

    (3 - SW(t0/T) * SW((t0 - tau_opt)/T)) / 4 with +-1 square waves;
    takes only the values 0.5 (matched polarizations, full interference)
    and 1.0 (orthogonal polarizations, none).
    """
    if not t_mod > 0:
        raise ConfigurationError(f"t_mod must be > 0, got {t_mod}")
    t0 = np.asarray(t0, dtype=float)
    prod = _pm_square(t0 / t_mod) * _pm_square((t0 - tau_opt) / t_mod)
    out = 0.25 * (3.0 - prod)
    return out if out.ndim else float(out)


def _zeta_squares(env: EnvelopeSet, t0):
    h1 = envelope(env, PolarizationAxis.H, 1, t0)
    h2 = envelope(env, PolarizationAxis.H, 2, t0)
    v1 = envelope(env, PolarizationAxis.V, 1, t0)
    v2 = envelope(env, PolarizationAxis.V, 2, t0)
    return np.square(h1), np.square(h2), np.square(v1), np.square(v2)


def g2_pol_general(t0, env: EnvelopeSet, return_degenerate: bool = False):
    """Normalized pattern for arbitrary envelopes at equal detection times.

    Sums the four polarization-resolved correlation terms (two equal-
    polarization terms, whose mutual-interference part is maximal at zero
    time difference, and two cross-polarization terms, which carry no
    interference), then divides by the no-interference level so
    distinguishable fields sit at 1.

    Where all four envelopes vanish the ratio is undefined; those points
    return the no-interference level 1.0 and, with
    ``return_degenerate=True``, are flagged in the second return value.
    """
    scalar = np.ndim(t0) == 0
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    H1, H2, V1, V2 = _zeta_squares(env, t0)

    # Equal-polarization terms: (z1^4 + z2^4)/4 each.
    g_hh = 0.25 * (H1**2 + H2**2)
    g_vv = 0.25 * (V1**2 + V2**2)
    # Cross-polarization terms: all four source combinations, no interference.
    g_hv = 0.25 * (H1 * V1 + H2 * V2 + H1 * V2 + H2 * V1)
    g_vh = 0.25 * (V1 * H1 + V2 * H2 + V1 * H2 + V2 * H1)
    raw = g_hh + g_vv + g_hv + g_vh

    s_total = H1 + H2 + V1 + V2
    no_interference = 0.25 * s_total**2
    degenerate = no_interference <= 0.0
    out = np.where(degenerate, 1.0, raw / np.where(degenerate, 1.0, no_interference))

    if scalar:
        out = float(out[0])
        degenerate = bool(degenerate[0])
    if return_degenerate:
        return out, degenerate
    return out


def g2_triangle(tau_opt, t_mod: float, t_meas: float):
    """Modulator-phase-averaged pattern vs. optical delay.

    T_meas * (1 - TW(tau_opt)/2) where TW is the symmetric triangle that
    is the period average of the ideal square-wave pattern: the result
    runs from T_meas/2 at zero delay to T_meas at half-period delay.
    """
    if not t_mod > 0:
        raise ConfigurationError(f"t_mod must be > 0, got {t_mod}")
    if not t_meas > 0:
        raise ConfigurationError(f"t_meas must be > 0, got {t_meas}")
    tri = eval_triangle_wave(t_mod, tau_opt)
    out = np.asarray(t_meas * (1.0 - 0.5 * np.asarray(tri)))
    return out if out.ndim else float(out)


def coincidence_rate(t0: float, tau: float, dT: float, eta1: float, eta2: float,
                     g2: Callable[[float, float], float]) -> float:
    """Coincidence rate as the double integral of G2 over two detection windows.

    Integrates g2(t1, t2) for t1 in [t0, t0 + dT] and t2 in
    [t0 + tau, t0 + tau + dT], scaled by the detector efficiencies.  In
    the time-resolved regime dT much smaller than the correlation width
    this approaches eta1 * eta2 * dT^2 * g2(t0, t0 + tau).

    Adaptive quadrature; relative accuracy 1e-6 or better on smooth
    integrands (the inner integral is split at t2 = t1 to tame the
    derivative kink of |t2 - t1| correlation shapes).
    """
    if not dT > 0:
        raise ConfigurationError(f"integration window dT must be > 0, got {dT}")
    lo2, hi2 = t0 + tau, t0 + tau + dT

    def inner(t1: float) -> float:
        pts = [t1] if lo2 < t1 < hi2 else None
        val, _ = quad(lambda t2: g2(t1, t2), lo2, hi2,
                      epsabs=0.0, epsrel=1e-10, limit=200, points=pts)
        return val

    val, _ = quad(inner, t0, t0 + dT, epsabs=0.0, epsrel=1e-9, limit=200)
    return eta1 * eta2 * val


def expected_phase_profile(env: EnvelopeSet, tick: float, t_mod_ticks: int,
                           window_ticks: int, bin_ticks: int, periods: int = 1,
                           coh: CoherenceSpec | None = None) -> dict:
    """Expected modulator-phase histogram shape, including the window.

    A measured phase histogram aggregates pairs with detection times up
    to one coincidence window apart, and its raw counts also carry the
    squared instantaneous intensity envelope.  This computes, on the tick
    lattice over one modulation period,

        rate(t3) = sum_{|d| <= W} [ S(t3) S(t3+d) / 4
                                    - (1/2) sum_sigma C_sigma(t3) C_sigma(t3+d) |G1(d)|^2 ]

    with S the total input intensity and C_sigma the per-polarization
    envelope overlap, plus the same sum without the interference deficit
    (the no-interference reference).  Both are then summed into bins.

    Returns a dict with bin centers (ns), relative expected counts
    ``profile``, the no-interference reference ``reference`` and their
    ratio ``normalized`` (the window-aware generalization of
    ``g2_pol_general``).  When ``coh`` is None the window is assumed to
    be far inside the coherence time, |G1|^2 = 1.
    """
    if t_mod_ticks < 1 or bin_ticks < 1 or periods < 1 or window_ticks < 0:
        raise ConfigurationError("tick-lattice parameters must be positive")
    P = int(t_mod_ticks)
    t = np.arange(P) * tick
    H1, H2, V1, V2 = _zeta_squares(env, t)
    s = H1 + H2 + V1 + V2
    c_h = np.sqrt(H1 * H2)
    c_v = np.sqrt(V1 * V2)

    rate = np.zeros(P)
    reference = np.zeros(P)
    for d in range(-window_ticks, window_ticks + 1):
        w = 1.0
        if coh is not None:
            w = float(np.abs(g1(coh, d * tick)) ** 2)
        s_d = np.roll(s, -d)
        noint = 0.25 * s * s_d
        deficit = 0.5 * (c_h * np.roll(c_h, -d) + c_v * np.roll(c_v, -d)) * w
        rate += noint - deficit
        reference += noint

    rate = np.tile(rate, periods)
    reference = np.tile(reference, periods)
    n_bins = math.ceil(periods * P / bin_ticks)
    idx = (np.arange(periods * P) // bin_ticks).astype(int)
    profile = np.bincount(idx, weights=rate, minlength=n_bins)
    ref_binned = np.bincount(idx, weights=reference, minlength=n_bins)
    centers = (np.arange(n_bins) + 0.5) * bin_ticks * tick
    with np.errstate(invalid="ignore", divide="ignore"):
        normalized = np.where(ref_binned > 0, profile / np.where(ref_binned > 0, ref_binned, 1.0), 1.0)
    return {
        "centers": centers,
        "profile": profile,
        "reference": ref_binned,
        "normalized": normalized,
    }


# ---------------------------------------------------------------------------
# Curve text files: "# homsim-curve kind=... key=value ..." header, then
# whitespace-delimited columns (abscissa, value[, sigma]).

def write_curve(curve: G2Curve, path: str | Path) -> None:
    path = Path(path)
    tokens = [f"kind={curve.kind}"]
    for key, val in sorted(curve.meta.items()):
        tokens.append(f"{key}={val}")
    header = "homsim-curve " + " ".join(tokens)
    cols = [curve.x, curve.y]
    if curve.yerr is not None:
        cols.append(curve.yerr)
    data = np.column_stack(cols)
    np.savetxt(path, data, header=header, fmt="%.12g")


def read_curve(path: str | Path) -> G2Curve:
    path = Path(path)
    if not path.exists():
        raise AnalysisError(f"curve file not found: {path}")
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("#") or "homsim-curve" not in first:
        raise AnalysisError(f"{path}: missing homsim-curve header line")
    meta: dict = {}
    kind = "unknown"
    for token in first.lstrip("# ").split()[1:]:
        if "=" not in token:
            continue
        key, val = token.split("=", 1)
        if key == "kind":
            kind = val
            continue
        try:
            meta[key] = float(val)
        except ValueError:
            meta[key] = val
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        raise AnalysisError(f"{path}: curve file contains no samples")
    if data.shape[1] < 2:
        raise AnalysisError(f"{path}: expected at least two columns")
    yerr = data[:, 2] if data.shape[1] >= 3 else None
    return G2Curve(kind=kind, x=data[:, 0], y=data[:, 1], yerr=yerr, meta=meta)
