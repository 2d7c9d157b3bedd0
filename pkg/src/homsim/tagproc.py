"""Analysis of time-tag streams: coincidences, histograms, and fits.

The processing chain mirrors how the data would be treated coming off a
real time tagger:

* pair DET3/DET4 tags into coincidences within a window,
* fold coincidences on the modulator trigger into a phase histogram
  (the structured interference pattern),
* histogram detection-time differences into a normalized dip curve,
* fit the dip with the mixed exponential-Gaussian model and the
  visibility-vs-delay scan with a triangle wave.

All operations are pure transformations of immutable inputs; per-delay
analyses are independent and safe to run concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.optimize import curve_fit

from .analytic import G2Curve
from .analytic import visibility as curve_visibility
from .errors import AnalysisError, DataError
from .mcsim import Channel, TagStream
from .model import eval_triangle_wave

__all__ = [
    "CoincidenceList",
    "PhaseHistogram",
    "FitResult",
    "find_coincidences",
    "phase_histogram",
    "dip_curve",
    "fit_voigt_dip",
    "fit_tent_dip",
    "visibility_scan",
    "fit_triangle",
    "write_summary",
    "voigt_dip_model",
]


@dataclass
class CoincidenceList:
    """Paired detection times (ticks), ordered by the DET3 time.

    With the default greedy pairing each detection participates in at
    most one pair; in all-pairs mode (a sensitivity check) every
    DET3/DET4 combination within the window is listed.
    """

    t3: np.ndarray
    t4: np.ndarray
    tick: float
    t_coin: float
    all_pairs: bool = False

    def __post_init__(self) -> None:
        self.t3 = np.asarray(self.t3, dtype=np.int64)
        self.t4 = np.asarray(self.t4, dtype=np.int64)
        if self.t3.shape != self.t4.shape:
            raise AnalysisError("coincidence arrays must have equal length")

    def __len__(self) -> int:
        return len(self.t3)


@dataclass
class PhaseHistogram:
    """Coincidence counts vs. modulator phase.

    ``counts[i]`` is the number of coincidences whose DET3 tag fell
    ``i``-th bin after the most recent trigger, folded modulo
    ``periods`` modulation periods.  ``skipped`` counts coincidences
    that precede the first trigger tag.
    """

    counts: np.ndarray
    bin_width: float  # ns (tick multiple actually used)
    periods: int
    t_mod: float  # realized modulation period (ns)
    tick: float
    total: int
    skipped: int

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.bin_width

    def curve(self, baseline: float | None = None) -> G2Curve:
        """Counts as a curve; divided by ``baseline`` when given."""
        scale = 1.0 if baseline is None else float(baseline)
        if scale <= 0:
            raise AnalysisError("histogram baseline must be positive")
        err = np.sqrt(np.maximum(self.counts, 1))
        return G2Curve(
            kind="t0",
            x=self.centers(),
            y=self.counts / scale,
            yerr=err / scale,
            meta={
                "bin_ns": self.bin_width,
                "periods": self.periods,
                "t_mod_ns": self.t_mod,
                "tick_ns": self.tick,
                "total": self.total,
                "skipped": self.skipped,
                "baseline": scale,
            },
        )


@dataclass
class FitResult:
    """Nonlinear fit outcome; estimates are reported only on convergence."""

    model: str
    converged: bool
    params: dict = field(default_factory=dict)
    uncertainties: dict = field(default_factory=dict)
    residual_norm: float = math.nan
    dof: int = 0

    @property
    def chi2_per_dof(self) -> float:
        if self.dof <= 0 or not np.isfinite(self.residual_norm):
            return math.nan
        return self.residual_norm**2 / self.dof


def _detector_ticks(stream: TagStream) -> tuple[np.ndarray, np.ndarray]:
    t3 = stream.channel_ticks(Channel.DET3)
    t4 = stream.channel_ticks(Channel.DET4)
    if np.any(np.diff(t3) < 0) or np.any(np.diff(t4) < 0):
        raise DataError("stream is not sorted by time")
    return t3, t4


def _greedy_pairs(t3: np.ndarray, t4: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Earliest-first greedy pairing, each event used at most once.

    Scan both sorted channels with two pointers; whenever the current
    heads are within the window they are paired and both consumed,
    otherwise the earlier head is discarded.  Events separated by more
    than the window can never interact, so the stream is first cut into
    bursts at gaps larger than the window; isolated DET3/DET4 pairs (the
    overwhelmingly common case at realistic rates) are paired directly
    and only multi-event bursts fall back to the explicit scan.
    """
    if len(t3) == 0 or len(t4) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    m_t = np.concatenate([t3, t4])
    m_c = np.concatenate([
        np.zeros(len(t3), dtype=np.int8),
        np.ones(len(t4), dtype=np.int8),
    ])
    order = np.lexsort((m_c, m_t))
    m_t = m_t[order]
    m_c = m_c[order]

    burst_id = np.zeros(len(m_t), dtype=np.int64)
    if len(m_t) > 1:
        burst_id[1:] = np.cumsum(np.diff(m_t) > window)
    n_bursts = int(burst_id[-1]) + 1
    sizes = np.bincount(burst_id, minlength=n_bursts)
    n3_in_burst = np.bincount(burst_id, weights=(m_c == 0), minlength=n_bursts).astype(np.int64)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    fast = (sizes == 2) & (n3_in_burst == 1)
    fa = starts[fast]
    first_c = m_c[fa]
    out3 = np.where(first_c == 0, m_t[fa], m_t[fa + 1])
    out4 = np.where(first_c == 0, m_t[fa + 1], m_t[fa])

    slow3: list[int] = []
    slow4: list[int] = []
    for b in np.flatnonzero((sizes > 2) | ((sizes == 2) & (n3_in_burst != 1))):
        lo, hi = starts[b], starts[b] + sizes[b]
        tt = m_t[lo:hi]
        cc = m_c[lo:hi]
        a = tt[cc == 0]
        bb = tt[cc == 1]
        i = j = 0
        while i < len(a) and j < len(bb):
            if abs(int(a[i]) - int(bb[j])) <= window:
                slow3.append(int(a[i]))
                slow4.append(int(bb[j]))
                i += 1
                j += 1
            elif a[i] < bb[j]:
                i += 1
            else:
                j += 1

    p3 = np.concatenate([out3, np.asarray(slow3, dtype=np.int64)])
    p4 = np.concatenate([out4, np.asarray(slow4, dtype=np.int64)])
    order = np.argsort(p3, kind="stable")
    return p3[order], p4[order]


def _range_expand(counts: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """Concatenate ranges lo[i] .. lo[i]+counts[i] without a Python loop."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(counts)
    idx = np.arange(total, dtype=np.int64)
    return idx - np.repeat(ends - counts, counts) + np.repeat(lo, counts)


def find_coincidences(stream: TagStream, t_coin: float, all_pairs: bool = False) -> CoincidenceList:
    """Pair DET3/DET4 tags within |t4 - t3| <= t_coin.

    Default is greedy earliest-first with single-use events; with
    ``all_pairs=True`` every combination within the window is returned
    (pairing-rule sensitivity check).
    """
    if t_coin <= 0:
        raise AnalysisError(f"coincidence window must be > 0, got {t_coin}")
    t3, t4 = _detector_ticks(stream)
    window = int(round(t_coin / stream.tick))

    if all_pairs:
        lo = np.searchsorted(t4, t3 - window, side="left")
        hi = np.searchsorted(t4, t3 + window, side="right")
        counts = (hi - lo).astype(np.int64)
        j = _range_expand(counts, lo.astype(np.int64))
        p3 = np.repeat(t3, counts)
        p4 = t4[j]
    else:
        p3, p4 = _greedy_pairs(t3, t4, window)

    return CoincidenceList(t3=p3, t4=p4, tick=stream.tick, t_coin=window * stream.tick,
                           all_pairs=all_pairs)


def phase_histogram(coins: CoincidenceList, stream: TagStream,
                    bin_width: float | None = None, periods: int = 1) -> PhaseHistogram:
    """Fold coincidences on the modulator trigger into a phase histogram.

    For each coincidence the time from the most recent trigger tag to
    the DET3 detection is taken modulo ``periods`` modulation periods
    and binned.  Trigger tags may be decimated; the fold is exact as
    long as the trigger spacing is a multiple of the fold length.
    """
    if periods < 1:
        raise AnalysisError(f"periods must be >= 1, got {periods}")
    if bin_width is None:
        bin_width = stream.config.bin_width if stream.config else stream.tick * 2
    bin_ticks = max(1, int(round(bin_width / stream.tick)))

    fold_ticks = stream.t_mod_ticks * periods
    if (stream.t_mod_ticks * stream.trigger_every) % fold_ticks != 0:
        raise AnalysisError(
            f"trigger spacing ({stream.trigger_every} periods) is not a multiple "
            f"of the requested fold ({periods} periods)"
        )

    trig = stream.channel_ticks(Channel.TRIGGER)
    n_bins = math.ceil(fold_ticks / bin_ticks)
    counts = np.zeros(n_bins, dtype=np.int64)
    skipped = len(coins)
    if len(trig) and len(coins):
        pos = np.searchsorted(trig, coins.t3, side="right") - 1
        good = pos >= 0
        skipped = int(np.count_nonzero(~good))
        t0 = (coins.t3[good] - trig[pos[good]]) % fold_ticks
        counts = np.bincount(t0 // bin_ticks, minlength=n_bins).astype(np.int64)

    return PhaseHistogram(
        counts=counts,
        bin_width=bin_ticks * stream.tick,
        periods=periods,
        t_mod=stream.t_mod,
        tick=stream.tick,
        total=len(coins),
        skipped=skipped,
    )


def dip_curve(stream: TagStream, tau_span: float, bin_width: float,
              baseline: tuple[float, float] | None = None,
              t_coin: float | None = None) -> G2Curve:
    """Normalized coincidence histogram vs. detection-time difference.

    Histograms every DET3/DET4 pair with |t4 - t3| <= tau_span and
    divides by the mean count in the baseline region (|tau| between the
    two bounds, default the outer 30 percent of the span), where the
    fields are long since decorrelated.  ``t_coin``, when given, is only
    used to report the number of true coincidences in the metadata.
    """
    t3, t4 = _detector_ticks(stream)
    bin_ticks = max(1, int(round(bin_width / stream.tick)))
    n_half = int(round(tau_span / stream.tick)) // bin_ticks
    if n_half < 2:
        raise AnalysisError("tau_span must cover at least two bins per side")
    if baseline is None:
        baseline = (0.7 * tau_span, tau_span)

    # Pairs with diff in [-reach, +reach); the histogram bins are half-open
    # so every bin covers exactly bin_ticks integer differences.
    reach = (n_half * bin_ticks) + bin_ticks // 2
    lo = np.searchsorted(t4, t3 - reach, side="left")
    hi = np.searchsorted(t4, t3 + reach, side="left")
    counts_per = (hi - lo).astype(np.int64)
    j = _range_expand(counts_per, lo.astype(np.int64))
    diffs = t4[j] - np.repeat(t3, counts_per)

    edges_ticks = (np.arange(-n_half, n_half + 2) - 0.5) * bin_ticks
    hist, _ = np.histogram(diffs, bins=edges_ticks)
    centers = np.arange(-n_half, n_half + 1) * bin_ticks * stream.tick

    absc = np.abs(centers)
    base_mask = (absc >= baseline[0]) & (absc <= baseline[1])
    if not np.any(base_mask):
        raise AnalysisError("baseline region contains no bins")
    base_mean = float(hist[base_mask].mean())
    if base_mean <= 0:
        raise AnalysisError("baseline region contains no counts; cannot normalize")

    meta = {
        "bin_ns": bin_ticks * stream.tick,
        "tau_span_ns": n_half * bin_ticks * stream.tick,
        "baseline_lo_ns": baseline[0],
        "baseline_hi_ns": baseline[1],
        "baseline_mean": base_mean,
        "pairs": int(hist.sum()),
        "tick_ns": stream.tick,
    }
    if t_coin is not None:
        meta["coincidences"] = len(find_coincidences(stream, t_coin))
        meta["t_coin_ns"] = t_coin
    return G2Curve(
        kind="tau",
        x=centers,
        y=hist / base_mean,
        yerr=np.sqrt(np.maximum(hist, 1)) / base_mean,
        meta=meta,
    )


def voigt_dip_model(tau, vis, tau_c):
    """Dip model 1 - V exp(-2|tau|/tau_c - 2 tau^2/tau_c^2)."""
    tau = np.asarray(tau, dtype=float)
    return 1.0 - vis * np.exp(-2.0 * np.abs(tau) / tau_c - 2.0 * tau**2 / tau_c**2)


# Half-width-at-half-depth of the dip model equals this multiple of tau_c.
_HWHD = (math.sqrt(1.0 + 2.0 * math.log(2.0)) - 1.0) / 2.0


def fit_voigt_dip(curve: G2Curve) -> FitResult:
    """Weighted least-squares fit of the dip model to a normalized curve.

    Free parameters: visibility (dip depth) and coherence time.  Initial
    values come from the minimum sample and the half-depth width; bins
    are weighted by their counting uncertainties (unit weights if the
    curve has none).  Returns a flagged failure instead of raising when
    the optimizer does not converge.
    """
    if len(curve) < 5:
        raise AnalysisError("dip fit needs at least 5 samples")
    x = curve.x
    y = curve.y
    sigma = curve.yerr if curve.yerr is not None else np.ones_like(y)
    sigma = np.where(sigma > 0, sigma, 1.0)

    i_min = int(np.argmin(y))
    depth = float(np.clip(1.0 - y[i_min], 1e-3, 1.0))
    noise = float(np.median(sigma))

    # Half-depth width of the contiguous region around the minimum; fall
    # back to a span-based guess for dips buried in noise.
    discernible = depth > 4.0 * noise
    if discernible:
        below = y < 1.0 - depth / 2.0
        left = right = i_min
        while left > 0 and below[left - 1]:
            left -= 1
        while right < len(y) - 1 and below[right + 1]:
            right += 1
        width = float(max(abs(x[left]), abs(x[right]), abs(x[1] - x[0])))
        tau_c0 = width / _HWHD
        span = float(min(abs(x.min()), abs(x.max())))
        if span < 3.0 * tau_c0 * 0.999:
            raise AnalysisError(
                f"dip curve spans only {span:g} ns per side; need >= 3 estimated "
                f"coherence times ({3 * tau_c0:g} ns) for a stable fit"
            )
    else:
        tau_c0 = float(x.max() - x.min()) / 6.0

    try:
        popt, pcov = curve_fit(
            voigt_dip_model, x, y, p0=[depth, tau_c0], sigma=sigma,
            absolute_sigma=True, bounds=([0.0, 1e-9], [1.5, np.inf]), maxfev=2000,
        )
    except (RuntimeError, ValueError):
        return FitResult(model="voigt_dip", converged=False)

    resid = (y - voigt_dip_model(x, *popt)) / sigma
    perr = np.sqrt(np.abs(np.diag(pcov)))
    return FitResult(
        model="voigt_dip",
        converged=True,
        params={"visibility": float(popt[0]), "tau_coh": float(popt[1])},
        uncertainties={"visibility": float(perr[0]), "tau_coh": float(perr[1])},
        residual_norm=float(np.linalg.norm(resid)),
        dof=max(len(x) - 2, 1),
    )


def fit_tent_dip(curve: G2Curve, t_mod: float, tau_coh: float | None = None) -> FitResult:
    """Fit the central tooth of a structured (modulated-field) dip curve.

    With square polarization envelopes the interference deficit repeats
    every modulation period in the detection-time difference; around
    tau = 0 the normalized curve is a tent 1 - V (1 - |tau|/w) whose
    depth V is the dip visibility at this optical delay and whose
    half-base w is the per-period polarization overlap time.  When
    ``tau_coh`` is given the tent is multiplied by the squared coherence
    envelope, which removes the small depth bias of coherence decay
    across the tooth.  Only |tau| <= 0.6 t_mod enters the fit, keeping
    the neighboring teeth out.
    """
    region = np.abs(curve.x) <= 0.6 * t_mod
    x = curve.x[region]
    y = curve.y[region]
    if len(x) < 5:
        raise AnalysisError("tent fit needs at least 5 bins within 0.6 modulation periods")
    sigma = curve.yerr[region] if curve.yerr is not None else np.ones_like(y)
    sigma = np.where(sigma > 0, sigma, 1.0)

    if tau_coh is not None:
        coherence_sq = np.exp(-2.0 * np.abs(x) / tau_coh - 2.0 * x**2 / tau_coh**2)
    else:
        coherence_sq = np.ones_like(x)

    def model(tau, vis, width):
        return 1.0 - vis * np.maximum(0.0, 1.0 - np.abs(tau) / width) * coherence_sq

    i0 = int(np.argmin(np.abs(x)))
    depth = float(np.clip(1.0 - y[i0], 1e-4, 1.0))
    noise = float(np.median(sigma))
    if depth < 2.0 * noise:
        # Dip buried in noise: report the tau=0 bin directly.
        return FitResult(
            model="tent",
            converged=True,
            params={"visibility": 1.0 - float(y[i0]), "width": math.nan},
            uncertainties={"visibility": float(sigma[i0]), "width": math.nan},
            residual_norm=math.nan,
            dof=1,
        )
    try:
        popt, pcov = curve_fit(
            model, x, y, p0=[depth, t_mod / 4.0], sigma=sigma,
            absolute_sigma=True,
            bounds=([0.0, 2.0 * abs(x[1] - x[0])], [1.0, 0.75 * t_mod]),
            maxfev=2000,
        )
    except (RuntimeError, ValueError):
        return FitResult(model="tent", converged=False)
    resid = (y - model(x, *popt)) / sigma
    perr = np.sqrt(np.abs(np.diag(pcov)))
    return FitResult(
        model="tent",
        converged=True,
        params={"visibility": float(popt[0]), "width": float(popt[1])},
        uncertainties={"visibility": float(perr[0]), "width": float(perr[1])},
        residual_norm=float(np.linalg.norm(resid)),
        dof=max(len(x) - 2, 1),
    )


def visibility_scan(curves: Mapping[float, G2Curve], method: str = "fit",
                    t_mod: float | None = None, tau_coh: float | None = None) -> G2Curve:
    """Dip visibility per optical delay.

    ``curves`` maps optical delay (ns) to a normalized dip curve.
    Methods:

    * ``"fit"``     fitted smooth-dip depth (unmodulated fields),
    * ``"tent"``    fitted central-tooth depth (square-modulated fields;
                    requires ``t_mod``),
    * ``"extrema"`` literal (max - min)/max of the samples.

    Fit methods fall back to the extrema when a fit does not converge.
    """
    if len(curves) < 8:
        raise AnalysisError(f"visibility scan needs >= 8 delay points, got {len(curves)}")
    delays = np.array(sorted(curves), dtype=float)
    if t_mod is not None and delays.max() - delays.min() < t_mod:
        raise AnalysisError("delay scan must span at least one modulation period")

    vals = np.empty(len(delays))
    errs = np.empty(len(delays))
    for i, d in enumerate(delays):
        curve = curves[d]
        vis = None
        if method == "fit":
            result = fit_voigt_dip(curve)
            if result.converged:
                vis = (result.params["visibility"], result.uncertainties["visibility"])
        elif method == "tent":
            if t_mod is None:
                raise AnalysisError("tent visibility needs the modulation period")
            result = fit_tent_dip(curve, t_mod, tau_coh=tau_coh)
            if result.converged:
                vis = (result.params["visibility"], result.uncertainties["visibility"])
        elif method != "extrema":
            raise AnalysisError(f"unknown visibility method {method!r}")
        if vis is None:
            v = curve_visibility(curve)
            vis = (v.value, v.uncertainty)
        vals[i], errs[i] = vis
    return G2Curve(kind="tau_opt", x=delays, y=vals, yerr=errs,
                   meta={"method": method, "n_delays": len(delays)})


def _triangle_model(x, period, offset, amplitude, floor):
    return floor + amplitude * eval_triangle_wave(period, x - offset)


def _initial_period(x: np.ndarray, y: np.ndarray) -> float:
    """Dominant period of the scan via a dense linear least-squares sweep.

    For each trial period, fit a sine/cosine pair linearly and keep the
    period with the smallest residual; deterministic, works on
    non-uniform delay grids.
    """
    span = float(x.max() - x.min())
    dx = float(np.min(np.diff(np.sort(x))))
    periods = np.linspace(max(4 * dx, span / 12.0), span, 400)
    yc = y - y.mean()
    best_p, best_rss = periods[0], np.inf
    for p in periods:
        w = 2.0 * math.pi / p
        design = np.column_stack([np.cos(w * x), np.sin(w * x)])
        coef, rss, _, _ = np.linalg.lstsq(design, yc, rcond=None)
        resid = yc - design @ coef
        score = float(resid @ resid)
        if score < best_rss:
            best_rss = score
            best_p = float(p)
    return best_p


def fit_triangle(scan: G2Curve) -> FitResult:
    """Least-squares triangle fit of a visibility-vs-delay scan.

    Free parameters: period, offset (delay of the visibility maximum),
    amplitude, and floor.  The initial period comes from a deterministic
    spectral sweep, the offset from the sample maximum.
    """
    if len(scan) < 6:
        raise AnalysisError("triangle fit needs at least 6 scan points")
    x = scan.x
    y = scan.y
    sigma = scan.yerr if scan.yerr is not None else np.ones_like(y)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma > 0):
        sigma = np.where(sigma > 0, sigma, sigma[sigma > 0].min())
    else:
        sigma = np.ones_like(y)

    period0 = _initial_period(x, y)
    span = float(x.max() - x.min())
    # Nominal requirement is 1.5 periods; leave a few percent of slack for
    # the error of the spectral period estimate itself.
    if span < 1.4 * period0:
        raise AnalysisError(
            f"scan spans {span:g} ns but the estimated period is {period0:g} ns; "
            "need >= 1.5 periods"
        )
    offset0 = float(x[np.argmax(y)])
    amp0 = float(np.clip(y.max() - y.min(), 1e-6, None))
    floor0 = float(y.min())

    p0 = [period0, offset0, amp0, floor0]
    bounds = (
        [0.3 * period0, offset0 - period0, 0.0, floor0 - 2 * amp0],
        [3.0 * period0, offset0 + period0, 4.0 * amp0 + 1e-6, floor0 + amp0],
    )
    try:
        # absolute_sigma=False: uncertainties are scaled by the residual
        # variance, so systematic scatter beyond counting noise (e.g. the
        # tick quantization of envelope overlaps) is reflected in them.
        popt, pcov = curve_fit(_triangle_model, x, y, p0=p0, sigma=sigma,
                               absolute_sigma=False, bounds=bounds, maxfev=5000)
    except (RuntimeError, ValueError):
        return FitResult(model="triangle", converged=False)

    resid = (y - _triangle_model(x, *popt)) / sigma
    perr = np.sqrt(np.abs(np.diag(pcov)))
    names = ("period", "offset", "amplitude", "floor")
    return FitResult(
        model="triangle",
        converged=True,
        params={n: float(v) for n, v in zip(names, popt)},
        uncertainties={n: float(e) for n, e in zip(names, perr)},
        residual_norm=float(np.linalg.norm(resid)),
        dof=max(len(x) - 4, 1),
    )


def write_summary(path: str | Path, payload: dict) -> None:
    """Write a machine-readable analysis summary (nested JSON document)."""
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)!r}")
