"""Monte-Carlo generation of time-tag streams.

Two mutually phase-randomized fields with polarization envelopes are
interfered semiclassically on a symmetric beam splitter; the two output
intensities drive per-tick Bernoulli detection (inhomogeneous Poisson
thinning) on a discrete tag clock.  Modulator trigger tags are inserted
on the same clock.

Phase model
-----------
The stochastic part of each laser field is a Wiener phase walk plus one
static frequency detuning per realization; the combination reproduces a
mixed exponential-Gaussian (Voigt) coherence decay.  What interference
actually sees is the *relative* phase between the two arms, whose
coherence decays as |G1|^2, i.e. a walk with twice the variance rate and
a detuning with twice the standard deviation of the single-laser trace
produced by ``simulate_phase``.  The two polarization components are
carried on separate modulator paths and long fibers, so each
polarization gets an independent relative-phase process; this is what
makes cross-polarized detections carry no interference term.

The simulation is partitioned into time segments with independently
derived seeds.  Each segment restarts the relative phases (fresh uniform
offset, fresh detuning), which both resamples the Gaussian spectral
component and makes segments order-independent and parallel-safe.
Segments are orders of magnitude longer than the coherence time, so the
loss of phase correlation across a boundary is negligible (it affects a
fraction tau/segment of pairs at time difference tau).

Event generation is exact per-tick Bernoulli: candidate ticks are drawn
at the global intensity bound and thinned by the instantaneous
intensity, which preserves the distribution while only ever evaluating
phases and envelopes at candidate times (the Wiener walk is sampled
exactly at arbitrary times, no grid needed).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConfigurationError, DataError
from .model import (
    CoherenceSpec,
    EnvelopeSet,
    ExperimentConfig,
    PolarizationAxis,
    envelope,
)

__all__ = [
    "Channel",
    "TagRecord",
    "TagStream",
    "PhaseTrace",
    "simulate_phase",
    "output_intensities",
    "generate_tags",
    "apply_detector_imperfections",
]

# Global bound on either output intensity for unit-amplitude complementary
# envelopes (fully constructive interference of both arms).
INTENSITY_BOUND = 2.0

FORMAT_VERSION = 1


class Channel(enum.IntEnum):
    """Wire values of the tag channels (match the binary file format)."""

    DET3 = 0
    DET4 = 1
    TRIGGER = 2


class TagRecord(NamedTuple):
    channel: Channel
    time: int  # ticks


@dataclass
class TagStream:
    """Ordered detection and trigger tags on a common tick clock."""

    times: np.ndarray  # uint64 ticks, non-decreasing
    channels: np.ndarray  # uint8 Channel values
    tick: float  # ns per tick
    t_mod_ticks: int
    seed: int
    trigger_every: int = 1
    tau_opt: float = 0.0  # realized optical delay (ns)
    version: int = FORMAT_VERSION
    config: ExperimentConfig | None = None

    def __post_init__(self) -> None:
        self.times = np.ascontiguousarray(self.times, dtype=np.uint64)
        self.channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if self.times.shape != self.channels.shape:
            raise DataError("times and channels must have equal length")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t_mod(self) -> float:
        """Realized modulation period in ns."""
        return self.t_mod_ticks * self.tick

    @property
    def duration(self) -> float:
        return float(self.times[-1]) * self.tick if len(self) else 0.0

    def channel_ticks(self, channel: Channel) -> np.ndarray:
        """Tick times of one channel as int64 (sorted)."""
        return self.times[self.channels == int(channel)].astype(np.int64)

    def records(self) -> Iterator[TagRecord]:
        for t, c in zip(self.times, self.channels):
            yield TagRecord(Channel(int(c)), int(t))

    def validate(self) -> None:
        """Check stream invariants; raises DataError on violation."""
        if len(self) and np.any(np.diff(self.times.astype(np.int64)) < 0):
            raise DataError("stream times are not non-decreasing")
        trig = self.channel_ticks(Channel.TRIGGER)
        if len(trig) >= 2:
            spacing = np.diff(trig)
            expected = self.t_mod_ticks * self.trigger_every
            if np.any(spacing != expected):
                raise DataError(
                    f"trigger tags are not strictly periodic: expected spacing "
                    f"{expected} ticks, found {set(np.unique(spacing))}"
                )


@dataclass
class PhaseTrace:
    """Sampled stochastic phase of one realization.

    ``theta`` holds phase samples on a uniform grid of spacing ``dt``;
    ``deltas`` the static detuning of each segment (one per independent
    realization segment, ``samples_per_segment`` samples each).
    """

    dt: float
    theta: np.ndarray
    deltas: np.ndarray
    samples_per_segment: int

    def times(self) -> np.ndarray:
        return np.arange(len(self.theta)) * self.dt


def simulate_phase(coh: CoherenceSpec, duration: float, dt: float, seed: int) -> PhaseTrace:
    """One realization of a single laser's stochastic phase.

    Wiener increments of variance 2 dt / tau_coh plus a linear drift
    delta * t with delta drawn once from N(0, 2/tau_coh^2).  The
    ensemble average of exp(i [theta(t+tau) - theta(t)]) then equals the
    magnitude of the Voigt autocorrelation.
    """
    if dt > coh.tau_coh / 100.0:
        raise ConfigurationError(
            f"phase step dt={dt:g} ns too coarse; need dt <= tau_coh/100 = "
            f"{coh.tau_coh / 100.0:g} ns"
        )
    if duration < dt:
        raise ConfigurationError("duration must cover at least one phase step")
    n = int(round(duration / dt)) + 1
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(0.0, 2.0 * math.pi)
    delta = rng.normal(0.0, math.sqrt(2.0) / coh.tau_coh)
    steps = rng.normal(0.0, math.sqrt(2.0 * dt / coh.tau_coh), n - 1)
    theta = np.empty(n)
    theta[0] = 0.0
    np.cumsum(steps, out=theta[1:])
    theta += theta0 + delta * np.arange(n) * dt
    return PhaseTrace(dt=dt, theta=theta, deltas=np.array([delta]), samples_per_segment=n)


def output_intensities(env: EnvelopeSet, theta, t):
    """Beam splitter output intensities (I3, I4) for unit-amplitude inputs.

    ``theta`` is the relative phase between the two arms: a scalar/array
    applied to both polarizations, or a pair (theta_H, theta_V) when the
    polarization components dephase independently.  For each polarization

        I3 = (z1^2 + z2^2 + 2 z1 z2 cos theta) / 2,
        I4 = (z1^2 + z2^2 - 2 z1 z2 cos theta) / 2,

    summed over H and V.  I3 + I4 is independent of the phases.
    """
    if isinstance(theta, tuple):
        theta_h, theta_v = theta
    else:
        theta_h = theta_v = theta
    i3 = 0.0
    i4 = 0.0
    for axis, th in ((PolarizationAxis.H, theta_h), (PolarizationAxis.V, theta_v)):
        z1 = envelope(env, axis, 1, t)
        z2 = envelope(env, axis, 2, t)
        base = np.square(z1) + np.square(z2)
        cross = 2.0 * z1 * z2 * np.cos(np.asarray(th, dtype=float))
        i3 = i3 + 0.5 * (base + cross)
        i4 = i4 + 0.5 * (base - cross)
    if np.ndim(i3) == 0:
        return float(i3), float(i4)
    return i3, i4


def _distinct_ticks(rng: np.random.Generator, n_ticks: int, k: int) -> np.ndarray:
    """Uniform k-subset of range(n_ticks), sorted; deterministic in rng."""
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k > n_ticks:
        raise ConfigurationError("cannot draw more candidate ticks than ticks")
    if 4 * k >= n_ticks:
        return np.sort(rng.permutation(n_ticks)[:k]).astype(np.int64)
    chosen = np.unique(rng.integers(0, n_ticks, size=k))
    while len(chosen) < k:
        extra = rng.integers(0, n_ticks, size=k - len(chosen))
        chosen = np.unique(np.concatenate([chosen, extra]))
    return chosen.astype(np.int64)


def _segment_ticks(cfg: ExperimentConfig, coh: CoherenceSpec) -> int:
    """Segment length: long vs. tau_coh, aligned to the trigger lattice."""
    trigger_period = cfg.t_mod_ticks * cfg.trigger_every
    target_ns = max(1000.0 * coh.tau_coh, 4.0e6)
    n = max(1, math.ceil(target_ns / cfg.tick / trigger_period))
    return n * trigger_period


def generate_tags(cfg: ExperimentConfig, coh: CoherenceSpec, env: EnvelopeSet,
                  seed: int | None = None) -> TagStream:
    """Simulate one run and return its tag stream.

    Detector i fires in tick [t, t+tick) with probability
    eta_i * (mu/2) * I_i(t) * tick / T_mod, so with I_i averaging to one
    the mean number of detections per modulation period per detector is
    eta_i * mu / 2.  Trigger tags are inserted every
    ``trigger_every`` modulation periods, starting at tick 0.

    The modulation period is realized as round(t_mod/tick) ticks on the
    tag clock and all modulation time scales (delay, edges) are rescaled
    by the same factor, so trigger tags and envelopes stay exactly
    aligned; the realized values are recorded on the stream.  Identical
    (cfg, seed) produce an identical stream.
    """
    if seed is None:
        seed = cfg.rng_seed
    if env.modulated and abs(env.base.period - cfg.t_mod) > 1e-9 * cfg.t_mod:
        raise ConfigurationError(
            f"envelope period {env.base.period:g} ns does not match config t_mod {cfg.t_mod:g} ns"
        )

    t_mod_sim = cfg.t_mod_snapped
    if env.modulated:
        env_sim = env.rescaled(cfg.clock_scale)
        # Pin the period to the exact tick multiple so the envelope can
        # never drift against the trigger lattice over long runs.
        env_sim = replace(env_sim, base=replace(env_sim.base, period=t_mod_sim))
    else:
        env_sim = env
    tau_opt_sim = env_sim.tau_opt

    p_bound = (
        max(cfg.eta1, cfg.eta2) * (cfg.mu / 2.0) * INTENSITY_BOUND * cfg.tick / t_mod_sim
    )
    if p_bound >= 0.1:
        raise ConfigurationError(
            f"per-tick detection probability bound {p_bound:.3g} >= 0.1; "
            "Bernoulli thinning is not a valid approximation (reduce mu)"
        )
    p_cand = np.array([
        cfg.eta1 * (cfg.mu / 2.0) * INTENSITY_BOUND * cfg.tick / t_mod_sim,
        cfg.eta2 * (cfg.mu / 2.0) * INTENSITY_BOUND * cfg.tick / t_mod_sim,
    ])

    total_ticks = int(round(cfg.duration / cfg.tick))
    seg_len = _segment_ticks(cfg, coh)
    n_segments = math.ceil(total_ticks / seg_len) if total_ticks else 0
    children = np.random.SeedSequence(seed).spawn(n_segments) if n_segments else []

    trigger_period = cfg.t_mod_ticks * cfg.trigger_every
    sqrt_rate = 2.0 / math.sqrt(coh.tau_coh)  # relative-phase Wiener scale

    det_times: list[np.ndarray] = []
    det_chans: list[np.ndarray] = []
    trig_parts: list[np.ndarray] = []

    for i_seg in range(n_segments):
        start = i_seg * seg_len
        n_ticks = min(seg_len, total_ticks - start)
        rng = np.random.default_rng(children[i_seg])

        # Fixed draw order keeps streams reproducible.
        theta0 = rng.uniform(0.0, 2.0 * math.pi, size=2)  # (H, V)
        delta = rng.normal(0.0, 2.0 / coh.tau_coh, size=2)
        k3 = int(rng.binomial(n_ticks, p_cand[0])) if p_cand[0] > 0 else 0
        idx3 = _distinct_ticks(rng, n_ticks, k3)
        k4 = int(rng.binomial(n_ticks, p_cand[1])) if p_cand[1] > 0 else 0
        idx4 = _distinct_ticks(rng, n_ticks, k4)

        merged = np.concatenate([idx3, idx4])
        uniq, inverse = np.unique(merged, return_inverse=True)
        n_u = len(uniq)
        if n_u:
            t_rel = uniq * cfg.tick  # ns since segment start
            gaps = np.diff(t_rel, prepend=0.0)
            steps = rng.normal(size=(2, n_u)) * (sqrt_rate * np.sqrt(gaps))
            walks = np.cumsum(steps, axis=1)
            theta = theta0[:, None] + walks + delta[:, None] * t_rel
        else:
            theta = np.zeros((2, 0))
        u3 = rng.random(k3)
        u4 = rng.random(k4)

        if n_u:
            t_abs = (start + uniq) * cfg.tick
            i3_all, i4_all = output_intensities(env_sim, (theta[0], theta[1]), t_abs)
            inv3 = inverse[: len(idx3)]
            inv4 = inverse[len(idx3):]
            keep3 = u3 < i3_all[inv3] / INTENSITY_BOUND
            keep4 = u4 < i4_all[inv4] / INTENSITY_BOUND
            hit3 = (start + idx3[keep3]).astype(np.uint64)
            hit4 = (start + idx4[keep4]).astype(np.uint64)
            if len(hit3):
                det_times.append(hit3)
                det_chans.append(np.full(len(hit3), int(Channel.DET3), dtype=np.uint8))
            if len(hit4):
                det_times.append(hit4)
                det_chans.append(np.full(len(hit4), int(Channel.DET4), dtype=np.uint8))

        trig_parts.append(np.arange(start, start + n_ticks, trigger_period, dtype=np.uint64))

    if det_times:
        times = np.concatenate(det_times + trig_parts)
        chans = np.concatenate(
            det_chans + [np.full(len(t), int(Channel.TRIGGER), dtype=np.uint8) for t in trig_parts]
        )
    else:
        times = np.concatenate(trig_parts) if trig_parts else np.empty(0, dtype=np.uint64)
        chans = np.full(len(times), int(Channel.TRIGGER), dtype=np.uint8)

    order = np.lexsort((chans, times))
    stream = TagStream(
        times=times[order],
        channels=chans[order],
        tick=cfg.tick,
        t_mod_ticks=cfg.t_mod_ticks,
        seed=seed,
        trigger_every=cfg.trigger_every,
        tau_opt=tau_opt_sim,
        config=cfg,
    )
    return stream


def apply_detector_imperfections(stream: TagStream, dead_time: float,
                                 jitter_sigma: float, seed: int) -> TagStream:
    """Apply non-paralyzable dead time, then Gaussian timing jitter.

    Dead time removes any event closer than ``dead_time`` to the last
    surviving event on the same detector channel.  Jitter displaces each
    surviving detector event by N(0, jitter_sigma) ns, re-quantized to
    ticks and clipped at zero.  Trigger tags are never touched.  With
    both parameters zero the stream is returned unchanged.
    """
    if dead_time < 0 or jitter_sigma < 0:
        raise ConfigurationError("dead_time and jitter_sigma must be >= 0")
    if dead_time == 0 and jitter_sigma == 0:
        return stream

    rng = np.random.default_rng(seed)
    dead_ticks = int(round(dead_time / stream.tick))

    times = stream.times.astype(np.int64)
    chans = stream.channels.copy()
    keep = np.ones(len(times), dtype=bool)

    if dead_ticks > 0:
        for det in (Channel.DET3, Channel.DET4):
            sel = np.flatnonzero(chans == int(det))
            last = None
            for i in sel:  # events are sparse; plain scan is fine
                t = times[i]
                if last is not None and t - last < dead_ticks:
                    keep[i] = False
                else:
                    last = t
        times = times[keep]
        chans = chans[keep]

    if jitter_sigma > 0:
        is_det = chans != int(Channel.TRIGGER)
        jit = rng.normal(0.0, jitter_sigma, size=int(is_det.sum()))
        shifted = times[is_det] * stream.tick + jit
        times = times.astype(np.float64)
        times[is_det] = np.maximum(0.0, np.round(shifted / stream.tick))
        times = times.astype(np.int64)

    order = np.lexsort((chans, times))
    return replace(
        stream,
        times=times[order].astype(np.uint64),
        channels=chans[order],
    )
