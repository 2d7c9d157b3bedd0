"""Physical parameter types and deterministic waveform/coherence functions.

All times are in nanoseconds, frequencies in rad/ns.  The types here are
immutable after construction and every function is pure, so everything in
this module is safe for unrestricted concurrent use.

The central objects are trapezoidal square waves (the drive of a fast
polarization modulator), the four mode envelopes zeta_{sigma,k}(t) built
from them (sigma in {H, V}, input arm k in {1, 2}), and the mixed
exponential-Gaussian field autocorrelation of a laser with a Voigt
spectral line.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "PolarizationAxis",
    "SquareWaveSpec",
    "EnvelopeSet",
    "CoherenceSpec",
    "ExperimentConfig",
    "eval_square_wave",
    "eval_triangle_wave",
    "envelope",
    "g1",
]


class PolarizationAxis(enum.Enum):
    """The two orthogonal polarization modes switched by the modulator."""

    H = "H"
    V = "V"


@dataclass(frozen=True)
class SquareWaveSpec:
    """Periodic trapezoidal square wave.

    The wave sits at ``high_level`` on the first ``duty`` fraction of each
    period and at ``low_level`` on the rest.  ``phase_offset`` shifts the
    pattern in time; the wave evaluates to ``high_level`` at
    ``t == phase_offset`` when ``edge_time`` is zero.  A non-zero
    ``edge_time`` replaces each jump by a linear ramp of that duration,
    centered on the ideal switching instant (so at the instant itself the
    value is the mid level).
    """

    period: float
    duty: float = 0.5
    phase_offset: float = 0.0
    low_level: float = 0.0
    high_level: float = 1.0
    edge_time: float = 0.0

    def __post_init__(self) -> None:
        if not self.period > 0:
            raise ConfigurationError(f"square wave period must be > 0, got {self.period}")
        if not 0.0 < self.duty < 1.0:
            raise ConfigurationError(f"duty cycle must lie in (0, 1), got {self.duty}")
        if self.edge_time < 0:
            raise ConfigurationError(f"edge_time must be >= 0, got {self.edge_time}")
        # Both plateaus must survive the ramps.
        if self.duty * self.period <= self.edge_time or (1.0 - self.duty) * self.period <= self.edge_time:
            raise ConfigurationError(
                "edge_time %g ns does not fit inside the %g/%g ns high/low levels"
                % (self.edge_time, self.duty * self.period, (1.0 - self.duty) * self.period)
            )

    def rescaled(self, factor: float) -> "SquareWaveSpec":
        """Uniformly stretch all time scales by ``factor``."""
        return replace(
            self,
            period=self.period * factor,
            phase_offset=self.phase_offset * factor,
            edge_time=self.edge_time * factor,
        )


def _wrap(t: np.ndarray, period: float) -> np.ndarray:
    """Remainder in [0, period); floor-based, much faster than fmod."""
    x = t - np.floor(t / period) * period
    # floating round-off can land exactly on the period
    return np.where(x >= period, x - period, np.where(x < 0.0, x + period, x))


def eval_square_wave(spec: SquareWaveSpec, t):
    """Evaluate a trapezoidal square wave at time(s) ``t``.

    Accepts scalars or arrays; periodic for all real ``t``.
    """
    t = np.asarray(t, dtype=float)
    x = _wrap(t - spec.phase_offset, spec.period)

    lo, hi = spec.low_level, spec.high_level
    d = spec.duty * spec.period
    e = spec.edge_time

    if e == 0.0:
        out = np.where(x < d, hi, lo)
        return out if out.ndim else float(out)

    # Rising ramp is centered on x = 0 (wrapping), falling ramp on x = d.
    half = 0.5 * e
    out = np.where(x < d, hi, lo).astype(float)
    x_wrapped = np.where(x >= spec.period - half, x - spec.period, x)
    rising = np.abs(x_wrapped) < half
    out = np.where(rising, lo + (hi - lo) * (x_wrapped + half) / e, out)
    falling = np.abs(x - d) < half
    out = np.where(falling, hi - (hi - lo) * (x - d + half) / e, out)
    return out if out.ndim else float(out)


def eval_triangle_wave(period: float, t):
    """Symmetric triangle wave in [0, 1]: 1 at zero shift, 0 at half period.

    Defined as the (rescaled) period-averaged overlap of two ideal
    symmetric square waves shifted by ``t`` against each other, which is
    the normalization used throughout the structured-interference
    formulas; see ``analytic.g2_triangle``.
    """
    if not period > 0:
        raise ConfigurationError(f"triangle period must be > 0, got {period}")
    t = np.asarray(t, dtype=float)
    x = _wrap(t, period)
    dist = np.minimum(x, period - x)
    out = 1.0 - 2.0 * dist / period
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EnvelopeSet:
    """The four mode envelopes zeta_{sigma,k}(t) of the two input arms.

    ``base`` is the 0-to-1 square wave of the H envelope in arm 2 (the
    undelayed arm).  Arm 1 is the same pattern delayed by ``tau_opt``.
    The V envelope of each arm is the exact complement of its H envelope
    (one physical modulator routes every photon to either H or V), i.e. a
    square wave with duty ``1 - duty`` whose ramps coincide with the H
    ramps.  Per-arm duty cycles may differ via ``duty1``/``duty2``.

    ``base=None`` selects an unmodulated (CW) field: zeta_H = 1 and
    zeta_V = 0 at all times.
    """

    base: SquareWaveSpec | None
    tau_opt: float = 0.0
    duty1: float | None = None
    duty2: float | None = None

    def __post_init__(self) -> None:
        if self.base is not None:
            if not (self.base.low_level == 0.0 and self.base.high_level == 1.0):
                raise ConfigurationError("envelope base wave must have levels 0 -> 1")
            # Validate per-arm duty overrides by constructing the specs.
            self.arm_spec(PolarizationAxis.H, 1)
            self.arm_spec(PolarizationAxis.V, 1)
            self.arm_spec(PolarizationAxis.H, 2)
            self.arm_spec(PolarizationAxis.V, 2)

    @classmethod
    def ideal(cls, t_mod: float, tau_opt: float = 0.0, duty: float = 0.5,
              edge_time: float = 0.0) -> "EnvelopeSet":
        """Square envelopes with a common duty cycle for both arms."""
        return cls(base=SquareWaveSpec(period=t_mod, duty=duty, edge_time=edge_time),
                   tau_opt=tau_opt)

    @classmethod
    def cw(cls, tau_opt: float = 0.0) -> "EnvelopeSet":
        """Unmodulated field: all light stays in H."""
        return cls(base=None, tau_opt=tau_opt)

    @property
    def modulated(self) -> bool:
        return self.base is not None

    @property
    def period(self) -> float | None:
        return None if self.base is None else self.base.period

    def duty_of_arm(self, arm: int) -> float:
        assert self.base is not None
        if arm == 1:
            return self.base.duty if self.duty1 is None else self.duty1
        if arm == 2:
            return self.base.duty if self.duty2 is None else self.duty2
        raise ConfigurationError(f"arm must be 1 or 2, got {arm}")

    def arm_spec(self, axis: PolarizationAxis, arm: int) -> SquareWaveSpec:
        """Square wave spec realizing zeta_{axis,arm}."""
        assert self.base is not None
        duty = self.duty_of_arm(arm)
        delay = self.tau_opt if arm == 1 else 0.0
        if axis is PolarizationAxis.H:
            return replace(self.base, duty=duty, phase_offset=self.base.phase_offset + delay)
        # V is the complement: duty 1-d, high level starting where H drops.
        return replace(
            self.base,
            duty=1.0 - duty,
            phase_offset=self.base.phase_offset + delay + duty * self.base.period,
        )

    def rescaled(self, factor: float) -> "EnvelopeSet":
        """Uniformly stretch period, delay, and edge times by ``factor``."""
        if self.base is None:
            return self
        return replace(self, base=self.base.rescaled(factor), tau_opt=self.tau_opt * factor)


def envelope(env: EnvelopeSet, axis: PolarizationAxis, arm: int, t):
    """Evaluate zeta_{axis,arm}(t); amplitude in [0, 1]."""
    if not env.modulated:
        t = np.asarray(t, dtype=float)
        val = 1.0 if axis is PolarizationAxis.H else 0.0
        out = np.full_like(t, val)
        return out if out.ndim else float(out)
    return eval_square_wave(env.arm_spec(axis, arm), t)


@dataclass(frozen=True)
class CoherenceSpec:
    """Voigt coherence model: mixed exponential-Gaussian decay.

    ``tau_coh`` is the coherence time shared by the Lorentzian and
    Gaussian components, ``omega0`` the optical carrier in rad/ns.  Only
    relative phases are observable in every quantity computed here, so
    ``omega0`` defaults to zero.
    """

    tau_coh: float
    omega0: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau_coh > 0:
            raise ConfigurationError(f"tau_coh must be > 0, got {self.tau_coh}")
        if self.omega0 < 0:
            raise ConfigurationError(f"omega0 must be >= 0, got {self.omega0}")


def g1(coh: CoherenceSpec, tau):
    """First-order field autocorrelation G1(tau).

    exp(-|tau|/tau_coh - tau^2/tau_coh^2) * exp(-i omega0 tau); complex,
    with even magnitude and G1(0) = 1.
    """
    tau = np.asarray(tau, dtype=float)
    mag = np.exp(-np.abs(tau) / coh.tau_coh - tau**2 / coh.tau_coh**2)
    out = mag * np.exp(-1j * coh.omega0 * tau)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical and detector parameters of one simulated run.

    mu        mean photon number per modulation period and input arm
    eta1/2    detection efficiencies of the two output detectors
    t_mod     modulation period (ns)
    tau_opt   optical delay of arm 1 relative to arm 2 (ns)
    t_coin    coincidence window (ns)
    tick      time-tag clock resolution (ns)
    bin_width default analysis bin (ns)
    duration  simulated wall time (ns); zero is allowed and yields an
              empty stream
    rng_seed  seed of the deterministic random stream
    trigger_every
              record one modulator trigger tag every N periods (the
              modulator still runs every period; tags are decimated so
              file sizes stay sane, and phase folding is modulo-exact)
    dead_time / jitter_sigma
              optional detector imperfections (ns), both default off
    """

    mu: float = 3.4e-3
    eta1: float = 1.0
    eta2: float = 1.0
    t_mod: float = 2.83
    tau_opt: float = 0.0
    t_coin: float = 0.3125
    tick: float = 0.078125
    bin_width: float = 0.15625
    duration: float = 6.0e9
    rng_seed: int = 1
    trigger_every: int = 1024
    dead_time: float = 0.0
    jitter_sigma: float = 0.0

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ConfigurationError(f"mu must be > 0, got {self.mu}")
        for name in ("eta1", "eta2"):
            eta = getattr(self, name)
            if not 0.0 <= eta <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {eta}")
        if not self.t_mod > 0:
            raise ConfigurationError(f"t_mod must be > 0, got {self.t_mod}")
        if not self.tick > 0:
            raise ConfigurationError(f"tick must be > 0, got {self.tick}")
        if not self.tick <= self.bin_width <= self.t_coin < self.t_mod:
            raise ConfigurationError(
                "need tick <= bin_width <= t_coin < t_mod, got "
                f"{self.tick} / {self.bin_width} / {self.t_coin} / {self.t_mod}"
            )
        if self.duration < 0:
            raise ConfigurationError(f"duration must be >= 0, got {self.duration}")
        if self.trigger_every < 1:
            raise ConfigurationError(f"trigger_every must be >= 1, got {self.trigger_every}")
        if self.dead_time < 0 or self.jitter_sigma < 0:
            raise ConfigurationError("dead_time and jitter_sigma must be >= 0")

    @property
    def t_mod_ticks(self) -> int:
        """Modulation period on the tag clock, in ticks (>= 1)."""
        return max(1, round(self.t_mod / self.tick))

    @property
    def t_mod_snapped(self) -> float:
        """Modulation period actually realized on the tick lattice (ns).

        2.83 ns on a 78.125 ps clock is 36.224 ticks; the simulator runs
        modulator and trigger on exactly round(t_mod/tick) ticks so that
        trigger tags and envelopes stay aligned indefinitely.
        """
        return self.t_mod_ticks * self.tick

    @property
    def clock_scale(self) -> float:
        """Ratio snapped/requested modulation period (close to 1)."""
        return self.t_mod_snapped / self.t_mod

    def validate_duration(self) -> str | None:
        """Return a warning when the run is too short to average well."""
        if self.duration == 0:
            return "duration is zero: the stream will contain only the t=0 trigger"
        if self.duration < 100 * self.t_mod:
            return (
                f"duration {self.duration:g} ns covers fewer than 100 modulation "
                "periods; statistical results will be poor"
            )
        return None


def _midpoint_grid(period: float, n: int) -> np.ndarray:
    """Jump-avoiding sampling grid over one period (used by tests/oracles)."""
    return (np.arange(n) + 0.5) * (period / n)


# Exposed for oracle-style numeric averaging over one modulation period.
def period_average(fn, period: float, n: int = 4096) -> float:
    """Numerically average fn(t) over one period on a midpoint grid.

    Exact for piecewise-constant fn whose jumps lie on the n-point grid
    boundaries; midpoint sampling is the trapezoidal rule for periodic
    integrands.
    """
    t = _midpoint_grid(period, n)
    return float(np.mean(fn(t)))


def _format_time(ns: float) -> str:
    if ns >= 1e9:
        return f"{ns / 1e9:g} s"
    if ns >= 1e3:
        return f"{ns / 1e3:g} us"
    return f"{ns:g} ns"


def describe_config(cfg: ExperimentConfig) -> str:
    """One-line human summary used by the CLI."""
    return (
        f"mu={cfg.mu:g}/period, eta=({cfg.eta1:g}, {cfg.eta2:g}), "
        f"T_mod={cfg.t_mod:g} ns ({cfg.t_mod_ticks} ticks of {cfg.tick:g} ns), "
        f"tau_opt={cfg.tau_opt:g} ns, T_coin={cfg.t_coin:g} ns, "
        f"duration={_format_time(cfg.duration)}, seed={cfg.rng_seed}"
    )
