"""INI-style run configuration files.

A config file has three sections; every key is optional and falls back
to the defaults below (which reproduce the reference experiment):

    [experiment]
    mu = 3.4e-3              ; mean photons per modulation period per arm
    eta1 = 1.0               ; detector 3 efficiency
    eta2 = 1.0               ; detector 4 efficiency
    t_mod_ns = 2.83          ; modulation period
    tau_opt_ns = 0.0         ; optical delay of arm 1
    t_coin_ns = 0.3125       ; coincidence window
    tick_ns = 0.078125       ; time-tag resolution
    bin_width_ns = 0.15625   ; default histogram bin
    duration_ns = 6e9        ; simulated time
    rng_seed = 1
    trigger_every = 1024     ; record every Nth modulator trigger
    dead_time_ns = 0.0
    jitter_sigma_ns = 0.0

    [modulation]
    waveform = square        ; square | none (none = unmodulated CW)
    duty = 0.5
    duty2 =                  ; optional arm-2 override
    edge_time_ns = 0.0       ; linear rise/fall duration

    [coherence]
    tau_coh_ns = 2000.0      ; Voigt coherence time
    omega0_rad_per_ns = 0.0

Unknown sections or keys are rejected with a message naming them, so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .errors import ConfigurationError
from .model import CoherenceSpec, EnvelopeSet, ExperimentConfig, SquareWaveSpec

__all__ = ["RunSetup", "load_config", "default_setup", "config_as_dict"]

_EXPERIMENT_KEYS = {
    "mu": ("mu", float),
    "eta1": ("eta1", float),
    "eta2": ("eta2", float),
    "t_mod_ns": ("t_mod", float),
    "tau_opt_ns": ("tau_opt", float),
    "t_coin_ns": ("t_coin", float),
    "tick_ns": ("tick", float),
    "bin_width_ns": ("bin_width", float),
    "duration_ns": ("duration", float),
    "rng_seed": ("rng_seed", int),
    "trigger_every": ("trigger_every", int),
    "dead_time_ns": ("dead_time", float),
    "jitter_sigma_ns": ("jitter_sigma", float),
}

_MODULATION_KEYS = {"waveform", "duty", "duty2", "edge_time_ns"}
_COHERENCE_KEYS = {"tau_coh_ns": ("tau_coh", float), "omega0_rad_per_ns": ("omega0", float)}


class RunSetup:
    """Bundle of the three configuration objects one run needs."""

    def __init__(self, experiment: ExperimentConfig, coherence: CoherenceSpec,
                 envelopes: EnvelopeSet):
        self.experiment = experiment
        self.coherence = coherence
        self.envelopes = envelopes

    def replace_experiment(self, **kwargs) -> "RunSetup":
        from dataclasses import replace

        exp = replace(self.experiment, **kwargs)
        env = _build_envelopes(
            waveform="square" if self.envelopes.modulated else "none",
            t_mod=exp.t_mod,
            tau_opt=exp.tau_opt,
            duty=(self.envelopes.base.duty if self.envelopes.modulated else 0.5),
            duty2=self.envelopes.duty2,
            edge_time=(self.envelopes.base.edge_time if self.envelopes.modulated else 0.0),
        )
        return RunSetup(exp, self.coherence, env)


def _build_envelopes(waveform: str, t_mod: float, tau_opt: float, duty: float,
                     duty2: float | None, edge_time: float) -> EnvelopeSet:
    if waveform == "none":
        return EnvelopeSet.cw(tau_opt=tau_opt)
    if waveform != "square":
        raise ConfigurationError(f"unknown waveform {waveform!r} (expected 'square' or 'none')")
    base = SquareWaveSpec(period=t_mod, duty=duty, edge_time=edge_time)
    return EnvelopeSet(base=base, tau_opt=tau_opt, duty2=duty2)


def default_setup(**overrides) -> RunSetup:
    """The built-in defaults, optionally overridden field by field.

    Recognized override keys are the ExperimentConfig fields plus
    ``waveform``, ``duty``, ``duty2``, ``edge_time``, ``tau_coh`` and
    ``omega0``.
    """
    mod = {"waveform": "square", "duty": 0.5, "duty2": None, "edge_time": 0.0}
    coh = {"tau_coh": 2000.0, "omega0": 0.0}
    exp: dict = {}
    for key, value in overrides.items():
        if key in mod:
            mod[key] = value
        elif key in coh:
            coh[key] = value
        else:
            exp[key] = value  # let ExperimentConfig complain about typos
    try:
        experiment = ExperimentConfig(**exp)
    except TypeError as err:
        raise ConfigurationError(f"unknown configuration field: {err}") from None
    coherence = CoherenceSpec(**coh)
    envelopes = _build_envelopes(
        mod["waveform"], experiment.t_mod, experiment.tau_opt,
        mod["duty"], mod["duty2"], mod["edge_time"],
    )
    return RunSetup(experiment, coherence, envelopes)


def load_config(path: str | Path) -> RunSetup:
    """Parse a config file into (ExperimentConfig, CoherenceSpec, EnvelopeSet)."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as err:
        raise ConfigurationError(f"cannot parse {path}: {err}") from None

    known_sections = {"experiment", "modulation", "coherence"}
    extra = set(parser.sections()) - known_sections
    if extra:
        raise ConfigurationError(f"{path}: unknown section(s) {sorted(extra)}")

    overrides: dict = {}

    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key not in _EXPERIMENT_KEYS:
                raise ConfigurationError(f"{path}: unknown key 'experiment.{key}'")
            field, cast = _EXPERIMENT_KEYS[key]
            overrides[field] = _convert(path, f"experiment.{key}", raw, cast)

    if parser.has_section("modulation"):
        for key, raw in parser.items("modulation"):
            if key not in _MODULATION_KEYS:
                raise ConfigurationError(f"{path}: unknown key 'modulation.{key}'")
            if key == "waveform":
                overrides["waveform"] = raw.strip().lower()
            elif key == "duty":
                overrides["duty"] = _convert(path, "modulation.duty", raw, float)
            elif key == "duty2":
                overrides["duty2"] = (
                    None if raw.strip() == "" else _convert(path, "modulation.duty2", raw, float)
                )
            elif key == "edge_time_ns":
                overrides["edge_time"] = _convert(path, "modulation.edge_time_ns", raw, float)

    if parser.has_section("coherence"):
        for key, raw in parser.items("coherence"):
            if key not in _COHERENCE_KEYS:
                raise ConfigurationError(f"{path}: unknown key 'coherence.{key}'")
            field, cast = _COHERENCE_KEYS[key]
            overrides[field] = _convert(path, f"coherence.{key}", raw, cast)

    return default_setup(**overrides)


def _convert(path: Path, key: str, raw: str, cast):
    try:
        if cast is int:
            return int(float(raw))  # allow 1e3-style integers
        return cast(raw)
    except ValueError:
        raise ConfigurationError(f"{path}: key '{key}' has invalid value {raw!r}") from None


def config_as_dict(setup: RunSetup) -> dict:
    """JSON-ready snapshot of a run setup (used in manifests and summaries)."""
    exp = setup.experiment
    env = setup.envelopes
    return {
        "experiment": {
            "mu": exp.mu,
            "eta1": exp.eta1,
            "eta2": exp.eta2,
            "t_mod_ns": exp.t_mod,
            "t_mod_snapped_ns": exp.t_mod_snapped,
            "t_mod_ticks": exp.t_mod_ticks,
            "tau_opt_ns": exp.tau_opt,
            "t_coin_ns": exp.t_coin,
            "tick_ns": exp.tick,
            "bin_width_ns": exp.bin_width,
            "duration_ns": exp.duration,
            "rng_seed": exp.rng_seed,
            "trigger_every": exp.trigger_every,
            "dead_time_ns": exp.dead_time,
            "jitter_sigma_ns": exp.jitter_sigma,
        },
        "modulation": {
            "waveform": "square" if env.modulated else "none",
            "duty": (env.base.duty if env.modulated else None),
            "duty2": env.duty2,
            "edge_time_ns": (env.base.edge_time if env.modulated else None),
        },
        "coherence": {
            "tau_coh_ns": setup.coherence.tau_coh,
            "omega0_rad_per_ns": setup.coherence.omega0,
        },
    }
