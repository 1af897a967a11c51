"""Domain types, validation and config ingestion shared by all modules.

Everything here is a plain immutable value object.  Validation happens once,
in ``__post_init__`` or in :func:`load_config`; after that the objects can be
shared freely between trial workers.

Units: strictly SI inside the process (seconds, Hz, joules, radians).  The
on-disk config format uses SI as well, except angles, which are written in
units of pi (``phi_r: 0.5`` means pi/2) because that is how phase settings
are usually quoted.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

TWO_PI = 2.0 * math.pi

# Energy -> scattering-probability anchor pairs (energy [J], probability).
# Measured operating points of the reference device, one set per pulse role.
DEFAULT_CALIBRATION_ANCHORS = {
    "write": ((15e-15, 0.0013), (26e-15, 0.002)),
    "read": ((112e-15, 0.007), (225e-15, 0.014)),
}

DEFAULT_PERTURBATIVE_GUARD = 0.05


class ConfigError(ValueError):
    """Config file failed to parse or a value violates an invariant."""


class ValidationError(ConfigError):
    """A domain invariant is violated; the message names the invariant."""


class PulseRole(str, Enum):
    WRITE_EARLY = "WriteEarly"
    WRITE_LATE = "WriteLate"
    READ_EARLY = "ReadEarly"
    READ_LATE = "ReadLate"

    @property
    def is_write(self) -> bool:
        return self in (PulseRole.WRITE_EARLY, PulseRole.WRITE_LATE)

    @property
    def is_late(self) -> bool:
        return self in (PulseRole.WRITE_LATE, PulseRole.READ_LATE)


PULSE_ORDER = (
    PulseRole.WRITE_EARLY,
    PulseRole.WRITE_LATE,
    PulseRole.READ_EARLY,
    PulseRole.READ_LATE,
)


class ExperimentKind(str, Enum):
    THERMAL_G2_TAU = "ThermalG2Tau"
    DOUBLE_CROSS_CORRELATION = "DoubleCrossCorrelation"
    TIME_BIN_ENTANGLEMENT = "TimeBinEntanglement"
    BELL_TEST = "BellTest"
    CALIBRATION = "Calibration"


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class CavityParams:
    """Optomechanical cavity figures; only metadata plus the energy calibration
    depend on them, there is no intracavity field dynamics in this artifact."""

    wavelength: float = 1556.06e-9
    kappa: float = 1.05e9
    kappa_i: float = 250e6
    g0: float = 380e3
    mech_frequency: float = 5.154e9

    def __post_init__(self):
        for name in ("wavelength", "kappa", "kappa_i", "g0", "mech_frequency"):
            _require(getattr(self, name) > 0, f"cavity.{name} must be > 0")
        _require(self.kappa_i <= self.kappa, "cavity.kappa_i must not exceed cavity.kappa")


@dataclass(frozen=True)
class WaveguideParams:
    """Phononic waveguide: an ideal tau-delay with energy decay T1 plus an
    optional extra retrieval factor standing in for modal dispersion.

    ``retrieval_efficiency`` multiplies the round-trip energy survival on top
    of exp(-tau/T1).  How much of the observed readout inefficiency is
    dispersion rather than T1 is not independently known, so the split is a
    free config knob rather than a derived quantity.
    """

    round_trip_time: float = 126e-9
    group_velocity: float = 2000.0
    length: float = 126e-9 * 2000.0 / 2.0
    T1: float = 2.2e-6
    retrieval_efficiency: float = 1.0

    def __post_init__(self):
        _require(self.round_trip_time > 0, "waveguide.round_trip_time must be > 0")
        _require(self.T1 > self.round_trip_time, "waveguide.T1 must exceed the round-trip time")
        _require(0.0 <= self.retrieval_efficiency <= 1.0,
                 "waveguide.retrieval_efficiency must be in [0, 1]")
        expected = 2.0 * self.length / self.group_velocity
        if not (0.8 * expected <= self.round_trip_time <= 1.2 * expected):
            warnings.warn(
                "waveguide geometry inconsistent: tau=%.3g s but 2*length/group_velocity=%.3g s"
                % (self.round_trip_time, expected),
                stacklevel=2,
            )

    @property
    def round_trip_survival(self) -> float:
        """Energy survival of one round trip, T1 decay times retrieval factor."""
        return math.exp(-self.round_trip_time / self.T1) * self.retrieval_efficiency


@dataclass(frozen=True)
class PulseSpec:
    role: PulseRole
    center_time: float
    duration_fwhm: float = 30e-9
    energy: float | None = None
    scattering_probability: float = 0.0
    perturbative_guard: float = DEFAULT_PERTURBATIVE_GUARD

    def __post_init__(self):
        _require(self.duration_fwhm > 0, "pulse.duration_fwhm must be > 0")
        _require(0.0 <= self.scattering_probability < 1.0,
                 "pulse.scattering_probability must be in [0, 1)")
        if self.scattering_probability >= self.perturbative_guard:
            raise ValidationError(
                "pulse.scattering_probability %.4g breaks the perturbative guard %.4g "
                "(raise perturbative_guard explicitly to override)"
                % (self.scattering_probability, self.perturbative_guard)
            )

    @property
    def detuning_sign(self) -> str:
        """Blue-detuned drive for writes (pair creation), red for reads (swap)."""
        return "blue" if self.role.is_write else "red"


@dataclass(frozen=True)
class PhaseSettings:
    """Phases of the late pulses and the interferometer offset.

    ``phi_0`` is always derived: it is the write phase at which the
    correlation coefficient crosses zero with negative slope,
    phi_0 = 2*phi_off + pi/2 (mod 2pi).
    """

    phi_w: float = 0.0
    phi_r: float = 0.0
    phi_off: float = 0.0

    @property
    def phi_0(self) -> float:
        return (2.0 * self.phi_off + math.pi / 2.0) % TWO_PI

    def chsh_settings(self) -> tuple[tuple[float, float], ...]:
        """Default CHSH phase pairs (phi_w, phi_r) in the S sign convention
        E(a,b) - E(a',b) + E(a,b') + E(a',b')."""
        a = self.phi_0 + math.pi / 4.0
        a_p = self.phi_0 - math.pi / 4.0
        return ((a, 0.0), (a_p, 0.0), (a, math.pi / 2.0), (a_p, math.pi / 2.0))


@dataclass(frozen=True)
class NoiseModel:
    """Every imperfection the protocol folds in.

    thermal_schedule maps each pulse role to the mechanical occupancy reached
    after that pulse (including its delayed heating); the interaction that
    follows sees the previous entry, and the first write sees the ground
    state.  Detector/dark-count figures are assumptions, not measured values,
    and are flagged as such in run manifests.
    """

    thermal_schedule: tuple[tuple[PulseRole, float], ...] = (
        (PulseRole.WRITE_EARLY, 0.022),
        (PulseRole.WRITE_LATE, 0.040),
        (PulseRole.READ_EARLY, 0.066),
        (PulseRole.READ_LATE, 0.095),
    )
    interferometer_visibility: float = 0.94
    write_phase_jitter_fwhm: float = math.pi / 7.0
    read_phase_jitter_fwhm: float = math.pi / 20.0
    detector_efficiency: tuple[float, float] = (0.85, 0.85)
    dark_count_prob: float = 1e-6
    leakage_prob: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {"write": (2e-7, 4e-7), "read": (1.4e-6, 2.6e-6)}
    )
    coupling_efficiency: float = 0.5
    filter_pulse_efficiency: tuple[float, float] = (0.39, 0.65)

    def __post_init__(self):
        probs = [self.interferometer_visibility, self.dark_count_prob,
                 self.coupling_efficiency, *self.detector_efficiency,
                 *self.filter_pulse_efficiency]
        for role, val in self.leakage_prob.items():
            _require(role in ("write", "read"), f"leakage_prob key {role!r} not write/read")
            probs.extend(val)
        for v in probs:
            _require(0.0 <= v <= 1.0, "probability/occupancy out of range: %r" % (v,))
        _require(self.write_phase_jitter_fwhm >= 0, "write_phase_jitter_fwhm must be >= 0")
        _require(self.read_phase_jitter_fwhm >= 0, "read_phase_jitter_fwhm must be >= 0")
        occ = [v for _, v in self.thermal_schedule]
        for v in occ:
            _require(v >= 0, "probability/occupancy out of range: thermal occupancy %r" % (v,))
        if any(b < a for a, b in zip(occ, occ[1:])):
            warnings.warn("thermal_schedule is not non-decreasing across the four pulses",
                          stacklevel=2)

    def occupancy_after(self, role: PulseRole) -> float:
        for r, v in self.thermal_schedule:
            if r is role:
                return v
        raise KeyError(role)

    def occupancy_seen_by(self, role: PulseRole) -> float:
        """Occupancy the given pulse interacts with: the schedule entry of the
        preceding pulse (ground state before the first write)."""
        idx = PULSE_ORDER.index(role)
        if idx == 0:
            return 0.0
        return self.occupancy_after(PULSE_ORDER[idx - 1])

    def detector_chain_efficiency(self, detector: int) -> float:
        """Filter stack times SNSPD for detector 1 or 2 (1-based)."""
        return self.filter_pulse_efficiency[detector - 1] * self.detector_efficiency[detector - 1]


@dataclass(frozen=True)
class EngineSpec:
    name: str = "gaussian"
    truncation: int = 4
    total_cap: int | None = None

    def __post_init__(self):
        _require(self.name in ("fock", "gaussian"), f"unknown engine {self.name!r}")
        _require(self.truncation >= 1, "fock truncation must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ExperimentKind
    cavity: CavityParams = CavityParams()
    waveguide: WaveguideParams = WaveguideParams()
    pulses: tuple[PulseSpec, ...] = ()
    phases: PhaseSettings = PhaseSettings()
    phase_sweep: tuple[tuple[float, float], ...] | None = None
    noise: NoiseModel = NoiseModel()
    trials: int = 1_000_000
    seed: int = 0
    engine: EngineSpec = EngineSpec()
    repetition_period: float = 15e-6
    splitting_asymmetry: float = 0.0
    record_trials: int = 0
    extra: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        _require(self.trials >= 0, "trials must be >= 0")
        _require(0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        _require(0.0 <= self.splitting_asymmetry <= 0.005,
                 "splitting_asymmetry must be within 0.5% relative")
        if self.pulses:
            tau = self.waveguide.round_trip_time
            by_role = {p.role: p for p in self.pulses}
            for early, late in ((PulseRole.WRITE_EARLY, PulseRole.WRITE_LATE),
                                (PulseRole.READ_EARLY, PulseRole.READ_LATE)):
                if early in by_role and late in by_role:
                    dt = by_role[late].center_time - by_role[early].center_time
                    _require(abs(dt - tau / 2.0) <= 1e-12,
                             f"{late.value} must follow {early.value} by tau/2 exactly")
        # ~7 lifetimes between trials keeps them independent; the reference
        # spacing (15 us at T1 = 2.2 us) sits right at that margin
        if self.repetition_period < 6.8 * self.waveguide.T1:
            warnings.warn("repetition_period below ~7*T1; trials may not be independent",
                          stacklevel=2)

    def pulse(self, role: PulseRole) -> PulseSpec:
        for p in self.pulses:
            if p.role is role:
                return p
        raise KeyError(role)

    @property
    def p_w(self) -> float:
        return self.pulse(PulseRole.WRITE_EARLY).scattering_probability

    @property
    def p_r(self) -> float:
        return self.pulse(PulseRole.READ_EARLY).scattering_probability


@dataclass(frozen=True)
class OutcomeDistribution:
    """Exact probabilities over threshold-detector click patterns.

    ``labels`` names the detector channels (window/detector pairs at the
    protocol level, plain detector ids at the engine level); patterns are
    boolean tuples in label order.
    """

    labels: tuple[str, ...]
    probabilities: Mapping[tuple[bool, ...], float]

    def __post_init__(self):
        total = sum(self.probabilities.values())
        if not math.isclose(total, 1.0, abs_tol=1e-8):
            raise ValueError(f"pattern probabilities sum to {total!r}, not 1")

    def prob(self, **clicks: bool) -> float:
        """Marginal probability of the given click assignment, e.g. prob(d1=True)."""
        idx = {lab: i for i, lab in enumerate(self.labels)}
        sel = {idx[k]: v for k, v in clicks.items()}
        return sum(p for pat, p in self.probabilities.items()
                   if all(pat[i] == v for i, v in sel.items()))

    def with_background(self, extra_click_prob: Sequence[float]) -> "OutcomeDistribution":
        """OR an independent Bernoulli click (dark counts, leakage) onto each channel."""
        probs = dict(self.probabilities)
        for i, beta in enumerate(extra_click_prob):
            if beta <= 0.0:
                continue
            new: dict[tuple[bool, ...], float] = {}
            for pat, p in probs.items():
                if pat[i]:
                    new[pat] = new.get(pat, 0.0) + p
                else:
                    hit = pat[:i] + (True,) + pat[i + 1:]
                    new[pat] = new.get(pat, 0.0) + p * (1.0 - beta)
                    new[hit] = new.get(hit, 0.0) + p * beta
            probs = new
        return OutcomeDistribution(self.labels, probs)

    def sample_counts(self, trials: int, rng: np.random.Generator) -> dict[tuple[bool, ...], int]:
        pats = sorted(self.probabilities)
        pvec = np.array([self.probabilities[p] for p in pats], dtype=float)
        pvec = np.clip(pvec, 0.0, None)
        pvec /= pvec.sum()
        counts = rng.multinomial(trials, pvec)
        return {pat: int(c) for pat, c in zip(pats, counts) if c}


# ---------------------------------------------------------------------------
# operations


def scattering_probability_from_energy(
    energy: float,
    role: str,
    anchors: Mapping[str, Sequence[tuple[float, float]]] | None = None,
    guard: float = DEFAULT_PERTURBATIVE_GUARD,
) -> float:
    """Pulse energy to scattering probability, linear through the origin.

    The per-role slope is the least-squares fit through the calibration
    anchors (which are only approximately proportional to each other).
    Values above the perturbative guard are clipped, silently but logged
    via warning.
    """
    if energy < 0:
        raise ValidationError("energy must be >= 0")
    role = role.lower()
    table = (anchors or DEFAULT_CALIBRATION_ANCHORS)[role]
    es = np.array([e for e, _ in table], dtype=float)
    ps = np.array([p for _, p in table], dtype=float)
    if np.any(es <= 0) or np.any(ps <= 0):
        raise ValidationError("calibration anchors must be strictly positive")
    slope = float(np.dot(es, ps) / np.dot(es, es))
    p = slope * energy
    if p >= guard:
        warnings.warn(
            "scattering probability %.4g clipped to perturbative guard %.4g" % (p, guard),
            stacklevel=2,
        )
        p = math.nextafter(guard, 0.0)
    return p


def build_pulse_sequence(
    kind: ExperimentKind,
    tau: float,
    p_w: float = 0.002,
    p_r: float = 0.007,
    t0: float = 0.0,
    duration_fwhm: float = 30e-9,
    guard: float = DEFAULT_PERTURBATIVE_GUARD,
) -> tuple[PulseSpec, ...]:
    """Standard four-pulse schedule: writes at t0 and t0+tau/2, reads one full
    round trip after their writes.  ThermalG2Tau uses a continuous red pump
    and returns no discrete pulses."""
    if kind is ExperimentKind.THERMAL_G2_TAU:
        return ()
    if kind not in (ExperimentKind.DOUBLE_CROSS_CORRELATION,
                    ExperimentKind.TIME_BIN_ENTANGLEMENT,
                    ExperimentKind.BELL_TEST,
                    ExperimentKind.CALIBRATION):
        raise ValidationError(f"unsupported experiment kind {kind!r}")
    if tau <= 0:
        raise ValidationError("tau must be > 0")
    centers = {
        PulseRole.WRITE_EARLY: t0,
        PulseRole.WRITE_LATE: t0 + tau / 2.0,
        PulseRole.READ_EARLY: t0 + tau,
        PulseRole.READ_LATE: t0 + 1.5 * tau,
    }
    return tuple(
        PulseSpec(
            role=role,
            center_time=centers[role],
            duration_fwhm=duration_fwhm,
            scattering_probability=p_w if role.is_write else p_r,
            perturbative_guard=guard,
        )
        for role in PULSE_ORDER
    )


def fwhm_to_sigma(fwhm: float) -> float:
    return fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def sample_phase_jitter(rng: np.random.Generator, fwhm: float, size: int | None = None):
    """Zero-mean Gaussian phase jitter with the given FWHM of the occurrence
    histogram.  Deterministic given the generator state."""
    if fwhm < 0:
        raise ValidationError("jitter fwhm must be >= 0")
    if fwhm == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, fwhm_to_sigma(fwhm), size=size)


# ---------------------------------------------------------------------------
# config file I/O
#
# The file format is YAML with SI units everywhere except angles, which are
# in units of pi.  See configs/ for commented reference files.

_ANGLE_KEYS = {"phi_w", "phi_r", "phi_off", "write_phase_jitter_fwhm", "read_phase_jitter_fwhm"}


def _angles_in(data: float) -> float:
    return data * math.pi


def _angles_out(value: float) -> float:
    return value / math.pi


def _as_pair(value, key: str) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (float(value[0]), float(value[1]))
    raise ConfigError(f"{key} must be a scalar or a pair")


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and fully validate an experiment config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return config_from_dict(raw)
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(raw: Mapping) -> ExperimentConfig:
    for key in ("kind", "engine", "trials", "seed", "cavity", "waveguide",
                "pulses", "phases", "noise"):
        if key not in raw:
            raise ConfigError(f"missing required top-level key {key!r}")

    kind = ExperimentKind(raw["kind"])
    # PyYAML reads exponent notation without a sign (1.05e9) as a string
    cavity = CavityParams(**{k: float(v) for k, v in raw["cavity"].items()})

    wg = {k: float(v) for k, v in raw["waveguide"].items()}
    if "length" not in wg:
        wg["length"] = wg["round_trip_time"] * wg.get("group_velocity", 2000.0) / 2.0
    waveguide = WaveguideParams(**wg)

    engine_raw = raw["engine"]
    if isinstance(engine_raw, str):
        engine = EngineSpec(name=engine_raw)
    else:
        engine = EngineSpec(**engine_raw)

    guard = float(raw.get("perturbative_guard", DEFAULT_PERTURBATIVE_GUARD))
    anchors = raw.get("calibration_anchors")
    if anchors is not None:
        anchors = {k: tuple((float(e), float(p)) for e, p in v) for k, v in anchors.items()}

    pulses = []
    for p in raw["pulses"]:
        role = PulseRole(p["role"])
        prob = p.get("scattering_probability")
        energy = p.get("energy")
        if prob is None:
            if energy is None:
                raise ConfigError(f"pulse {role.value}: needs scattering_probability or energy")
            prob = scattering_probability_from_energy(
                float(energy), "write" if role.is_write else "read",
                anchors=anchors, guard=guard)
        pulses.append(PulseSpec(
            role=role,
            center_time=float(p["center_time"]),
            duration_fwhm=float(p.get("duration_fwhm", 30e-9)),
            energy=None if energy is None else float(energy),
            scattering_probability=float(prob),
            perturbative_guard=guard,
        ))

    ph = raw["phases"]
    sweep = None
    phi_w = ph.get("phi_w", 0.0)
    phi_r = ph.get("phi_r", 0.0)
    if "settings" in ph:
        sweep = tuple((_angles_in(float(w)), _angles_in(float(r))) for w, r in ph["settings"])
        phi_w = sweep[0][0] / math.pi
        phi_r = sweep[0][1] / math.pi
    elif isinstance(phi_w, (list, tuple)):
        rs = phi_r if isinstance(phi_r, (list, tuple)) else [phi_r]
        sweep = tuple((_angles_in(float(w)), _angles_in(float(r))) for r in rs for w in phi_w)
        phi_w, phi_r = sweep[0][0] / math.pi, sweep[0][1] / math.pi
    phases = PhaseSettings(
        phi_w=_angles_in(float(phi_w)),
        phi_r=_angles_in(float(phi_r)),
        phi_off=_angles_in(float(ph.get("phi_off", 0.0))),
    )

    nz = dict(raw["noise"])
    schedule = nz.pop("thermal_schedule", None)
    kwargs = {}
    if schedule is not None:
        kwargs["thermal_schedule"] = tuple(
            (PulseRole(role), float(v)) for role, v in schedule)
    for key in ("interferometer_visibility", "dark_count_prob", "coupling_efficiency"):
        if key in nz:
            kwargs[key] = float(nz.pop(key))
    for key in ("write_phase_jitter_fwhm", "read_phase_jitter_fwhm"):
        if key in nz:
            kwargs[key] = _angles_in(float(nz.pop(key)))
    for key in ("detector_efficiency", "filter_pulse_efficiency"):
        if key in nz:
            kwargs[key] = _as_pair(nz.pop(key), key)
    if "leakage_prob" in nz:
        kwargs["leakage_prob"] = {
            role: _as_pair(v, f"leakage_prob.{role}") for role, v in nz.pop("leakage_prob").items()}
    if nz:
        raise ConfigError(f"unknown noise keys: {sorted(nz)}")
    noise = NoiseModel(**kwargs)

    return ExperimentConfig(
        kind=kind,
        cavity=cavity,
        waveguide=waveguide,
        pulses=tuple(pulses),
        phases=phases,
        phase_sweep=sweep,
        noise=noise,
        trials=int(raw["trials"]),
        seed=int(raw["seed"]),
        engine=engine,
        repetition_period=float(raw.get("repetition_period", 15e-6)),
        splitting_asymmetry=float(raw.get("splitting_asymmetry", 0.0)),
        record_trials=int(raw.get("record_trials", 0)),
        extra=dict(raw.get("extra", {})),
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    c = config
    data: dict = {
        "kind": c.kind.value,
        "engine": {"name": c.engine.name, "truncation": c.engine.truncation},
        "trials": c.trials,
        "seed": c.seed,
        "repetition_period": c.repetition_period,
        "splitting_asymmetry": c.splitting_asymmetry,
        "record_trials": c.record_trials,
        "cavity": {
            "wavelength": c.cavity.wavelength,
            "kappa": c.cavity.kappa,
            "kappa_i": c.cavity.kappa_i,
            "g0": c.cavity.g0,
            "mech_frequency": c.cavity.mech_frequency,
        },
        "waveguide": {
            "round_trip_time": c.waveguide.round_trip_time,
            "group_velocity": c.waveguide.group_velocity,
            "length": c.waveguide.length,
            "T1": c.waveguide.T1,
            "retrieval_efficiency": c.waveguide.retrieval_efficiency,
        },
        "pulses": [
            {
                "role": p.role.value,
                "center_time": p.center_time,
                "duration_fwhm": p.duration_fwhm,
                **({"energy": p.energy} if p.energy is not None else {}),
                "scattering_probability": p.scattering_probability,
            }
            for p in c.pulses
        ],
        "phases": {
            "phi_w": _angles_out(c.phases.phi_w),
            "phi_r": _angles_out(c.phases.phi_r),
            "phi_off": _angles_out(c.phases.phi_off),
        },
        "noise": {
            "thermal_schedule": [[r.value, v] for r, v in c.noise.thermal_schedule],
            "interferometer_visibility": c.noise.interferometer_visibility,
            "write_phase_jitter_fwhm": _angles_out(c.noise.write_phase_jitter_fwhm),
            "read_phase_jitter_fwhm": _angles_out(c.noise.read_phase_jitter_fwhm),
            "detector_efficiency": list(c.noise.detector_efficiency),
            "dark_count_prob": c.noise.dark_count_prob,
            "leakage_prob": {k: list(v) for k, v in c.noise.leakage_prob.items()},
            "coupling_efficiency": c.noise.coupling_efficiency,
            "filter_pulse_efficiency": list(c.noise.filter_pulse_efficiency),
        },
    }
    if c.engine.total_cap is not None:
        data["engine"]["total_cap"] = c.engine.total_cap
    if c.phase_sweep is not None:
        data["phases"]["settings"] = [
            [_angles_out(w), _angles_out(r)] for w, r in c.phase_sweep]
    if c.extra:
        data["extra"] = dict(c.extra)
    return data


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(config), sort_keys=False))


def config_digest(config: ExperimentConfig) -> str:
    """Stable hash of the full config, used in manifests and result files."""
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def with_overrides(config: ExperimentConfig, overrides: Mapping[str, object]) -> ExperimentConfig:
    """Apply dotted-path overrides (e.g. ``noise.dark_count_prob=1e-7``) by
    round-tripping through the dict form so all validation re-runs."""
    data = config_to_dict(config)
    for dotted, value in overrides.items():
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node[part]
        leaf = parts[-1]
        if leaf not in node:
            raise ConfigError(f"unknown override target {dotted!r}")
        node[leaf] = yaml.safe_load(str(value)) if isinstance(value, str) else value
    return config_from_dict(data)
