"""Experiment assembly: pulse interactions, thermal schedule, waveguide delay
bookkeeping, the unbalanced interferometer, the detection chain, heralding,
and exact-distribution or Monte Carlo execution.

Circuit layout per trial (entanglement-type experiments):

  write:  TMS(o_wE, m_E; p_w)  TMS(o_wL, m_L; p_w e^{i phi_w})
          -> coupling loss -> unbalanced MZI -> write detectors
  travel: mechanical modes lose exp(-tau/T1) * retrieval_efficiency, then
          thermal top-up to the scheduled occupancy seen by each read pulse
  read:   beam splitter sin^2 = p_r maps phonons onto o_rE / o_rL,
          phi_r on the late read -> coupling loss -> same MZI -> read detectors

The MZI convention: the delay arm carries phase +phi_off (plus lock jitter),
the Early pulse reaches the overlap window through it, so heralded
coincidences fringe as 1 + cos(phi_w + phi_r - 2*phi_off) on the same
detector pair and the zero crossing with negative slope sits at
phi_w = phi_0 = 2*phi_off + pi/2.

Imperfect first-order visibility V is a mode mismatch: the delayed pulse
passes a beam splitter of transmissivity V^2 whose reflected (orthogonal)
part still reaches both detectors but does not interfere, which scales the
interfering coherence by exactly V per pass.

All statistics of the overlap windows depend on the two lock-jitter samples
only through their sum, so exact jitter averaging is a 1-D Gauss-Hermite
quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import fock, gaussian
from .core import (
    ExperimentConfig,
    ExperimentKind,
    NoiseModel,
    OutcomeDistribution,
    PulseRole,
    fwhm_to_sigma,
    sample_phase_jitter,
)

WINDOWS = (
    "write-early-direct",
    "write-overlap",
    "write-late-delayed",
    "read-early-direct",
    "read-overlap",
    "read-late-delayed",
)

#: analysis channels: the overlap windows drive heralding and correlation
#: analysis; in open-delay-arm experiments the early bin lands in the
#: "direct" slot and the late bin in the (non-interfering) overlap slot.
ENTANGLEMENT_CHANNELS = (
    "write-overlap:1", "write-overlap:2", "read-overlap:1", "read-overlap:2")
CROSS_CORRELATION_CHANNELS = (
    "write-early-direct:1", "write-early-direct:2",
    "write-overlap:1", "write-overlap:2",
    "read-early-direct:1", "read-early-direct:2",
    "read-overlap:1", "read-overlap:2",
)

GH_NODES = 21
THERMAL_NOISE_EPSILON = 0.01
FOCK_PROTOCOL_NMAX = 4
FOCK_PROTOCOL_CAP = 6


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class InterferometerModel:
    delay: float
    phi_off: float
    visibility: float
    splitting_asymmetry: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ProtocolError("visibility must be in [0, 1]")
        if not 0.0 <= self.splitting_asymmetry <= 0.005:
            raise ProtocolError("splitting asymmetry must be <= 0.5% relative")

    @property
    def bs2_transmissivity(self) -> float:
        # port-ratio difference equals splitting_asymmetry
        return 0.5 * (1.0 + self.splitting_asymmetry)


@dataclass(frozen=True)
class DetectionChain:
    detector_efficiency: tuple[float, float]
    filter_pulse_efficiency: tuple[float, float]
    coupling_efficiency: float
    dark_count_prob: float
    leakage_prob: Mapping[str, tuple[float, float]]

    @staticmethod
    def from_noise(noise: NoiseModel) -> "DetectionChain":
        return DetectionChain(
            detector_efficiency=noise.detector_efficiency,
            filter_pulse_efficiency=noise.filter_pulse_efficiency,
            coupling_efficiency=noise.coupling_efficiency,
            dark_count_prob=noise.dark_count_prob,
            leakage_prob=dict(noise.leakage_prob),
        )

    def channel_efficiency(self, detector: int) -> float:
        eta = (self.filter_pulse_efficiency[detector - 1]
               * self.detector_efficiency[detector - 1])
        if not 0.0 <= eta <= 1.0:
            raise ProtocolError("composite efficiency out of [0, 1]")
        return eta

    def background_prob(self, channel: str) -> float:
        window, det = channel.rsplit(":", 1)
        role = "write" if window.startswith("write") else "read"
        return self.dark_count_prob + self.leakage_prob[role][int(det) - 1]


@dataclass(frozen=True)
class ClickRecord:
    trial: int
    clicks: tuple[str, ...]           # channel ids "window:detector"
    jitter_w: float
    jitter_r: float


# ---------------------------------------------------------------------------
# engine adapters: one mutable circuit-builder facade over each engine


class _GaussianCircuit:
    engine_name = "gaussian"

    def __init__(self):
        self.state = gaussian.CovarianceState(())

    def add_mode(self, label: str, thermal: float = 0.0):
        self.state = gaussian.add_vacuum_mode(self.state, label)
        if thermal > 0.0:
            self.state = gaussian.thermal_loss(self.state, label, 0.0, thermal)

    def squeeze(self, a, b, p, phi=0.0):
        self.state = gaussian.apply_two_mode_squeeze(self.state, a, b, p, phi)

    def beam_splitter(self, a, b, transmissivity, phi=0.0):
        self.state = gaussian.apply_beam_splitter(self.state, a, b, transmissivity, phi)

    def phase(self, m, phi):
        self.state = gaussian.apply_phase(self.state, m, phi)

    def loss(self, m, survival):
        self.state = gaussian.apply_loss(self.state, m, survival)

    def thermal_noise(self, m, delta_n):
        self.state = gaussian.apply_thermal_noise(self.state, m, delta_n)

    def mean_occupation(self, m):
        return self.state.mean_occupation(m)

    def click_distribution(self, detector_map, efficiency):
        return gaussian.click_probabilities(self.state, detector_map, efficiency)


class _FockCircuit:
    engine_name = "fock"

    def __init__(self, n_max: int = FOCK_PROTOCOL_NMAX, total_cap: int = FOCK_PROTOCOL_CAP):
        self.n_max = n_max
        self.total_cap = total_cap
        self.state: fock.FockState | None = None

    def add_mode(self, label: str, thermal: float = 0.0):
        if self.state is None:
            self.state = fock.init_thermal([label], self.n_max, {label: thermal},
                                           total_max=self.total_cap)
            return
        # appending re-enumerates the capped basis, so build thermal via channel
        self.state = fock.add_vacuum_mode(self.state, label)
        if thermal > 0.0:
            self.state = fock.apply_thermal_loss(self.state, label, 0.0, thermal)

    def squeeze(self, a, b, p, phi=0.0):
        self.state = fock.apply_two_mode_squeeze(self.state, a, b, p, phi)

    def beam_splitter(self, a, b, transmissivity, phi=0.0):
        self.state = fock.apply_beam_splitter(self.state, a, b, transmissivity, phi)

    def phase(self, m, phi):
        self.state = fock.apply_phase(self.state, m, phi)

    def loss(self, m, survival):
        self.state = fock.apply_loss(self.state, m, survival)

    def thermal_noise(self, m, delta_n):
        self.state = fock.apply_thermal_noise(self.state, m, delta_n)

    def mean_occupation(self, m):
        return self.state.mean_occupation(m)

    def drop(self, labels: Sequence[str]):
        keep = [m for m in self.state.modes if m not in set(labels)]
        self.state = fock.partial_trace(self.state, keep)

    def measure(self, detector_map, efficiency):
        return fock.measure_threshold(self.state, detector_map, efficiency)

    def click_distribution(self, detector_map, efficiency):
        return fock.click_distribution(self.state, detector_map, efficiency)


# ---------------------------------------------------------------------------
# circuit stages


def apply_interferometer(
    circuit,
    which: str,
    early_mode: str,
    late_mode: str,
    phi_late: float,
    interferometer: InterferometerModel,
    jitter: float = 0.0,
    keep_side_windows: bool = False,
) -> dict[str, list[str]]:
    """Send the early/late pulse pair through the unbalanced MZI.

    Returns the mapping from detector channels to engine modes.  With
    ``keep_side_windows`` the non-overlap time slots get their own detector
    modes; otherwise the light headed there is traced out (a plain loss),
    which leaves every overlap-window statistic untouched.
    """
    pre = "w" if which == "write" else "r"
    phi_delay = interferometer.phi_off + jitter
    circuit.phase(late_mode, phi_late)

    groups: dict[str, list[str]] = {}
    if keep_side_windows:
        d_early, d_late = f"{pre}:ed", f"{pre}:ld"
        circuit.add_mode(d_early)
        circuit.add_mode(d_late)
        # BS1: early keeps the delay-arm part, ancilla takes the direct slot
        circuit.beam_splitter(early_mode, d_early, 0.5)
        circuit.beam_splitter(late_mode, d_late, 0.5)
        circuit.phase(d_late, phi_delay)  # delayed-late slot, not interfering
        for slot, mode in ((f"{which}-early-direct", d_early),
                           (f"{which}-late-delayed", d_late)):
            anc = f"{pre}:{slot}:2"
            circuit.add_mode(anc)
            circuit.beam_splitter(mode, anc, 0.5)
            groups[f"{slot}:1"] = [mode]
            groups[f"{slot}:2"] = [anc]
    else:
        circuit.loss(early_mode, 0.5)
        circuit.loss(late_mode, 0.5)

    circuit.phase(early_mode, phi_delay)
    mis = f"{pre}:mis"
    circuit.add_mode(mis)
    v = interferometer.visibility
    circuit.beam_splitter(early_mode, mis, v * v)
    circuit.beam_splitter(early_mode, late_mode, interferometer.bs2_transmissivity)
    mis2 = f"{pre}:mis2"
    circuit.add_mode(mis2)
    circuit.beam_splitter(mis, mis2, 0.5)
    groups[f"{which}-overlap:1"] = [early_mode, mis]
    groups[f"{which}-overlap:2"] = [late_mode, mis2]
    return groups


def apply_open_interferometer(circuit, which: str, early_mode: str, late_mode: str,
                              phi_late: float) -> dict[str, list[str]]:
    """Delay arm disconnected: each pulse loses its delayed half and the
    direct half splits over the two detectors without interference.  The
    early bin occupies the direct slot and the late bin the overlap slot."""
    pre = "w" if which == "write" else "r"
    circuit.phase(late_mode, phi_late)
    groups: dict[str, list[str]] = {}
    for slot, mode in ((f"{which}-early-direct", early_mode),
                       (f"{which}-overlap", late_mode)):
        circuit.loss(mode, 0.5)
        anc = f"{pre}:{slot}:2"
        circuit.add_mode(anc)
        circuit.beam_splitter(mode, anc, 0.5)
        groups[f"{slot}:1"] = [mode]
        groups[f"{slot}:2"] = [anc]
    return groups


def run_write_stage(
    circuit,
    config: ExperimentConfig,
    phi_w: float,
    jitter: float = 0.0,
    keep_side_windows: bool = False,
) -> dict[str, list[str]]:
    """Two write pulses: pair creation on each time bin, then the write
    photons through coupling loss and the interferometer."""
    noise = config.noise
    circuit.add_mode("o_wE")
    circuit.add_mode("o_wL")
    circuit.add_mode("m_E", thermal=noise.occupancy_seen_by(PulseRole.WRITE_EARLY))
    circuit.add_mode("m_L", thermal=noise.occupancy_seen_by(PulseRole.WRITE_LATE))
    p_wE = config.pulse(PulseRole.WRITE_EARLY).scattering_probability
    p_wL = config.pulse(PulseRole.WRITE_LATE).scattering_probability
    circuit.squeeze("o_wE", "m_E", p_wE, 0.0)
    circuit.squeeze("o_wL", "m_L", p_wL, 0.0)
    circuit.loss("o_wE", noise.coupling_efficiency)
    circuit.loss("o_wL", noise.coupling_efficiency)
    interferometer = InterferometerModel(
        delay=config.waveguide.round_trip_time / 2.0,
        phi_off=config.phases.phi_off,
        visibility=noise.interferometer_visibility,
        splitting_asymmetry=config.splitting_asymmetry,
    )
    if config.kind is ExperimentKind.DOUBLE_CROSS_CORRELATION:
        return apply_open_interferometer(circuit, "write", "o_wE", "o_wL", phi_w)
    return apply_interferometer(circuit, "write", "o_wE", "o_wL", phi_w,
                                interferometer, jitter, keep_side_windows)


def run_read_stage(
    circuit,
    config: ExperimentConfig,
    phi_r: float,
    jitter: float = 0.0,
    keep_side_windows: bool = False,
) -> dict[str, list[str]]:
    """Round-trip decay and thermal top-up of the mechanical bins, readout
    beam splitters, then the read photons through the interferometer."""
    noise = config.noise
    survival = config.waveguide.round_trip_survival
    for mech, read_role in (("m_E", PulseRole.READ_EARLY), ("m_L", PulseRole.READ_LATE)):
        circuit.loss(mech, survival)
        target = noise.occupancy_seen_by(read_role)
        # the injection channel itself attenuates by (1 - epsilon) before
        # adding delta, so solve for the delta that lands on the target
        delta = target - (1.0 - THERMAL_NOISE_EPSILON) * circuit.mean_occupation(mech)
        if delta > 1e-12:
            circuit.thermal_noise(mech, delta)
    p_rE = config.pulse(PulseRole.READ_EARLY).scattering_probability
    p_rL = config.pulse(PulseRole.READ_LATE).scattering_probability
    circuit.add_mode("o_rE")
    circuit.add_mode("o_rL")
    circuit.beam_splitter("o_rE", "m_E", 1.0 - p_rE)
    circuit.beam_splitter("o_rL", "m_L", 1.0 - p_rL)
    circuit.loss("o_rE", noise.coupling_efficiency)
    circuit.loss("o_rL", noise.coupling_efficiency)
    interferometer = InterferometerModel(
        delay=config.waveguide.round_trip_time / 2.0,
        phi_off=config.phases.phi_off,
        visibility=noise.interferometer_visibility,
        splitting_asymmetry=config.splitting_asymmetry,
    )
    if config.kind is ExperimentKind.DOUBLE_CROSS_CORRELATION:
        return apply_open_interferometer(circuit, "read", "o_rE", "o_rL", phi_r)
    return apply_interferometer(circuit, "read", "o_rE", "o_rL", phi_r,
                                interferometer, jitter, keep_side_windows)


def _efficiency_map(groups: Mapping[str, list[str]], chain: DetectionChain) -> dict[str, float]:
    return {ch: chain.channel_efficiency(int(ch.rsplit(":", 1)[1])) for ch in groups}


def detect(distribution: OutcomeDistribution, chain: DetectionChain) -> OutcomeDistribution:
    """Fold dark counts and pump leakage into an efficiency-resolved click
    distribution as independent per-channel Bernoulli ORs."""
    return distribution.with_background(
        [chain.background_prob(ch) for ch in distribution.labels])


# ---------------------------------------------------------------------------
# exact joint distributions


def _analysis_channels(kind: ExperimentKind, keep_side_windows: bool) -> tuple[str, ...]:
    if kind is ExperimentKind.DOUBLE_CROSS_CORRELATION:
        return CROSS_CORRELATION_CHANNELS
    if keep_side_windows:
        side = ("write-early-direct", "write-late-delayed",
                "read-early-direct", "read-late-delayed")
        extra = tuple(f"{w}:{d}" for w in side for d in (1, 2))
        return ENTANGLEMENT_CHANNELS + extra
    return ENTANGLEMENT_CHANNELS


def exact_joint_distribution(
    config: ExperimentConfig,
    phi_w: float,
    phi_r: float,
    jitter_w: float = 0.0,
    jitter_r: float = 0.0,
    engine: str | None = None,
    keep_side_windows: bool = False,
    with_background: bool = True,
) -> OutcomeDistribution:
    """Joint click-pattern distribution over the analysis channels for one
    phase setting and one jitter sample."""
    engine = engine or config.engine.name
    chain = DetectionChain.from_noise(config.noise)
    if engine == "gaussian":
        circuit = _GaussianCircuit()
        groups = run_write_stage(circuit, config, phi_w, jitter_w, keep_side_windows)
        groups.update(run_read_stage(circuit, config, phi_r, jitter_r, keep_side_windows))
        order = _analysis_channels(config.kind, keep_side_windows)
        ordered = {ch: groups[ch] for ch in order}
        dist = circuit.click_distribution(ordered, _efficiency_map(ordered, chain))
    elif engine == "fock":
        dist = _fock_joint_distribution(config, phi_w, phi_r, jitter_w, jitter_r)
    else:
        raise ProtocolError(f"unknown engine {engine!r}")
    if with_background:
        dist = detect(dist, chain)
    return dist


def _fock_joint_distribution(config, phi_w, phi_r, jitter_w, jitter_r) -> OutcomeDistribution:
    """Staged exact Fock pipeline: measure and trace the write photons first,
    then run the read stage on each conditioned mechanical state.  Keeps at
    most six live modes."""
    chain = DetectionChain.from_noise(config.noise)
    n_max = config.engine.truncation if config.engine.name == "fock" else FOCK_PROTOCOL_NMAX
    cap = config.engine.total_cap or FOCK_PROTOCOL_CAP
    circuit = _FockCircuit(n_max, cap)
    w_groups = run_write_stage(circuit, config, phi_w, jitter_w)
    w_channels = [ch for ch in _analysis_channels(config.kind, False) if ch.startswith("write")]
    r_channels = [ch for ch in _analysis_channels(config.kind, False) if ch.startswith("read")]
    w_map = {ch: w_groups[ch] for ch in w_channels}
    branches = circuit.measure(w_map, _efficiency_map(w_map, chain))
    joint: dict[tuple[bool, ...], float] = {}
    for w_pattern, w_prob, mech_state in branches:
        read = _FockCircuit(n_max, cap)
        read.state = mech_state
        r_groups = run_read_stage(read, config, phi_r, jitter_r)
        r_map = {ch: r_groups[ch] for ch in r_channels}
        r_dist = read.click_distribution(r_map, _efficiency_map(r_map, chain))
        for r_pattern, r_prob in r_dist.probabilities.items():
            pattern = w_pattern + r_pattern
            joint[pattern] = joint.get(pattern, 0.0) + w_prob * r_prob
    labels = tuple(w_channels) + tuple(r_channels)
    total = sum(joint.values())
    joint = {k: v / total for k, v in joint.items()}
    return OutcomeDistribution(labels, joint)


def _jitter_scale(noise: NoiseModel) -> float:
    return math.hypot(fwhm_to_sigma(noise.write_phase_jitter_fwhm),
                      fwhm_to_sigma(noise.read_phase_jitter_fwhm))


def jitter_averaged_distribution(
    config: ExperimentConfig,
    phi_w: float,
    phi_r: float,
    engine: str | None = None,
    nodes: int = GH_NODES,
) -> OutcomeDistribution:
    """Exact average over the lock-phase jitter.  Overlap statistics depend
    on the write and read jitters only through their sum, so a 1-D
    Gauss-Hermite rule is exact up to quadrature order."""
    sigma = _jitter_scale(config.noise)
    if sigma == 0.0 or config.kind is ExperimentKind.DOUBLE_CROSS_CORRELATION:
        return exact_joint_distribution(config, phi_w, phi_r, engine=engine)
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    mix: dict[tuple[bool, ...], float] = {}
    labels = None
    for xi, wi in zip(x, w):
        dist = exact_joint_distribution(config, phi_w, phi_r,
                                        jitter_w=sigma * xi, engine=engine)
        labels = dist.labels
        for pat, p in dist.probabilities.items():
            mix[pat] = mix.get(pat, 0.0) + wi * p
    total = sum(mix.values())
    return OutcomeDistribution(labels, {k: v / total for k, v in mix.items()})


# ---------------------------------------------------------------------------
# experiment driver


@dataclass
class SettingResult:
    phi_w: float
    phi_r: float
    distribution: OutcomeDistribution
    counts: dict[tuple[bool, ...], int] | None = None
    trials: int = 0


@dataclass
class ExperimentResult:
    kind: ExperimentKind
    settings: list[SettingResult]
    records: list[ClickRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def _phase_settings(config: ExperimentConfig) -> list[tuple[float, float]]:
    if config.phase_sweep is not None:
        return list(config.phase_sweep)
    if config.kind is ExperimentKind.BELL_TEST:
        return list(config.phases.chsh_settings())
    return [(config.phases.phi_w, config.phases.phi_r)]


def run_experiment(config: ExperimentConfig, engine: str | None = None) -> ExperimentResult:
    """Exact distribution per phase setting plus, when trials > 0, sampled
    counts (aggregate Monte Carlo) and optionally per-trial click records.

    Deterministic given (config, seed): trials are i.i.d., so aggregate
    sampling from the jitter-averaged exact distribution is statistically
    identical to per-trial simulation, and per-trial records draw their own
    jitter from substreams keyed by (seed, setting, trial)."""
    if config.kind is ExperimentKind.THERMAL_G2_TAU:
        raise ProtocolError("ThermalG2Tau runs through the waveguide-dynamics module")
    engine = engine or config.engine.name
    settings = _phase_settings(config)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed))
    result = ExperimentResult(kind=config.kind, settings=[], metadata={
        "engine": engine,
        "seed": config.seed,
        "trials_per_setting": config.trials,
        "repetition_period": config.repetition_period,
        "trial_spacing_over_t1": config.repetition_period / config.waveguide.T1,
        "assumed_detector_efficiency": list(config.noise.detector_efficiency),
        "assumed_dark_count_prob": config.noise.dark_count_prob,
    })
    for idx, (phi_w, phi_r) in enumerate(settings):
        dist = jitter_averaged_distribution(config, phi_w, phi_r, engine=engine)
        sr = SettingResult(phi_w=phi_w, phi_r=phi_r, distribution=dist)
        if config.trials > 0:
            sr.counts = sample_counts_chunked(dist, config.trials, config.seed, idx)
            sr.trials = config.trials
        result.settings.append(sr)
        if config.record_trials > 0:
            result.records.extend(
                _sample_records(config, phi_w, phi_r, engine, idx,
                                min(config.record_trials, config.trials or config.record_trials)))
    return result


SAMPLE_CHUNK = 10_000_000


def sample_counts_chunked(dist: OutcomeDistribution, trials: int, seed: int,
                           setting_idx: int) -> dict[tuple[bool, ...], int]:
    """Aggregate multinomial sampling in fixed-size chunks, each drawn from an
    absolute (seed, setting, chunk) substream, so the result cannot depend on
    scheduling or worker count."""
    out: dict[tuple[bool, ...], int] = {}
    chunk_idx = 0
    remaining = trials
    while remaining > 0:
        n = min(SAMPLE_CHUNK, remaining)
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=seed, spawn_key=(setting_idx, chunk_idx)))
        for pat, c in dist.sample_counts(n, rng).items():
            out[pat] = out.get(pat, 0) + c
        remaining -= n
        chunk_idx += 1
    return out


def _sample_records(config, phi_w, phi_r, engine, setting_idx, n_trials) -> list[ClickRecord]:
    noise = config.noise
    records = []
    sigma_w = fwhm_to_sigma(noise.write_phase_jitter_fwhm)
    cache: dict[float, OutcomeDistribution] = {}
    quantize = 64
    scale = _jitter_scale(noise)
    for trial in range(n_trials):
        trng = np.random.default_rng(np.random.SeedSequence(
            entropy=config.seed, spawn_key=(1_000_000 + setting_idx, trial)))
        jw = float(sample_phase_jitter(trng, noise.write_phase_jitter_fwhm))
        jr = float(sample_phase_jitter(trng, noise.read_phase_jitter_fwhm))
        delta = jw + jr
        if scale > 0:
            # quantize the jitter sum onto a fine grid so distributions cache
            key = round(delta / (8.0 * scale) * quantize) / quantize * 8.0 * scale
        else:
            key = 0.0
        dist = cache.get(key)
        if dist is None:
            dist = exact_joint_distribution(config, phi_w, phi_r, jitter_w=key, engine=engine)
            cache[key] = dist
        pats = sorted(dist.probabilities)
        pvec = np.clip([dist.probabilities[p] for p in pats], 0, None)
        pat = pats[trng.choice(len(pats), p=pvec / pvec.sum())]
        clicks = tuple(ch for ch, c in zip(dist.labels, pat) if c)
        records.append(ClickRecord(trial=trial, clicks=clicks, jitter_w=jw, jitter_r=jr))
    return records


# ---------------------------------------------------------------------------
# rate budget


def rate_budget(config: ExperimentConfig) -> dict:
    """Analytic expected event rates with every factor spelled out.  Detector
    efficiency and dark counts are declared assumptions."""
    noise = config.noise
    chain = DetectionChain.from_noise(config.noise)
    p_w = config.p_w
    p_r = config.p_r
    rep_rate = 1.0 / config.repetition_period
    det_avg = 0.5 * (chain.channel_efficiency(1) + chain.channel_efficiency(2))
    overlap_fraction = 0.5  # inherent time-bin MZI acceptance of the overlap slot
    herald_factors = {
        "write_scattering_both_bins": 2.0 * p_w,
        "coupling_efficiency": noise.coupling_efficiency,
        "interferometer_overlap_fraction": overlap_fraction,
        "mean_filter_and_detector_efficiency": det_avg,
    }
    p_herald = 1.0
    for v in herald_factors.values():
        p_herald *= v
    survival = config.waveguide.round_trip_survival
    read_factors = {
        "read_scattering": p_r,
        "round_trip_survival": survival,
        "heralded_occupancy": 1.0 + noise.occupancy_seen_by(PulseRole.READ_EARLY),
        "coupling_efficiency": noise.coupling_efficiency,
        "interferometer_overlap_fraction": overlap_fraction,
        "mean_filter_and_detector_efficiency": det_avg,
    }
    p_read = 1.0
    for v in read_factors.values():
        p_read *= v
    heralds_per_hour = 3600.0 * rep_rate * p_herald
    coincidences_per_hour = heralds_per_hour * p_read
    return {
        "repetition_rate_hz": rep_rate,
        "herald_probability_per_trial": p_herald,
        "herald_factors": herald_factors,
        "read_click_probability_given_herald": p_read,
        "read_factors": read_factors,
        "heralds_per_hour": heralds_per_hour,
        "coincidences_per_hour": coincidences_per_hour,
        "assumptions": [
            "detector efficiency %.2f/%.2f (not a measured value)" % chain.detector_efficiency,
            "dark counts %.1e per window (not a measured value)" % chain.dark_count_prob,
        ],
    }
