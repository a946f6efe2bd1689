"""Modulated-carrier two-qubit phase gate on top of a mode spectrum.

The drive is a state-dependent force on one nearest-neighbour ion pair,
directed along the pair separation, with a fast carrier cos(nu t) under a
Gaussian envelope.  Per-mode driven dynamics give the residual displacement
integrals, the accumulated two-qubit phase, the amplitude calibration for a
pi phase, and the thermal gate fidelity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as const

from .crystal import CrystalState
from .modes import ModeSpectrum
from .quadrature import grid_for_frequencies
from .scales import TrapSetup, derive_scales, trap_frequencies

SIGN_CONFIGS = {"00": (1.0, 1.0), "01": (1.0, -1.0), "10": (-1.0, 1.0), "11": (-1.0, -1.0)}


@dataclass(frozen=True)
class GateSpec:
    """Force and pulse parameters of one gate run.

    ``carrier_frequency`` is the physical modulation nu in rad/s, times are
    seconds.  The Gaussian envelope is centred in the gate window by default
    with width gate_time/9, which suppresses the window-edge force below
    1e-8 of the peak.  ``nodes_per_period`` is the quadrature density on the
    fastest oscillation (composite Gauss-Legendre panels).
    """

    target_pair: tuple
    carrier_frequency: float
    gate_time: float
    envelope_center: float | None = None
    envelope_width: float | None = None
    amplitude: float = 1.0
    nodes_per_period: int = 40
    profile: object = None   # optional (times_s, values) drive replacing the carrier

    _WIDTH_FRACTION = 1.0 / 9.0  # edge force < 1e-8 of peak
    _PROFILE_SAMPLES_PER_PERIOD = 40

    def __post_init__(self):
        j1, j2 = self.target_pair
        if j1 == j2:
            raise ValueError("target pair must be two distinct ions")
        if self.carrier_frequency <= 0 or self.gate_time <= 0:
            raise ValueError("carrier frequency and gate time must be positive")
        if self.envelope_width is not None and self.envelope_width <= 0:
            raise ValueError("envelope width must be positive")

    @property
    def center(self) -> float:
        return 0.5 * self.gate_time if self.envelope_center is None else self.envelope_center

    @property
    def width(self) -> float:
        if self.envelope_width is None:
            return self._WIDTH_FRACTION * self.gate_time
        return self.envelope_width


@dataclass(frozen=True)
class GateResult:
    """Assembled outcome of a calibrated gate run."""

    amplitude: float
    theta: float
    theta_by_state: dict
    residuals: dict                  # ion index -> complex per-mode array (unit amplitude)
    fidelity_curve: list             # rows (T_K, F, branch)
    carrier_frequency: float
    gate_time: float


def _pair_geometry(state: CrystalState, pair):
    j1, j2 = pair
    sep = state.positions[j1, :2] - state.positions[j2, :2]
    dist = float(np.hypot(sep[0], sep[1]))
    if dist < 1e-12:
        raise ValueError("driven ions have zero in-plane separation")
    return sep / dist, dist


def _dimensionless(spec: GateSpec, setup: TrapSetup):
    wc = setup.cyclotron_frequency
    dims = {
        "nu": spec.carrier_frequency / wc,
        "tau": spec.gate_time * wc,
        "center": spec.center * wc,
        "width": spec.width * wc,
        "profile": None,
    }
    if spec.profile is not None:
        times, values = spec.profile
        times = np.asarray(times, dtype=float) * wc
        values = np.asarray(values, dtype=float)
        period = 2.0 * math.pi / dims["nu"]
        density = len(times) / (times[-1] - times[0]) * period if len(times) > 1 else 0.0
        if density < GateSpec._PROFILE_SAMPLES_PER_PERIOD:
            raise ValueError(
                "sampled drive under-resolved: need at least "
                f"{GateSpec._PROFILE_SAMPLES_PER_PERIOD} samples per modulation period"
            )
        dims["profile"] = (times, values)
    return dims


def _carrier(times, dims):
    """Normalized drive waveform: the cos carrier under the Gaussian
    envelope, or the sampled profile supplied by the pulse designer."""
    if dims["profile"] is not None:
        sample_times, values = dims["profile"]
        return np.interp(times, sample_times, values, left=0.0, right=0.0)
    arg = times - dims["center"]
    return np.cos(dims["nu"] * arg) * np.exp(-((arg / dims["width"]) ** 2))


def _force_prefactor(spec: GateSpec, state, setup, amplitude=None):
    """Scalar in front of the carrier in the dimensionless force magnitude."""
    scales = derive_scales(setup)
    freqs = trap_frequencies(setup)
    _, dist = _pair_geometry(state, spec.target_pair)
    amp = spec.amplitude if amplitude is None else amplitude
    omega_xy = freqs.omega_xy / setup.cyclotron_frequency
    return amp * scales.hbar_tilde * omega_xy / dist


def force_profile(t, spec: GateSpec, state: CrystalState, setup: TrapSetup):
    """Dimensionless force vectors on all ions at physical time t.

    Equal forces along the in-plane pair separation on the two target ions,
    zero elsewhere; the qubit-state signs enter downstream.
    """
    if not 0.0 <= t <= spec.gate_time:
        raise ValueError("time outside the gate window")
    dims = _dimensionless(spec, setup)
    unit, _ = _pair_geometry(state, spec.target_pair)
    magnitude = _force_prefactor(spec, state, setup) * _carrier(
        np.asarray(t * setup.cyclotron_frequency), dims
    )
    out = np.zeros((state.n_ions, 3))
    for j in spec.target_pair:
        out[j, 0] = magnitude * unit[0]
        out[j, 1] = magnitude * unit[1]
    return out


def pair_couplings(spec: GateSpec, spectrum: ModeSpectrum, state: CrystalState, setup: TrapSetup):
    """Per-mode complex coupling of each driven ion, including the 1/sqrt(2 hbar~)
    normalization of the quantized drive but not the force magnitude."""
    scales = derive_scales(setup)
    unit, _ = _pair_geometry(state, spec.target_pair)
    a_pos = spectrum.position_coefficients()
    couplings = {}
    for j in spec.target_pair:
        couplings[j] = (unit[0] * a_pos[:, 3 * j] + unit[1] * a_pos[:, 3 * j + 1]) / math.sqrt(
            2.0 * scales.hbar_tilde
        )
    return couplings


def _grid(spec: GateSpec, spectrum: ModeSpectrum, setup: TrapSetup):
    dims = _dimensionless(spec, setup)
    fastest = max(float(spectrum.frequencies.max()), dims["nu"])
    periods = fastest * dims["tau"] / (2.0 * math.pi)
    if spec.nodes_per_period < 20:
        required = math.ceil(20.0 * periods)
        raise ValueError(
            "quadrature under-resolved: need at least 20 nodes per period "
            f"of the fastest oscillation (>= {required} samples in total)"
        )
    return grid_for_frequencies(0.0, dims["tau"], fastest, spec.nodes_per_period)


def mode_drive(spec: GateSpec, spectrum: ModeSpectrum, state: CrystalState,
               setup: TrapSetup, qubit_signs=(1.0, 1.0)):
    """Evaluator t(s) -> per-mode drive amplitudes alpha_k(t) for one qubit
    sign configuration; times in seconds, output shape (3N, len(t))."""
    if spectrum.reference.n_ions != state.n_ions:
        raise ValueError("spectrum and state disagree on the ion count")
    dims = _dimensionless(spec, setup)
    couplings = pair_couplings(spec, spectrum, state, setup)
    j1, j2 = spec.target_pair
    s1, s2 = qubit_signs
    weights = s1 * couplings[j1] + s2 * couplings[j2]
    prefactor = _force_prefactor(spec, state, setup)

    def evaluate(times):
        tt = np.atleast_1d(np.asarray(times, dtype=float)) * setup.cyclotron_frequency
        profile = prefactor * _carrier(tt, dims)
        return weights[:, None] * profile[None, :]

    return evaluate


def residual_displacement(spec: GateSpec, spectrum: ModeSpectrum, state: CrystalState,
                          setup: TrapSetup, ion: int, amplitude=None):
    """Per-mode residual displacement integrals for one driven ion.

    I_k = omega_k^(-1/2) * integral_0^tau exp(i omega_k t) alpha_k(t) dt with
    only this ion's force and no qubit sign; linear in the amplitude.
    """
    if ion not in spec.target_pair:
        raise ValueError("residuals are defined for the driven ions")
    dims = _dimensionless(spec, setup)
    grid = _grid(spec, spectrum, setup)
    couplings = pair_couplings(spec, spectrum, state, setup)
    prefactor = _force_prefactor(spec, state, setup, amplitude=amplitude)
    profile = prefactor * _carrier(grid.flat_times, dims)
    omegas = spectrum.frequencies
    phases = np.exp(1j * omegas[:, None] * grid.flat_times[None, :])
    integrals = grid.integrate(phases * profile[None, :])
    return couplings[ion] * integrals / np.sqrt(omegas)


def phase_kernel(spec: GateSpec, spectrum: ModeSpectrum, setup: TrapSetup):
    """Real per-mode kernel G_k of the accumulated phase.

    G_k = int_0^tau dt c(t) int_0^t ds c(s) sin(omega_k (t - s)) for the
    normalized carrier-envelope profile c; the phase of a drive
    alpha_k = A c(t) is then |A|^2 G_k.
    """
    dims = _dimensionless(spec, setup)
    grid = _grid(spec, spectrum, setup)
    profile = _carrier(grid.flat_times, dims)
    omegas = spectrum.frequencies
    u = profile[None, :] * np.exp(1j * omegas[:, None] * grid.flat_times[None, :])
    running = grid.cumulative(u)
    return grid.integrate(np.imag(u * np.conj(running)))


@dataclass(frozen=True)
class PhaseResult:
    theta: float
    by_state: dict
    mode_phases: np.ndarray


def two_qubit_phase(spec: GateSpec, spectrum: ModeSpectrum, state: CrystalState,
                    setup: TrapSetup, ion_scales=(1.0, 1.0)) -> PhaseResult:
    """Accumulated phases for the four logical states and their gate combination
    theta = theta_00 - theta_01 - theta_10 + theta_11."""
    kernel = phase_kernel(spec, spectrum, setup)
    couplings = pair_couplings(spec, spectrum, state, setup)
    prefactor = _force_prefactor(spec, state, setup)
    j1, j2 = spec.target_pair
    w1 = ion_scales[0] * couplings[j1]
    w2 = ion_scales[1] * couplings[j2]
    by_state = {}
    for label, (s1, s2) in SIGN_CONFIGS.items():
        weights = s1 * w1 + s2 * w2
        by_state[label] = float(np.sum(np.abs(prefactor * weights) ** 2 * kernel))
    theta = by_state["00"] - by_state["01"] - by_state["10"] + by_state["11"]
    cross = 8.0 * np.real(w1 * np.conj(w2)) * np.abs(prefactor) ** 2 * kernel
    return PhaseResult(theta=float(theta), by_state=by_state, mode_phases=cross)


def calibrate_amplitude(spec: GateSpec, spectrum: ModeSpectrum, state: CrystalState,
                        setup: TrapSetup, target=math.pi) -> float:
    """Dimensionless force amplitude that makes |theta| equal the target."""
    from dataclasses import replace

    probe = replace(spec, amplitude=1.0)
    theta1 = two_qubit_phase(probe, spectrum, state, setup).theta
    if theta1 == 0.0:
        raise ValueError("degenerate drive: unit-amplitude phase vanishes")
    return math.sqrt(target / abs(theta1))


def thermal_weights(frequencies, temperature, setup: TrapSetup, skip=None):
    """Per-mode factor 1/(1 - exp(-hbar omega_k / k_B T)) with physical omega."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    x = const.hbar * np.asarray(frequencies) * setup.cyclotron_frequency / (
        const.k * temperature
    )
    out = 1.0 / -np.expm1(-x)
    if skip is not None:
        out = out.copy()
        out[skip] = 0.0
    return out


def fidelity(residual_1, residual_2, amplitude, spectrum: ModeSpectrum,
             temperature, setup: TrapSetup):
    """Thermal gate fidelity, worst case over the two sign branches.

    F = min_(+/-) prod_k exp[-(A^2/4) |I_k1 +/- I_k2|^2 / (1 - e^(-hbar
    omega_k / k_B T))]; the regularized rotation mode is not a physical
    oscillator and is excluded from the product.
    """
    weights = thermal_weights(
        spectrum.frequencies, temperature, setup, skip=spectrum.regularized_mode
    )
    exps = {}
    for label, sign in (("+", 1.0), ("-", -1.0)):
        combo = np.abs(residual_1 + sign * residual_2) ** 2
        exps[label] = float(amplitude**2 / 4.0 * np.sum(combo * weights))
    branch = max(exps, key=lambda k: exps[k])  # larger exponent = smaller F
    return math.exp(-exps[branch]), branch


def fidelity_curve(spec: GateSpec, spectrum: ModeSpectrum, state: CrystalState,
                   setup: TrapSetup, temperatures, amplitude=None):
    """Fidelity vs temperature rows (T, F, branch) at the calibrated amplitude."""
    amp = spec.amplitude if amplitude is None else amplitude
    j1, j2 = spec.target_pair
    res1 = residual_displacement(spec, spectrum, state, setup, j1, amplitude=1.0)
    res2 = residual_displacement(spec, spectrum, state, setup, j2, amplitude=1.0)
    rows = []
    for temp in temperatures:
        value, branch = fidelity(res1, res2, amp, spectrum, temp, setup)
        rows.append((float(temp), value, branch))
    return rows


def form_factors(frequencies, modes_matrix, regime, hbar_tilde, nu=None):
    """Pulse-shape independent two-particle form factors on orthogonal modes.

    ``regime`` is one of ``adiabatic``, ``modulated``, ``modulated-expansion``;
    the modulated forms need the carrier nu (same frequency units as the mode
    frequencies).  Returns the full coefficient matrix over coordinate pairs.
    """
    omegas = np.asarray(frequencies, dtype=float)
    m = np.asarray(modes_matrix, dtype=float)
    if regime == "adiabatic":
        coef = 1.0 / (2.0 * hbar_tilde * omegas**2)
    elif regime == "modulated":
        if nu is None:
            raise ValueError("modulated regime needs the carrier frequency")
        det = nu**2 - omegas**2
        near = np.abs(det) < 1e-6 * nu**2
        if np.any(near):
            idx = int(np.argmax(near))
            raise ValueError(f"carrier resonant with mode {idx} at frequency {omegas[idx]}")
        coef = -1.0 / (4.0 * hbar_tilde * det)
    elif regime == "modulated-expansion":
        if nu is None:
            raise ValueError("modulated regime needs the carrier frequency")
        coef = -(omegas**2) / (4.0 * hbar_tilde * nu**4)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return np.einsum("k,ka,kb->ab", coef, m, m)


@dataclass(frozen=True)
class LaserGeometry:
    """Standing-wave beam-pair geometry for the resource estimates."""

    waist: float          # m
    beam_angle: float     # rad, angle between the two wave vectors
    detuning: float       # rad/s
    wavelength: float     # m

    def __post_init__(self):
        if not 0.0 < self.beam_angle <= math.pi:
            raise ValueError("beam angle must lie in (0, pi]")
        if self.detuning == 0.0:
            raise ValueError("detuning must be nonzero")
        if self.waist <= 0 or self.wavelength <= 0:
            raise ValueError("waist and wavelength must be positive")


@dataclass(frozen=True)
class LaserResources:
    power: float
    scattered_photons: float
    scattering_fidelity: float


def laser_resources(setup: TrapSetup, geometry: LaserGeometry, amplitude,
                    pair_separation) -> LaserResources:
    """Laser power and photon-scattering estimates for the calibrated push.

    ``pair_separation`` is the physical distance between the driven ions in
    meters.  Power grows with sin^2 of the half beam angle while the number
    of scattered photons shrinks with it, so the angle trades power against
    scattering error.
    """
    species = setup.species
    freqs = trap_frequencies(setup)
    kappa = 2.0 * math.pi / geometry.wavelength
    power = (
        amplitude
        * freqs.omega_xy
        * geometry.detuning
        * const.hbar
        * const.c
        * kappa**2
        * geometry.waist**2
        * math.sin(0.5 * geometry.beam_angle) ** 2
        / (3.0 * species.linewidth * pair_separation)
    )
    n_phot = (
        math.sqrt(2.0)
        * math.pi**3
        * const.epsilon_0
        * const.c
        * species.mass**2
        * geometry.waist**2
        * freqs.omega_xy**4
        * pair_separation**3
        * math.sin(0.5 * geometry.beam_angle)
        / (3.0 * species.charge**2 * geometry.wavelength * power)
    )
    return LaserResources(
        power=power,
        scattered_photons=n_phot,
        scattering_fidelity=math.exp(-n_phot),
    )
