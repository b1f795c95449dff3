"""Phenomenological optical engine: emission, frequency mapping, probing.

Three instruments share one beam model (a disc spot of Rayleigh radius
0.61*wavelength/NA):

* emission capture - camera view; every switching node contributes counts
  proportional to switching frequency, footprint area and exposure, blurred
  by the lens PSF and Poisson sampled on top of a dark rate.
* frequency-selective scan - the spot dwells on each pixel; nodes modulate
  in proportion to footprint area and laser power, attenuated by a
  rectangular-window sinc in (frequency offset x dwell), on a Rayleigh
  noise floor.
* trace probing - the parked spot samples reflected intensity over one
  trigger period; an average of N repetitions scales noise by 1/sqrt(N).
  Masked-stream links draw fresh pad bits on every repetition, which is
  exactly what defeats the averaging.

All intensities are arbitrary calibrated units; only ratios and
signal-to-noise behaviour are contractual. The laser's only side effect on
the circuit is localized heating expressed as a propagation-delay increase
(`thermal_delay_delta`); at 1.3 um the photons cannot generate carriers, so
no fault injection exists in this model, and sub-1.1 um configurations are
rejected outright.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .floorplan import FloorPlan
from .stimulus import MaskedStream, Off, StimulusProgram, spectral_line, switching_rate_hz
from .geometry import disc_intersection_area

# objective lenses: magnification -> numerical aperture
LENSES = {"5x": 0.14, "20x": 0.40, "50x": 0.76, "71x": 0.86}

PHOTOELECTRIC_THRESHOLD_UM = 1.1

# thermal side effect of the parked beam (100% power asymptote and settle)
THERMAL_DELTA_100_PS = 0.792
THERMAL_TAU_S = 0.25


class OpticsError(ValueError):
    pass


class FaultInjectionNotModeledError(OpticsError):
    """Wavelengths below the photoelectric threshold are out of scope."""


class AcquisitionError(OpticsError):
    """Probing attempted in an invalid laser state."""


class ReplayAlignmentError(OpticsError):
    """Trigger period is not a whole number of pattern periods."""


def spot_radius_um(lens: str, wavelength_um: float = 1.3) -> float:
    """Rayleigh spot radius 0.61 * wavelength / NA."""
    if lens not in LENSES:
        raise OpticsError(f"unknown lens {lens!r}; choose from {sorted(LENSES)}")
    return 0.61 * wavelength_um / LENSES[lens]


@dataclass(frozen=True)
class LaserState:
    """Beam position, power and objective; `on_since_s` feeds the thermal ramp."""

    x_um: float = 0.0
    y_um: float = 0.0
    power_pct: float = 100.0
    wavelength_um: float = 1.3
    lens: str = "71x"
    on: bool = False
    on_since_s: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.power_pct <= 100.0):
            raise OpticsError("power_pct must be within [0, 100]")
        if self.lens not in LENSES:
            raise OpticsError(f"unknown lens {self.lens!r}")
        if self.wavelength_um < PHOTOELECTRIC_THRESHOLD_UM:
            raise FaultInjectionNotModeledError(
                f"wavelength {self.wavelength_um} um could photoexcite carriers; "
                "fault injection is not modeled"
            )

    @property
    def spot_radius_um(self) -> float:
        return spot_radius_um(self.lens, self.wavelength_um)

    def moved(self, x_um: float, y_um: float) -> "LaserState":
        return replace(self, x_um=x_um, y_um=y_um)


@dataclass(frozen=True)
class OpticsConfig:
    """Model constants; defaults documented here are the calibration anchors."""

    dark_rate_cps: float = 5.0            # counts / pixel / s
    emission_coeff: float = 1e-6          # counts / (Hz * um^2 * s)
    psf_sigma_factor: float = 0.5         # Gaussian PSF sigma = factor * spot radius
    eofm_amp_coeff: float = 1.0           # units / um^2 at 100% power
    eofm_noise_sigma: float = 0.05        # Rayleigh sigma of the noise floor
    eop_baseline: float = 10.0            # arbitrary reflected-intensity offset
    eop_depth_coeff: float = 1.0 / (math.pi * 1.2**2)  # modulation depth / um^2;
    # anchors a default-geometry wire driver at depth 1.0
    eop_noise_sigma: float = 0.5          # single-shot white noise


DEFAULT_OPTICS = OpticsConfig()


@dataclass
class OpticalMap:
    """2D intensity grid over a region; row 0 is the bottom (lowest y)."""

    kind: str                      # "emission" | "eofm"
    region_um: tuple[float, float, float, float]
    pitch_um: float
    values: np.ndarray             # shape (ny, nx), non-negative
    meta: dict = field(default_factory=dict)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x0, y0, _, _ = self.region_um
        xs = x0 + (np.arange(self.nx) + 0.5) * self.pitch_um
        ys = y0 + (np.arange(self.ny) + 0.5) * self.pitch_um
        return xs, ys


@dataclass
class EopTrace:
    """Averaged reflected-intensity trace over one trigger period."""

    samples: np.ndarray
    rate_hz: float
    trigger_period_s: float
    integrations: int
    position_um: tuple[float, float]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expect = int(np.floor(self.trigger_period_s * self.rate_hz + 1e-9))
        if len(self.samples) != expect:
            raise ValueError("trace length must equal trigger period x sample rate")
        if self.integrations < 1:
            raise ValueError("integrations must be >= 1")

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.rate_hz


def _grid(region_um, pitch_um):
    x0, y0, x1, y1 = region_um
    if x1 <= x0 or y1 <= y0:
        raise OpticsError("region must have positive extent")
    nx = max(1, int(round((x1 - x0) / pitch_um)))
    ny = max(1, int(round((y1 - y0) / pitch_um)))
    return nx, ny


def _check_region(plan: FloorPlan, region_um) -> None:
    x0, y0, x1, y1 = region_um
    if x1 <= x0 or y1 <= y0:
        raise OpticsError("region must have positive extent")
    if x1 < 0 or y1 < 0 or x0 > plan.package_width_um or y0 > plan.package_height_um:
        raise OpticsError("region lies outside the package")


# -- photon emission -----------------------------------------------------------


def emission_capture(
    plan: FloorPlan,
    program: StimulusProgram,
    region_um: tuple[float, float, float, float],
    exposure_s: float,
    lens: str = "5x",
    pitch_um: float | None = None,
    rng: np.random.Generator | None = None,
    config: OpticsConfig = DEFAULT_OPTICS,
) -> OpticalMap:
    """Integrated photon-emission view of the region.

    Expected pixel value is dark counts plus every switching node's
    rate * frequency * area * exposure, spread by the lens PSF; the realized
    value is Poisson. Pass an explicit `rng` for reproducible noise.
    """
    if exposure_s <= 0:
        raise OpticsError("exposure must be positive")
    _check_region(plan, region_um)
    spot_r = spot_radius_um(lens)
    pitch = pitch_um if pitch_um is not None else 4.0 * spot_r
    nx, ny = _grid(region_um, pitch)
    rng = rng if rng is not None else np.random.default_rng()

    expected = np.full((ny, nx), config.dark_rate_cps * exposure_s)
    x0, y0, _, _ = region_um
    pad = 3.0 * spot_r

    signal = np.zeros((ny, nx))
    for node, act in program.active_nodes():
        f_sw = switching_rate_hz(act)
        if f_sw <= 0:
            continue
        if not (x0 - pad <= node.x_um <= x0 + nx * pitch + pad
                and y0 - pad <= node.y_um <= y0 + ny * pitch + pad):
            continue
        counts = config.emission_coeff * f_sw * math.pi * node.radius_um**2 * exposure_s
        _splat_bilinear(signal, (node.x_um - x0) / pitch - 0.5, (node.y_um - y0) / pitch - 0.5, counts)

    sigma_px = config.psf_sigma_factor * spot_r / pitch
    if sigma_px > 1e-3 and signal.any():
        from scipy.ndimage import gaussian_filter

        signal = gaussian_filter(signal, sigma=sigma_px, mode="constant")
    expected += signal

    values = rng.poisson(expected).astype(float)
    return OpticalMap(
        kind="emission",
        region_um=tuple(region_um),
        pitch_um=pitch,
        values=values,
        meta={"exposure_s": exposure_s, "lens": lens, "dark_rate_cps": config.dark_rate_cps},
    )


def _splat_bilinear(grid: np.ndarray, fx: float, fy: float, value: float) -> None:
    """Deposit `value` at fractional pixel (fx, fy) with bilinear weights."""
    ny, nx = grid.shape
    ix, iy = int(np.floor(fx)), int(np.floor(fy))
    dx, dy = fx - ix, fy - iy
    for ox, wx in ((0, 1 - dx), (1, dx)):
        for oy, wy in ((0, 1 - dy), (1, dy)):
            x, y = ix + ox, iy + oy
            if 0 <= x < nx and 0 <= y < ny and wx * wy > 0:
                grid[y, x] += value * wx * wy


# -- frequency-selective scan ---------------------------------------------------


def sinc_leakage(delta_f_hz, dwell_s):
    """|sin(pi f T) / (pi f T)| for a rectangular dwell window."""
    x = np.asarray(delta_f_hz, dtype=float) * dwell_s
    return np.abs(np.sinc(x))  # np.sinc is the normalised sin(pi x)/(pi x)


def eofm_scan(
    plan: FloorPlan,
    program: StimulusProgram,
    region_um: tuple[float, float, float, float],
    f_target_hz: float,
    dwell_s: float,
    pitch_um: float,
    lens: str = "20x",
    power_pct: float = 100.0,
    rng: np.random.Generator | None = None,
    config: OpticsConfig = DEFAULT_OPTICS,
    progress=None,
) -> OpticalMap:
    """Frequency-selective activity map at `f_target_hz`.

    Pixel values are independent given the program snapshot: the noise field
    is drawn in one row-major pass, so any pixel evaluation order produces
    identical output for a fixed generator.
    """
    if dwell_s <= 0:
        raise OpticsError("dwell must be positive")
    if f_target_hz <= 0:
        raise OpticsError("target frequency must be positive")
    _check_region(plan, region_um)
    spot_r = spot_radius_um(lens)
    nx, ny = _grid(region_um, pitch_um)
    rng = rng if rng is not None else np.random.default_rng()

    x0, y0, _, _ = region_um
    pad = spot_r + 4.0 * plan.config.driver_radius_um
    amps, px, py, prad = [], [], [], []
    for node, act in program.active_nodes():
        line = spectral_line(act)
        if line is None:
            continue
        if not (x0 - pad <= node.x_um <= x0 + nx * pitch_um + pad
                and y0 - pad <= node.y_um <= y0 + ny * pitch_um + pad):
            continue
        f_line, rel = line
        leak = float(sinc_leakage(f_line - f_target_hz, dwell_s))
        amp = (config.eofm_amp_coeff * math.pi * node.radius_um**2
               * (power_pct / 100.0) * rel * leak)
        if amp <= 0:
            continue
        amps.append(amp)
        px.append(node.x_um)
        py.append(node.y_um)
        prad.append(node.radius_um)

    xs = x0 + (np.arange(nx) + 0.5) * pitch_um
    ys = y0 + (np.arange(ny) + 0.5) * pitch_um
    signal = np.zeros((ny, nx))
    if amps:
        amps_a = np.asarray(amps)
        px_a, py_a, prad_a = np.asarray(px), np.asarray(py), np.asarray(prad)
        norm = np.pi * np.minimum(prad_a, spot_r) ** 2
        for row in range(ny):
            d = np.hypot(xs[:, None] - px_a[None, :], ys[row] - py_a[None, :])
            inter = disc_intersection_area(d, np.broadcast_to(prad_a, d.shape), spot_r)
            signal[row] = (amps_a * inter / norm).sum(axis=1)
            if progress is not None and (row % 32 == 0 or row == ny - 1):
                progress((row + 1) / ny)
    elif progress is not None:
        progress(1.0)

    values = signal + rng.rayleigh(config.eofm_noise_sigma, size=(ny, nx))
    return OpticalMap(
        kind="eofm",
        region_um=tuple(region_um),
        pitch_um=pitch_um,
        values=values,
        meta={
            "f_target_hz": f_target_hz,
            "dwell_s": dwell_s,
            "lens": lens,
            "power_pct": power_pct,
            "noise_sigma": config.eofm_noise_sigma,
        },
    )


# -- trace probing ---------------------------------------------------------------


def eop_acquire(
    plan: FloorPlan,
    program: StimulusProgram,
    laser: LaserState,
    n_integrations: int,
    trigger_period_s: float,
    rate_hz: float,
    rng: np.random.Generator | None = None,
    config: OpticsConfig = DEFAULT_OPTICS,
) -> EopTrace:
    """Average of N triggered reflected-intensity traces at the parked spot.

    Modulation depth of a node is depth_coeff * footprint area * power,
    weighted by its overlap with the spot; the single-shot signal is
    baseline + sum(depth * (2*bit - 1)) + white noise. Masked streams
    consume fresh pad bits per repetition; everything else repeats exactly,
    so averaging only suppresses noise (and, for masked links, the data).
    """
    if not laser.on:
        raise AcquisitionError("laser must be on to acquire a trace")
    if n_integrations < 1:
        raise OpticsError("integrations must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()

    n_samples = int(np.floor(trigger_period_s * rate_hz + 1e-9))
    if n_samples < 2:
        raise OpticsError("trigger period too short for the sample rate")

    hits = plan.nodes_in_spot((laser.x_um, laser.y_um), laser.spot_radius_um)
    contributors = []
    for node, weight in hits:
        act = program.activity_of(node)
        if isinstance(act, Off):
            continue
        _check_trigger_alignment(act, trigger_period_s, program.ro_frequency_hz)
        depth = (config.eop_depth_coeff * math.pi * node.radius_um**2
                 * (laser.power_pct / 100.0) * weight)
        contributors.append((node, act, depth))

    # the pad of a shared link advances once per acquisition: all lanes of a
    # channel see the same pad segments, shot for shot
    pad_matrices: dict[str, np.ndarray] = {}
    for node, act, _ in contributors:
        if isinstance(act, MaskedStream):
            if rate_hz < 2 * act.bit_rate_hz:
                from .stimulus import AliasingError

                raise AliasingError("sample rate below twice the masked-stream bit rate")
            channel = program.pad_channel_of(node.id)
            if channel not in pad_matrices:
                bits_per_trace = program.bits_in_window(node.id, trigger_period_s)
                src = program.pad_source(node.id)
                if src.fixed_replay:
                    pads = np.tile(src.bits(0, bits_per_trace), (n_integrations, 1))
                else:
                    pads = program.advance_pad(node.id, n_integrations * bits_per_trace)
                    pads = pads.reshape(n_integrations, bits_per_trace)
                pad_matrices[channel] = pads

    signal = np.zeros(n_samples)
    meta_nodes = []
    first_shots: dict[str, list[int]] = {}
    for node, act, depth in contributors:
        meta_nodes.append({"id": node.id, "kind": node.kind, "depth": depth})
        if isinstance(act, MaskedStream):
            pads = pad_matrices[program.pad_channel_of(node.id)]
            bits_per_trace = pads.shape[1]
            data = np.asarray(act.data_bits, dtype=np.uint8)
            data_row = data[np.arange(bits_per_trace) % len(data)]
            masked = pads ^ data_row[None, :]
            first_shots[node.id] = masked[0].tolist()
            mean_bits = masked.mean(axis=0)
            idx = np.minimum(
                (np.floor(act.bit_rate_hz * np.arange(n_samples) / rate_hz + 1e-9)).astype(int),
                bits_per_trace - 1,
            )
            signal += depth * (2.0 * mean_bits[idx] - 1.0)
        else:
            wf = program.node_waveform(node.id, 0.0, trigger_period_s, rate_hz)
            signal += depth * (2.0 * wf.samples.astype(float) - 1.0)

    noise = rng.normal(0.0, config.eop_noise_sigma / math.sqrt(n_integrations), n_samples)
    return EopTrace(
        samples=config.eop_baseline + signal + noise,
        rate_hz=rate_hz,
        trigger_period_s=trigger_period_s,
        integrations=n_integrations,
        position_um=(laser.x_um, laser.y_um),
        meta={
            "lens": laser.lens,
            "power_pct": laser.power_pct,
            "noise_sigma": config.eop_noise_sigma,
            "baseline": config.eop_baseline,
            "nodes": meta_nodes,
            "masked_first_shot": first_shots,
        },
    )


def _check_trigger_alignment(act, trigger_period_s: float, ro_freq_hz: float) -> None:
    from .stimulus import Pattern, Toggle

    if isinstance(act, Toggle):
        period = 1.0 / act.frequency_hz
    elif isinstance(act, Pattern):
        period = len(act.bits) / act.bit_rate_hz
    elif isinstance(act, MaskedStream):
        period = len(act.data_bits) / act.bit_rate_hz
    else:
        return
    ratio = trigger_period_s / period
    if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
        raise ReplayAlignmentError(
            f"trigger period {trigger_period_s:.3g}s is not a whole multiple of the "
            f"pattern period {period:.3g}s"
        )


# -- thermal side effect -----------------------------------------------------------


def thermal_delay_delta(
    power_pct: float,
    t_since_on_s: float,
    max_delta_ps: float = THERMAL_DELTA_100_PS,
    tau_s: float = THERMAL_TAU_S,
) -> float:
    """Propagation-delay increase (ps) of a wire whose driver sits under the spot.

    Linear in power, first-order exponential in heating time; monotone in
    both arguments and saturating at max_delta_ps * power/100.
    """
    if not (0.0 <= power_pct <= 100.0):
        raise OpticsError("power_pct must be within [0, 100]")
    if t_since_on_s < 0:
        raise OpticsError("time since laser-on must be >= 0")
    return max_delta_ps * (power_pct / 100.0) * (1.0 - math.exp(-t_since_on_s / tau_s))
