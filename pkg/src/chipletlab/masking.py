"""One-time-pad masking of die-to-die links, and its probing evaluation.

Every data lane of a masked link transmits data XOR pad, with one shared pad
that is itself sent on a dedicated lane so the receiver can demask. Sharing
one pad across lanes is deliberately weak cryptography (XOR of two
transmitted lanes reveals data_a XOR data_b, and probing the pad lane
recovers the pad); the goal is not confidentiality but replay resistance:
because the pad never repeats, trace averaging converges to the mid level
instead of the data.

`evaluate_masking` runs the full optical path: repeated replayed
acquisitions of one lane, averaged, correlated against the true data
waveform. Fresh pads drive that correlation to zero at the 1/sqrt(R) rate;
a debug-fixed pad (same pad every replay) restores it, demonstrating why
the generator must be free-running.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .floorplan import FloorPlan
from .optics import DEFAULT_OPTICS, LaserState, OpticsConfig, eop_acquire
from .stimulus import DEFAULT_BIT_RATE_HZ, MaskedStream, StimulusProgram


class LaneCollisionError(ValueError):
    pass


@dataclass(frozen=True)
class MaskedLinkConfig:
    data_lanes: tuple[str, ...]
    pad_lane: str
    bit_rate_hz: float = DEFAULT_BIT_RATE_HZ
    fresh_pad: bool = True  # False = debug-fixed pad, replays include the pad

    def __post_init__(self):
        lanes = (*self.data_lanes, self.pad_lane)
        if len(set(lanes)) != len(lanes):
            raise LaneCollisionError("pad lane and data lanes must be distinct")
        if not self.data_lanes:
            raise ValueError("a masked link needs at least one data lane")

    @property
    def pad_channel(self) -> str:
        return f"link:{self.pad_lane}"


def mask_streams(data_by_lane: dict[str, np.ndarray], pad: np.ndarray) -> dict[str, np.ndarray]:
    """Pure stream transform: every lane transmits its data XOR the shared pad."""
    out = {}
    for lane, bits in data_by_lane.items():
        bits = np.asarray(bits, dtype=np.uint8)
        if len(bits) != len(pad):
            raise ValueError(f"lane {lane}: data length {len(bits)} != pad length {len(pad)}")
        out[lane] = bits ^ np.asarray(pad, dtype=np.uint8)
    return out


def demask(masked: np.ndarray, pad: np.ndarray) -> np.ndarray:
    """Receiver-side XOR; exact inverse of masking with the same pad."""
    return np.asarray(masked, dtype=np.uint8) ^ np.asarray(pad, dtype=np.uint8)


def install_masked_link(
    program: StimulusProgram,
    config: MaskedLinkConfig,
    data_by_lane: dict[str, tuple[int, ...]],
) -> None:
    """Wire a masked link into the stimulus program.

    All lanes share one pad channel (and therefore one stream position); the
    pad lane transmits the pad itself (all-zero data XOR pad).
    """
    if set(data_by_lane) != set(config.data_lanes):
        raise ValueError("data_by_lane must cover exactly the configured data lanes")
    lengths = {len(v) for v in data_by_lane.values()}
    if len(lengths) != 1:
        raise ValueError("all lanes of a link must carry equal-length data")
    (length,) = lengths
    for lane in (*config.data_lanes, config.pad_lane):
        program.plan.node(lane)  # raises UnknownNodeError for bad lanes
    for lane in config.data_lanes:
        program.assign(lane, MaskedStream(
            tuple(data_by_lane[lane]),
            bit_rate_hz=config.bit_rate_hz,
            fixed_replay=not config.fresh_pad,
            pad_channel=config.pad_channel,
        ))
    program.assign(config.pad_lane, MaskedStream(
        (0,) * length,
        bit_rate_hz=config.bit_rate_hz,
        fixed_replay=not config.fresh_pad,
        pad_channel=config.pad_channel,
    ))


@dataclass
class MaskingReport:
    lane: str
    repetitions: int
    integrations: int
    corr_data: float
    corr_first_shot: float
    max_abs_deviation: float  # of the averaged trace from its mean, / depth
    masked: bool
    meta: dict = field(default_factory=dict)

    def summary_text(self) -> str:
        return "\n".join([
            f"lane: {self.lane} ({'masked' if self.masked else 'plain'})",
            f"replayed acquisitions: {self.repetitions} x {self.integrations} integrations",
            f"corr(averaged trace, true data waveform): {self.corr_data:.4f}",
            f"corr(averaged trace, first-shot line waveform): {self.corr_first_shot:.4f}",
            f"max |trace - mean| / modulation depth: {self.max_abs_deviation:.4f}",
        ])


def evaluate_masking(
    plan: FloorPlan,
    program: StimulusProgram,
    lane: str,
    repetitions: int,
    n_integrations: int = 1,
    rng: np.random.Generator | None = None,
    data_bits: tuple[int, ...] | None = None,
    lens: str = "71x",
    power_pct: float = 100.0,
    rate_hz: float = 400e6,
    periods_per_trace: int = 16,
    config: OpticsConfig = DEFAULT_OPTICS,
) -> MaskingReport:
    """Average R replayed acquisitions of one lane and report correlations.

    `data_bits` defaults to the lane's own data (masked lanes); a plain
    pattern lane may be evaluated by passing its bits explicitly, which is
    the unmasked control case.
    """
    from .stimulus import Pattern

    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    act = program.assignments.get(lane)
    masked = isinstance(act, MaskedStream)
    if not masked:
        if not isinstance(act, Pattern) or data_bits is None:
            raise TypeError(
                f"lane {lane} carries no masked stream; evaluate a plain lane by "
                "passing its Pattern bits as data_bits (or probe it with eop_acquire)"
            )
    bits = tuple(data_bits) if data_bits is not None else tuple(act.data_bits)
    bit_rate = act.bit_rate_hz
    trigger_period_s = periods_per_trace * len(bits) / bit_rate

    node = plan.node(lane)
    laser = LaserState(x_um=node.x_um, y_um=node.y_um, power_pct=power_pct, lens=lens, on=True)
    rng = rng if rng is not None else np.random.default_rng()
    trace = eop_acquire(
        plan, program, laser,
        n_integrations=repetitions * n_integrations,
        trigger_period_s=trigger_period_s,
        rate_hz=rate_hz,
        rng=rng,
        config=config,
    )

    n = len(trace.samples)
    data_arr = np.asarray(bits, dtype=float)
    idx = np.minimum((np.floor(bit_rate * np.arange(n) / rate_hz + 1e-9)).astype(int),
                     periods_per_trace * len(bits) - 1)
    data_wf = 2.0 * data_arr[idx % len(bits)] - 1.0
    corr_data = _pearson(trace.samples, data_wf)

    first = trace.meta.get("masked_first_shot", {}).get(lane)
    if first is not None:
        first_wf = 2.0 * np.asarray(first, dtype=float)[idx] - 1.0
        corr_first = _pearson(trace.samples, first_wf)
    else:
        corr_first = corr_data  # a plain lane repeats its first shot exactly

    depth = next((d["depth"] for d in trace.meta["nodes"] if d["id"] == lane), 1.0)
    max_dev = float(np.max(np.abs(trace.samples - trace.samples.mean())) / depth)

    return MaskingReport(
        lane=lane,
        repetitions=repetitions,
        integrations=n_integrations,
        corr_data=float(corr_data),
        corr_first_shot=float(corr_first),
        max_abs_deviation=max_dev,
        masked=masked,
        meta={"trigger_period_s": trigger_period_s, "rate_hz": rate_hz,
              "trace_meta": {k: v for k, v in trace.meta.items() if k != "masked_first_shot"}},
    )


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    return float((a * b).sum() / denom) if denom > 0 else 0.0
