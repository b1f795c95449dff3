"""Digital activity of floorplan nodes over simulated time.

A stimulus program assigns each node one activity: off, a fixed-frequency
toggle, a repeating bit pattern, or a masked stream (data XOR a running pad).
Ring-oscillator blocks are toggled as whole 256-oscillator groups.

The pad behind a masked stream is a counter-mode PRNG standing in for a true
random number generator: bit position i is a pure function of (seed, i), so
any segment can be regenerated for replay, while the program's stream
position only ever moves forward - two consumers never see the same pad
bits. A `fixed_replay` pad restarts from position zero on every acquisition
repetition, which deliberately defeats the masking and exists to demonstrate
why the pad must be fresh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .floorplan import KIND_RO, FloorPlan, NodeRef, UnknownNodeError

DEFAULT_RO_FREQUENCY_HZ = 500e6
DEFAULT_BIT_RATE_HZ = 100e6


class AliasingError(ValueError):
    """Requested sample rate cannot represent the node's activity."""


# -- activities --------------------------------------------------------------


@dataclass(frozen=True)
class Off:
    kind: str = "off"


@dataclass(frozen=True)
class Toggle:
    frequency_hz: float
    kind: str = "toggle"

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValueError("toggle frequency must be > 0")


@dataclass(frozen=True)
class Pattern:
    bits: tuple[int, ...]
    bit_rate_hz: float = DEFAULT_BIT_RATE_HZ
    kind: str = "pattern"

    def __post_init__(self):
        if len(self.bits) == 0:
            raise ValueError("pattern must be non-empty")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("pattern bits must be 0/1")
        if self.bit_rate_hz <= 0:
            raise ValueError("bit rate must be > 0")


@dataclass(frozen=True)
class MaskedStream:
    """Data XOR a running pad. Lanes sharing `pad_channel` see the same pad
    bits at the same stream positions (one generator feeds the whole link);
    the default channel is the lane's own node id."""

    data_bits: tuple[int, ...]
    bit_rate_hz: float = DEFAULT_BIT_RATE_HZ
    fixed_replay: bool = False
    pad_channel: str | None = None
    kind: str = "masked_stream"

    def __post_init__(self):
        if len(self.data_bits) == 0:
            raise ValueError("masked stream data must be non-empty")
        if any(b not in (0, 1) for b in self.data_bits):
            raise ValueError("data bits must be 0/1")
        if self.bit_rate_hz <= 0:
            raise ValueError("bit rate must be > 0")


Activity = Off | Toggle | Pattern | MaskedStream


def transition_density(bits: tuple[int, ...]) -> float:
    """Fraction of bit boundaries (cyclic) that are transitions."""
    if len(bits) == 1:
        return 0.0
    arr = np.asarray(bits)
    return float(np.mean(arr != np.roll(arr, 1)))


def fundamental_hz(activity: Activity, ro_frequency_hz: float = DEFAULT_RO_FREQUENCY_HZ) -> float:
    """Highest frequency the activity needs a sampler to honour."""
    if isinstance(activity, Toggle):
        return activity.frequency_hz
    if isinstance(activity, (Pattern, MaskedStream)):
        return activity.bit_rate_hz
    return 0.0


def switching_rate_hz(activity: Activity) -> float:
    """Equivalent switching frequency driving photon emission."""
    if isinstance(activity, Toggle):
        return activity.frequency_hz
    if isinstance(activity, Pattern):
        return transition_density(activity.bits) * activity.bit_rate_hz / 2.0
    if isinstance(activity, MaskedStream):
        return activity.bit_rate_hz / 4.0  # expected transition density 0.5
    return 0.0


def spectral_line(activity: Activity) -> tuple[float, float] | None:
    """(frequency, relative amplitude) of the dominant modulation line.

    Bit streams are represented by their alternating-pattern fundamental at
    half the bit rate, weighted by transition density; a pure toggle is the
    exact case with density 1.
    """
    if isinstance(activity, Toggle):
        return (activity.frequency_hz, 1.0)
    if isinstance(activity, Pattern):
        dens = transition_density(activity.bits)
        return (activity.bit_rate_hz / 2.0, dens) if dens > 0 else None
    if isinstance(activity, MaskedStream):
        return (activity.bit_rate_hz / 2.0, 0.5)
    return None


# -- pad source ---------------------------------------------------------------


class PadSource:
    """Random-access pad bits: position i is a pure function of (seed, i)."""

    def __init__(self, seed: int, fixed_replay: bool = False):
        self.seed = int(seed)
        self.fixed_replay = fixed_replay

    def bits(self, start_bit: int, n_bits: int) -> np.ndarray:
        """Pad bits [start_bit, start_bit + n_bits) as a uint8 0/1 array."""
        if n_bits <= 0:
            return np.zeros(0, dtype=np.uint8)
        # one Philox advance unit = one 256-bit counter block (4 u64 words)
        b0 = start_bit // 256
        b1 = (start_bit + n_bits - 1) // 256 + 1
        bg = np.random.Philox(key=self.seed)
        bg.advance(b0)
        words = np.random.Generator(bg).integers(0, 2**64, size=(b1 - b0) * 4, dtype=np.uint64)
        allbits = np.unpackbits(words.view(np.uint8), bitorder="little")
        off = start_bit - b0 * 256
        return allbits[off : off + n_bits]


# -- bit waveform --------------------------------------------------------------


@dataclass
class BitWaveform:
    """0/1 samples at a fixed rate over [start_s, start_s + duration_s)."""

    samples: np.ndarray
    rate_hz: float
    start_s: float
    duration_s: float

    def __post_init__(self):
        expect = int(np.floor(self.duration_s * self.rate_hz + 1e-9))
        if len(self.samples) != expect:
            raise ValueError(f"sample count {len(self.samples)} != duration*rate {expect}")

    @property
    def times_s(self) -> np.ndarray:
        return self.start_s + np.arange(len(self.samples)) / self.rate_hz


# -- program -------------------------------------------------------------------


@dataclass
class StimulusProgram:
    """Activity assignment map plus RO block enables and pad stream state.

    A session owns the program: mutations (block enables, pad consumption)
    go through it, reads during a capture see a consistent snapshot.
    """

    plan: FloorPlan
    ro_frequency_hz: float = DEFAULT_RO_FREQUENCY_HZ
    pad_root_seed: int = 0
    assignments: dict[str, Activity] = field(default_factory=dict)
    block_enables: dict[str, bool] = field(default_factory=dict)
    _pads: dict[str, PadSource] = field(default_factory=dict)
    _pad_positions: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for block in self.plan.ro_block_ids:
            self.block_enables.setdefault(block, False)

    # -- assignment ----------------------------------------------------------

    def assign(self, node_id: str, activity: Activity) -> None:
        node = self.plan.node(node_id)  # raises UnknownNodeError
        if node.kind == KIND_RO:
            raise ValueError("ring oscillators are driven via block enables, not assignments")
        self.assignments[node_id] = activity
        if isinstance(activity, MaskedStream):
            from .seeding import derive_seed

            channel = activity.pad_channel or node_id
            if channel in self._pads:
                if self._pads[channel].fixed_replay != activity.fixed_replay:
                    raise ValueError(f"pad channel {channel!r} mixes fresh and fixed-replay lanes")
            else:
                self._pads[channel] = PadSource(
                    derive_seed(self.pad_root_seed, "pad", channel),
                    fixed_replay=activity.fixed_replay,
                )
                self._pad_positions[channel] = 0

    def set_ro_block(self, block_id: str, enabled: bool) -> None:
        if block_id not in self.block_enables:
            raise UnknownNodeError(block_id)
        self.block_enables[block_id] = enabled

    def snapshot(self) -> "StimulusProgram":
        """Read-only view for a capture job: assignment and enable maps are
        copied, pad sources are shared (capture amplitudes never consume pad
        bits; trace probing mutates pads and runs on the live program)."""
        return StimulusProgram(
            plan=self.plan,
            ro_frequency_hz=self.ro_frequency_hz,
            pad_root_seed=self.pad_root_seed,
            assignments=dict(self.assignments),
            block_enables=dict(self.block_enables),
            _pads=self._pads,
            _pad_positions=self._pad_positions,
        )

    def activity_of(self, node: NodeRef) -> Activity:
        if node.kind == KIND_RO:
            if self.block_enables.get(node.block, False):
                return Toggle(self.ro_frequency_hz)
            return Off()
        return self.assignments.get(node.id, Off())

    def active_nodes(self) -> list[tuple[NodeRef, Activity]]:
        """Every node with non-off activity (assigned nodes + enabled RO blocks)."""
        out = []
        for node_id, act in self.assignments.items():
            if not isinstance(act, Off):
                out.append((self.plan.node(node_id), act))
        ro = Toggle(self.ro_frequency_hz)
        for block, enabled in self.block_enables.items():
            if enabled:
                for nid in self.plan.ro_node_ids(block):
                    out.append((self.plan.node(nid), ro))
        return out

    # -- pad stream ----------------------------------------------------------

    def pad_channel_of(self, node_id: str) -> str:
        act = self.assignments.get(node_id)
        if not isinstance(act, MaskedStream):
            raise TypeError(f"node {node_id} does not carry a masked stream")
        return act.pad_channel or node_id

    def pad_source(self, node_id: str) -> PadSource:
        return self._pads[self.pad_channel_of(node_id)]

    def pad_position(self, node_id: str) -> int:
        return self._pad_positions[self.pad_channel_of(node_id)]

    def advance_pad(self, node_id: str, n_bits: int) -> np.ndarray:
        """Return the next n pad bits and move the stream position forward.

        The position belongs to the pad channel, so every lane of a shared
        link moves in lockstep. A fixed_replay pad always re-reads from
        position zero.
        """
        channel = self.pad_channel_of(node_id)
        src = self._pads[channel]
        pos = self._pad_positions[channel]
        out = src.bits(pos, n_bits)
        if not src.fixed_replay:
            self._pad_positions[channel] = pos + n_bits
        return out

    # -- waveforms -------------------------------------------------------------

    def node_waveform(self, node_id: str, t0_s: float, t1_s: float, rate_hz: float) -> BitWaveform:
        """Sampled 0/1 waveform of one node over [t0, t1).

        Masked streams are peeked from the current pad position (data
        restarts at the window start, the pad does not); use advance_pad or
        the acquisition machinery to consume pad bits.
        """
        if t1_s <= t0_s:
            raise ValueError("window must satisfy t1 > t0")
        node = self.plan.node(node_id)
        act = self.activity_of(node)
        fmax = fundamental_hz(act, self.ro_frequency_hz)
        if fmax > 0 and rate_hz < 2 * fmax:
            raise AliasingError(
                f"rate {rate_hz:.3g} Hz < 2 x activity frequency {fmax:.3g} Hz"
            )
        n = int(np.floor((t1_s - t0_s) * rate_hz + 1e-9))
        t = t0_s + np.arange(n) / rate_hz
        samples = self._sample(act, node_id, t, t0_s)
        return BitWaveform(samples, rate_hz, t0_s, t1_s - t0_s)

    def _sample(self, act: Activity, node_id: str, t: np.ndarray, t0_s: float) -> np.ndarray:
        if isinstance(act, Off):
            return np.zeros(len(t), dtype=np.uint8)
        if isinstance(act, Toggle):
            # square wave, low first: period 1/f, high during the second half
            phase = np.floor(2.0 * act.frequency_hz * t + 1e-9).astype(np.int64)
            return (phase % 2).astype(np.uint8)
        if isinstance(act, Pattern):
            idx = np.floor(act.bit_rate_hz * t + 1e-9).astype(np.int64) % len(act.bits)
            return np.asarray(act.bits, dtype=np.uint8)[idx]
        if isinstance(act, MaskedStream):
            rel = np.floor(act.bit_rate_hz * (t - t0_s) + 1e-9).astype(np.int64)
            data = np.asarray(act.data_bits, dtype=np.uint8)[rel % len(act.data_bits)]
            pos = self.pad_position(node_id)
            pad_block = self.pad_source(node_id).bits(pos, int(rel.max()) + 1 if len(rel) else 0)
            return data ^ pad_block[rel]
        raise TypeError(f"unknown activity {act!r}")

    def bits_in_window(self, node_id: str, duration_s: float) -> int:
        """How many stream bits one observation window of a masked link spans."""
        act = self.assignments.get(node_id)
        if not isinstance(act, MaskedStream):
            raise TypeError(f"node {node_id} does not carry a masked stream")
        return int(np.floor(act.bit_rate_hz * duration_s + 1e-9))


def node_waveform(program: StimulusProgram, node_id: str, window: tuple[float, float], rate_hz: float) -> BitWaveform:
    return program.node_waveform(node_id, window[0], window[1], rate_hz)


def set_ro_block(program: StimulusProgram, block_id: str, enabled: bool) -> None:
    program.set_ro_block(block_id, enabled)


def advance_pad(program: StimulusProgram, node_id: str, n_bits: int) -> np.ndarray:
    return program.advance_pad(node_id, n_bits)
