import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chipletlab.floorplan import UnknownNodeError
from chipletlab.stimulus import (
    AliasingError,
    BitWaveform,
    MaskedStream,
    Off,
    PadSource,
    Pattern,
    StimulusProgram,
    Toggle,
    advance_pad,
    node_waveform,
    set_ro_block,
    transition_density,
)

LANE = "sll:0:10:0:0"


@pytest.fixture
def program(plan_with_blocks):
    return StimulusProgram(plan_with_blocks, pad_root_seed=123)


class TestWaveforms:
    def test_100mhz_toggle_has_10ns_period(self, program):
        program.assign(LANE, Toggle(100e6))
        wf = node_waveform(program, LANE, (0.0, 20e-9), 10e9)
        assert len(wf.samples) == 200
        # 10 ns period at 10 GS/s: 100 samples, half low then half high
        assert wf.samples[:50].tolist() == [0] * 50
        assert wf.samples[50:100].tolist() == [1] * 50
        assert np.array_equal(wf.samples[:100], wf.samples[100:])

    def test_off_node_is_all_zero(self, program):
        wf = node_waveform(program, LANE, (0.0, 1e-7), 1e9)
        assert not wf.samples.any()

    def test_pattern_repeats(self, program):
        program.assign(LANE, Pattern((1, 0, 1, 1), bit_rate_hz=100e6))
        wf = node_waveform(program, LANE, (0.0, 80e-9), 1e9)
        bits = wf.samples[::10]
        assert bits.tolist() == [1, 0, 1, 1] * 2

    def test_masked_with_zero_pad_equals_data(self, plan_with_blocks):
        program = StimulusProgram(plan_with_blocks, pad_root_seed=5)
        data = (1, 0, 1, 1, 0, 0, 1, 0)
        program.assign(LANE, MaskedStream(data, bit_rate_hz=100e6))
        pad = program.pad_source(LANE).bits(0, 8)
        wf = node_waveform(program, LANE, (0.0, 80e-9), 1e9)
        got_bits = wf.samples[::10]
        assert np.array_equal(got_bits, np.asarray(data, np.uint8) ^ pad)
        # with an identity (all-zero) pad the waveform equals the data: check
        # the demasking identity instead of relying on a lucky seed
        assert np.array_equal(got_bits ^ pad, np.asarray(data, np.uint8))

    def test_determinism(self, program):
        program.assign(LANE, Toggle(250e6))
        a = node_waveform(program, LANE, (1e-9, 41e-9), 4e9)
        b = node_waveform(program, LANE, (1e-9, 41e-9), 4e9)
        assert np.array_equal(a.samples, b.samples)

    def test_rate_too_low_is_aliasing_error(self, program):
        program.assign(LANE, Toggle(1e9))
        with pytest.raises(AliasingError):
            node_waveform(program, LANE, (0.0, 1e-7), 1e9)

    def test_unknown_node_lookup_error(self, program):
        with pytest.raises(UnknownNodeError):
            node_waveform(program, "sll:0:999:0:0", (0.0, 1e-7), 1e9)

    def test_bad_window(self, program):
        with pytest.raises(ValueError):
            node_waveform(program, LANE, (1e-6, 1e-6), 1e9)

    def test_waveform_length_invariant(self):
        with pytest.raises(ValueError):
            BitWaveform(np.zeros(5, np.uint8), rate_hz=1e9, start_s=0.0, duration_s=1e-8)


class TestRoBlocks:
    def test_enable_disable(self, program):
        set_ro_block(program, "blk0", True)
        node = program.plan.node("ro:blk0:0")
        assert isinstance(program.activity_of(node), Toggle)
        set_ro_block(program, "blk0", False)
        assert isinstance(program.activity_of(node), Off)

    def test_unknown_block(self, program):
        with pytest.raises(UnknownNodeError):
            set_ro_block(program, "nope", True)

    def test_ro_assignment_rejected(self, program):
        with pytest.raises(ValueError):
            program.assign("ro:blk0:0", Toggle(1e6))

    def test_active_nodes_counts_block(self, program):
        set_ro_block(program, "blk1", True)
        active = program.active_nodes()
        assert len(active) == 256
        assert all(a.frequency_hz == program.ro_frequency_hz for _, a in active)


class TestPadStream:
    def test_successive_blocks_disjoint(self, program):
        program.assign(LANE, MaskedStream((1, 0) * 32))
        a = advance_pad(program, LANE, 64)
        b = advance_pad(program, LANE, 64)
        src = program.pad_source(LANE)
        assert np.array_equal(np.concatenate([a, b]), src.bits(0, 128))
        assert program.pad_position(LANE) == 128

    def test_seeded_reproducibility(self, plan_with_blocks):
        runs = []
        for _ in range(2):
            prog = StimulusProgram(plan_with_blocks, pad_root_seed=42)
            prog.assign(LANE, MaskedStream((1,) * 8))
            runs.append(advance_pad(prog, LANE, 256))
        assert np.array_equal(runs[0], runs[1])

    def test_pad_mean_unbiased(self):
        # Monte Carlo frequency test, binomial bound 0.5 +/- 0.002 at 1e6 bits
        bits = PadSource(987654321).bits(0, 10**6)
        assert abs(float(bits.mean()) - 0.5) < 0.002

    def test_non_masked_link_type_error(self, program):
        program.assign(LANE, Toggle(1e8))
        with pytest.raises(TypeError):
            advance_pad(program, LANE, 8)

    def test_random_access_equals_stream(self):
        src = PadSource(7)
        whole = src.bits(0, 5000)
        assert np.array_equal(src.bits(1234, 777), whole[1234:2011])

    def test_shared_channel_lockstep(self, plan_with_blocks):
        prog = StimulusProgram(plan_with_blocks, pad_root_seed=9)
        prog.assign("sll:0:10:0:0", MaskedStream((1, 0), pad_channel="link"))
        prog.assign("sll:0:10:0:1", MaskedStream((0, 1), pad_channel="link"))
        a = advance_pad(prog, "sll:0:10:0:0", 32)
        # the second lane's position moved in lockstep with the first
        assert prog.pad_position("sll:0:10:0:1") == 32
        b = advance_pad(prog, "sll:0:10:0:1", 32)
        assert not np.array_equal(a, b)


class TestMaskingIdentities:
    @given(st.lists(st.integers(0, 1), min_size=1, max_size=256))
    @settings(max_examples=100, deadline=None)
    def test_mask_roundtrip(self, data):
        data = np.asarray(data, np.uint8)
        pad = PadSource(3).bits(0, len(data))
        assert np.array_equal((data ^ pad) ^ pad, data)

    def test_replay_agreement_is_half(self, plan_with_blocks):
        # two replays of the same data under fresh pads agree on ~50% of bits
        prog = StimulusProgram(plan_with_blocks, pad_root_seed=31)
        n = 4096
        prog.assign(LANE, MaskedStream(tuple(int(b) for b in np.arange(n) % 2), bit_rate_hz=1e8))
        w1 = prog.node_waveform(LANE, 0.0, n * 1e-8, 4e8).samples[::4]
        prog.advance_pad(LANE, n)
        w2 = prog.node_waveform(LANE, 0.0, n * 1e-8, 4e8).samples[::4]
        agreement = float((w1 == w2).mean())
        sigma = 0.5 / np.sqrt(n)
        assert abs(agreement - 0.5) < 5 * sigma


class TestActivityDescriptors:
    def test_transition_density(self):
        assert transition_density((0, 1, 0, 1)) == 1.0
        assert transition_density((1, 1, 1, 1)) == 0.0
        assert transition_density((1,)) == 0.0
        assert transition_density((0, 0, 1, 1)) == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            Toggle(0.0)
        with pytest.raises(ValueError):
            Pattern(())
        with pytest.raises(ValueError):
            Pattern((0, 2))
        with pytest.raises(ValueError):
            MaskedStream((), bit_rate_hz=1e8)
