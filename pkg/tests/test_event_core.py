import numpy as np
import pytest
from hypothesis import given, settings

from errors import (
    BadPolarityError,
    InvalidBinCountError,
    InvalidParamsError,
    NegativeMagnitudeError,
    OutOfBoundsError,
    UnsortedTimestampsError,
)
from event_core import (
    bin_events,
    derive_seed,
    ensure_valid,
    frames_from_streams,
    inject_gaussian_noise,
    synth_dataset,
    tensor_to_events,
    trajectory_distance,
    validate_stream,
)
from models import FrameTensor, MotionPattern

from helpers import binary_tensors, make_stream, valid_streams


class TestValidateStream:
    def test_valid_stream(self):
        stream = make_stream([(0, 0, 1, 0), (3, 2, 0, 5), (7, 7, 1, 5)], duration=10)
        assert validate_stream(stream).ok

    def test_empty_stream_is_valid(self):
        assert validate_stream(make_stream([], duration=0)).ok

    def test_out_of_bounds_reports_index(self):
        stream = make_stream([(0, 0, 1, 0), (8, 0, 1, 1)])
        result = validate_stream(stream)
        assert (result.ok, result.kind, result.index) == (False, "OutOfBounds", 1)

    def test_timestamp_past_duration_is_out_of_bounds(self):
        result = validate_stream(make_stream([(0, 0, 1, 11)], duration=10))
        assert result.kind == "OutOfBounds"

    def test_unsorted_reports_second_event(self):
        stream = make_stream([(0, 0, 1, 5), (1, 1, 0, 7), (2, 2, 0, 6)])
        result = validate_stream(stream)
        assert (result.kind, result.index) == ("UnsortedTimestamps", 2)

    def test_bad_polarity(self):
        result = validate_stream(make_stream([(0, 0, 2, 0)]))
        assert (result.kind, result.index) == ("BadPolarity", 0)

    def test_first_violation_wins(self):
        stream = make_stream([(0, 0, 1, 5), (1, 1, 3, 4), (9, 9, 1, 6)], duration=10)
        result = validate_stream(stream)
        assert (result.kind, result.index) == ("BadPolarity", 1)

    @pytest.mark.parametrize("events, error", [
        ([(0, 9, 1, 0)], OutOfBoundsError),
        ([(0, 0, 1, 3), (0, 0, 1, 2)], UnsortedTimestampsError),
        ([(0, 0, -1, 0)], BadPolarityError),
    ])
    def test_ensure_valid_raises_matching_error(self, events, error):
        with pytest.raises(error) as info:
            ensure_valid(make_stream(events, duration=10))
        assert info.value.index is not None
        assert info.value.exit_code == 2


class TestBinning:
    def test_cells_follow_events(self):
        stream = make_stream([(1, 2, 1, 0), (3, 0, 0, 49), (3, 0, 0, 50), (7, 7, 1, 100)], duration=100)
        tensor = bin_events(stream, 2)
        assert tensor.bin_duration == 50
        assert tensor.shape == (2, 8, 8, 2)
        assert tensor.values[1, 2, 1, 0] == 1.0
        assert tensor.values[0, 0, 3, 0] == 1.0
        assert tensor.values[0, 0, 3, 1] == 1.0
        # an event at exactly `duration` lands in the last bin
        assert tensor.values[1, 7, 7, 1] == 1.0
        assert tensor.values.sum() == 4

    def test_bin_duration_rounds_up(self):
        tensor = bin_events(make_stream([(0, 0, 0, 0)], duration=101), 4)
        assert tensor.bin_duration == 26

    def test_zero_duration_uses_one_microsecond_bins(self):
        tensor = bin_events(make_stream([(0, 0, 1, 0), (1, 0, 1, 0)], duration=0), 3)
        assert tensor.bin_duration == 1
        assert tensor.values[1, 0, :, 0].tolist()[:2] == [1.0, 1.0]

    def test_repeated_events_stay_binary(self):
        stream = make_stream([(2, 2, 1, t) for t in range(10)], duration=10)
        tensor = bin_events(stream, 1)
        assert tensor.is_binary()
        assert tensor.values.sum() == 1

    @pytest.mark.parametrize("t_bins", [0, -3])
    def test_invalid_bin_count(self, t_bins):
        with pytest.raises(InvalidBinCountError):
            bin_events(make_stream([], duration=10), t_bins)

    def test_invalid_stream_is_rejected(self):
        with pytest.raises(UnsortedTimestampsError):
            bin_events(make_stream([(0, 0, 1, 3), (0, 0, 1, 1)]), 2)

    @given(valid_streams())
    @settings(max_examples=200)
    def test_binned_cells_match_event_set(self, stream):
        tensor = bin_events(stream, 5)
        bd = tensor.bin_duration
        expected = {(p, y, x, min(t // bd, 4)) for x, y, p, t in
                    zip(stream.x.tolist(), stream.y.tolist(), stream.polarity.tolist(), stream.timestamp.tolist())}
        assert set(zip(*map(np.ndarray.tolist, np.nonzero(tensor.values)))) == expected

    @given(binary_tensors())
    @settings(max_examples=200)
    def test_unbinning_then_binning_is_identity(self, tensor):
        assert bin_events(tensor_to_events(tensor), tensor.frames) == tensor


class TestTensorToEvents:
    def test_events_at_bin_centers(self):
        values = np.zeros((2, 2, 2, 3), dtype=np.float32)
        values[1, 0, 1, 2] = 1.0
        values[0, 1, 0, 0] = 0.6
        values[0, 1, 1, 1] = 0.4
        stream = tensor_to_events(FrameTensor(values, bin_duration=10))
        assert stream.duration == 30
        assert [(e.x, e.y, e.polarity, e.timestamp) for e in stream] == [(0, 1, 0, 5), (1, 0, 1, 25)]

    @pytest.mark.parametrize("threshold", [0.0, 1.0, 1.5])
    def test_threshold_must_be_open_unit_interval(self, threshold):
        with pytest.raises(InvalidParamsError):
            tensor_to_events(FrameTensor(np.zeros((2, 1, 1, 1)), 1), threshold)


class TestNoise:
    def test_zero_magnitude_is_identity(self):
        tensor = FrameTensor(np.ones((2, 3, 3, 2)), 5)
        assert inject_gaussian_noise(tensor, 0.0, seed=1) is tensor

    def test_negative_magnitude(self):
        with pytest.raises(NegativeMagnitudeError):
            inject_gaussian_noise(FrameTensor(np.zeros((2, 1, 1, 1)), 1), -0.1, seed=0)

    def test_clamped_fraction_of_zero_tensor(self):
        tensor = FrameTensor(np.zeros((2, 250, 250, 1)), 1)
        noisy = inject_gaussian_noise(tensor, 10.0, seed=3)
        assert abs(float((noisy.values == 0.0).mean()) - 0.5) <= 0.02

    def test_deterministic_and_clamped(self):
        tensor = FrameTensor(np.zeros((2, 4, 4, 3)), 5)
        a = inject_gaussian_noise(tensor, 0.55, seed=7)
        b = inject_gaussian_noise(tensor, 0.55, seed=7)
        c = inject_gaussian_noise(tensor, 0.55, seed=8)
        assert a == b
        assert a != c
        assert a.values.min() >= 0.0 and a.values.max() <= 1.0
        assert not a.is_binary()


def test_derive_seed_is_stable_and_key_dependent():
    assert derive_seed(3, 1, 2) == derive_seed(3, 1, 2)
    assert len({derive_seed(3, 0, i) for i in range(20)}) == 20
    assert derive_seed(3, 1) != derive_seed(4, 1)


class TestSynth:
    def test_counts_labels_and_validity(self):
        samples = synth_dataset(3, 4, size=16, duration=10_000, noise_rate=5.0, seed=0)
        assert len(samples) == 12
        assert [s.label for s in samples] == [0] * 4 + [1] * 4 + [2] * 4
        for s in samples:
            assert validate_stream(s.stream).ok
            assert (s.stream.width, s.stream.height, s.stream.duration) == (16, 16, 10_000)
            assert len(s.stream) > 0

    def test_deterministic_per_seed(self):
        a = synth_dataset(2, 2, size=12, duration=5000, noise_rate=1.0, seed=4)
        b = synth_dataset(2, 2, size=12, duration=5000, noise_rate=1.0, seed=4)
        c = synth_dataset(2, 2, size=12, duration=5000, noise_rate=1.0, seed=5)
        assert all(x.stream == y.stream for x, y in zip(a, b))
        assert any(x.stream != y.stream for x, y in zip(a, c))

    def test_noise_free_events_lie_on_the_trajectory(self):
        for sample in synth_dataset(4, 2, size=20, duration=10_000, noise_rate=0.0, seed=1):
            distance = trajectory_distance(sample.pattern, sample.stream.x, sample.stream.y)
            assert distance.max() <= sample.pattern.radius + 1e-9

    def test_blobs_reach_the_sensor_border(self):
        size = 20
        for sample in synth_dataset(8, 2, size=size, duration=10_000, noise_rate=0.0, seed=1):
            x, y = sample.stream.x, sample.stream.y
            margin = np.minimum.reduce([x, y, size - 1 - x, size - 1 - y])
            assert margin.min() <= 1

    @pytest.mark.parametrize("kwargs", [
        dict(class_count=1), dict(size=4), dict(noise_rate=-1.0),
    ])
    def test_invalid_parameters(self, kwargs):
        args = dict(class_count=2, samples_per_class=1, size=16, duration=1000, noise_rate=0.0, seed=0)
        args.update(kwargs)
        with pytest.raises(InvalidParamsError):
            synth_dataset(**args)

    def test_frames_from_streams_stacks_samples(self):
        samples = synth_dataset(2, 3, size=12, duration=4000, noise_rate=0.0, seed=2)
        dataset = frames_from_streams(samples, 4)
        assert dataset.values.shape == (6, 2, 12, 12, 4)
        assert dataset.labels.tolist() == [0, 0, 0, 1, 1, 1]
        assert dataset.bin_durations.tolist() == [1000] * 6


def test_trajectory_distance_of_degenerate_segment():
    pattern = MotionPattern(label=0, start=(1.0, 1.0), end=(1.0, 1.0), radius=1.0)
    assert trajectory_distance(pattern, np.array([4.0]), np.array([5.0]))[0] == pytest.approx(5.0)
