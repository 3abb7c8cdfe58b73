import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import ConfigError, InvalidParamsError, UnsortedTimestampsError
from event_core import bin_events, tensor_to_events
from filters import (
    apply_filter_to_tensor,
    background_activity_filter,
    filter_dataset,
    filter_stream,
    mask_filter,
    parse_filter_spec,
)
from models import BafParams, FilterSpec, FrameDataset, FrameTensor, MfParams

from helpers import binary_tensors, make_stream, valid_streams

BAF_POINTS = [(1, 1), (1, 50), (1, 400), (2, 100), (3, 20), (2, math.inf)]
MF_POINTS = [0, 1, 2, 3, 5, math.inf]


def baf_oracle(stream, s, window):
    """Straight transcription: stamp neighbors, keep when the own stamp is recent enough."""
    stamps = {}
    kept = []
    for i, e in enumerate(stream):
        for dy in range(-s, s + 1):
            for dx in range(-s, s + 1):
                nx, ny = e.x + dx, e.y + dy
                if (dx, dy) != (0, 0) and 0 <= nx < stream.width and 0 <= ny < stream.height:
                    stamps[(nx, ny)] = e.timestamp
        if e.timestamp - stamps.get((e.x, e.y), 0) <= window:
            kept.append(i)
    return kept


def mf_oracle(stream, threshold):
    activity = {}
    for e in stream:
        activity[(e.x, e.y)] = activity.get((e.x, e.y), 0) + 1
    return [i for i, e in enumerate(stream) if activity[(e.x, e.y)] <= threshold]


def kept_indices(original, filtered):
    """Indices of ``filtered`` events inside ``original`` (both are ordered subsequences)."""
    result, j = [], 0
    events = list(filtered)
    for i, e in enumerate(original):
        if j < len(events) and events[j] == e:
            result.append(i)
            j += 1
    assert j == len(events)
    return result


def keep_mask(stream, indices):
    mask = np.zeros(len(stream), dtype=bool)
    mask[indices] = True
    return mask


class TestBackgroundActivityFilter:
    def test_isolated_event_is_dropped(self):
        stream = make_stream([(4, 4, 1, 5000)], duration=6000)
        assert len(background_activity_filter(stream, BafParams(1, 100))) == 0

    def test_supported_event_is_kept(self):
        stream = make_stream([(4, 4, 1, 1000), (5, 4, 0, 1050)], duration=2000)
        out = background_activity_filter(stream, BafParams(1, 100))
        assert [(e.x, e.y) for e in out] == [(5, 4)]

    def test_own_pixel_does_not_support_itself(self):
        stream = make_stream([(2, 2, 1, 1000), (2, 2, 1, 1001)], duration=2000)
        assert len(background_activity_filter(stream, BafParams(1, 100))) == 0

    def test_neighborhood_radius_is_inclusive(self):
        stream = make_stream([(1, 1, 1, 1000), (3, 1, 1, 1010)], duration=2000)
        assert len(background_activity_filter(stream, BafParams(1, 100))) == 0
        assert len(background_activity_filter(stream, BafParams(2, 100))) == 1

    def test_neighbor_stamp_supports_later_event(self):
        stream = make_stream([(5, 5, 1, 100), (6, 5, 1, 120)], duration=200)
        out = background_activity_filter(stream, BafParams(1, 50))
        assert [(e.x, e.y, e.timestamp) for e in out] == [(6, 5, 120)]

    def test_map_starts_at_zero(self):
        # with an all-zero map, early events count as supported while t <= T
        stream = make_stream([(0, 0, 1, 30), (7, 7, 1, 300)], duration=400)
        out = background_activity_filter(stream, BafParams(1, 100))
        assert out.timestamp.tolist() == [30]

    def test_rejects_invalid_stream(self):
        with pytest.raises(UnsortedTimestampsError):
            background_activity_filter(make_stream([(0, 0, 1, 3), (0, 0, 1, 1)]), BafParams(1, 10))

    @given(valid_streams())
    @settings(max_examples=120)
    def test_matches_oracle(self, stream):
        for s, window in BAF_POINTS:
            out = background_activity_filter(stream, BafParams(s, window))
            assert out == stream.select(keep_mask(stream, baf_oracle(stream, s, window)))

    @given(valid_streams(), st.integers(1, 3), st.integers(1, 500), st.integers(0, 500))
    @settings(max_examples=300)
    def test_monotone_in_window(self, stream, s, window, extra):
        small = kept_indices(stream, background_activity_filter(stream, BafParams(s, window)))
        large = kept_indices(stream, background_activity_filter(stream, BafParams(s, window + extra)))
        assert set(small) <= set(large)

    @given(valid_streams(), st.integers(1, 500))
    @settings(max_examples=200)
    def test_monotone_in_radius(self, stream, window):
        small = kept_indices(stream, background_activity_filter(stream, BafParams(1, window)))
        large = kept_indices(stream, background_activity_filter(stream, BafParams(2, window)))
        assert set(small) <= set(large)

    @given(valid_streams())
    @settings(max_examples=200)
    def test_infinite_window_is_identity(self, stream):
        assert background_activity_filter(stream, BafParams(2, math.inf)) == stream

    @given(valid_streams())
    @settings(max_examples=100)
    def test_output_is_valid_subsequence(self, stream):
        out = background_activity_filter(stream, BafParams(1, 200))
        kept_indices(stream, out)
        assert (out.width, out.height, out.duration) == (stream.width, stream.height, stream.duration)


class TestMaskFilter:
    def test_hot_pixel_removed(self):
        stream = make_stream([(1, 1, 1, t) for t in range(5)] + [(2, 2, 0, 9)], duration=10)
        out, mask = mask_filter(stream, MfParams(3))
        assert [(e.x, e.y) for e in out] == [(2, 2)]
        assert mask.activity[1, 1] == 5
        assert mask.mask[1, 1] and not mask.mask[2, 2]

    def test_threshold_is_strict(self):
        stream = make_stream([(1, 1, 1, 0), (1, 1, 0, 1)], duration=2)
        assert len(mask_filter(stream, MfParams(2))[0]) == 2
        assert len(mask_filter(stream, MfParams(1))[0]) == 0

    @given(valid_streams())
    @settings(max_examples=120)
    def test_matches_oracle(self, stream):
        for threshold in MF_POINTS:
            out, _ = mask_filter(stream, MfParams(threshold))
            assert out == stream.select(keep_mask(stream, mf_oracle(stream, threshold)))

    @given(valid_streams(), st.integers(0, 10))
    @settings(max_examples=300)
    def test_idempotent(self, stream, threshold):
        once, _ = mask_filter(stream, MfParams(threshold))
        twice, _ = mask_filter(once, MfParams(threshold))
        assert once == twice

    @given(valid_streams(), st.integers(0, 10), st.integers(0, 10))
    @settings(max_examples=300)
    def test_monotone_in_threshold(self, stream, threshold, extra):
        small = kept_indices(stream, mask_filter(stream, MfParams(threshold))[0])
        large = kept_indices(stream, mask_filter(stream, MfParams(threshold + extra))[0])
        assert set(small) <= set(large)

    @given(valid_streams())
    @settings(max_examples=200)
    def test_sentinels(self, stream):
        assert mask_filter(stream, MfParams(math.inf))[0] == stream
        assert len(mask_filter(stream, MfParams(0))[0]) == 0


class TestFilterSpecs:
    @pytest.mark.parametrize("text, label", [
        ("none", "none"),
        ("baf:S=2,T=5000", "baf:S=2,T=5000"),
        ("BAF:t=100", "baf:S=1,T=100"),
        ("baf:S=1,T=inf", "baf:S=1,T=inf"),
        ("mf:T=5", "mf:T=5"),
        ("mf:T=2.5", "mf:T=2.5"),
    ])
    def test_parse(self, text, label):
        assert parse_filter_spec(text).label == label

    @pytest.mark.parametrize("text", ["median:T=3", "baf:S=2", "mf:S=1,T=2", "baf:S=0,T=5", "mf:T=-1", "mf:T=x"])
    def test_invalid(self, text):
        with pytest.raises(InvalidParamsError):
            parse_filter_spec(text)

    def test_malformed_selector(self):
        with pytest.raises(ConfigError):
            parse_filter_spec("baf:S")

    def test_filter_stream_dispatch(self):
        stream = make_stream([(1, 1, 1, t) for t in range(4)], duration=4)
        assert filter_stream(stream, FilterSpec()) is stream
        assert len(filter_stream(stream, parse_filter_spec("mf:T=3"))) == 0


class TestTensorFiltering:
    def test_none_returns_same_tensor(self):
        tensor = FrameTensor(np.full((2, 2, 2, 2), 0.3), 5)
        assert apply_filter_to_tensor(tensor, FilterSpec()) is tensor

    def test_mask_filter_removes_bright_border(self):
        values = np.zeros((2, 6, 6, 8), dtype=np.float32)
        values[:, 0, :, :] = 1.0
        values[1, 3, 3, 2] = 1.0
        out = apply_filter_to_tensor(FrameTensor(values, 100), parse_filter_spec("mf:T=4"))
        assert out.bin_duration == 100
        assert out.values[:, 0].sum() == 0
        assert out.values[1, 3, 3, 2] == 1.0

    def test_dataset_filtering_keeps_labels(self):
        values = np.zeros((2, 2, 4, 4, 3), dtype=np.float32)
        values[:, :, 1, 1, :] = 1.0
        dataset = FrameDataset(values, [0, 1], [10, 10])
        out = filter_dataset(dataset, parse_filter_spec("mf:T=2"))
        assert out.labels.tolist() == [0, 1]
        assert out.values.sum() == 0

    def test_round_trip_through_events_without_filtering(self):
        stream = make_stream([(1, 1, 1, 0), (2, 3, 0, 90)], duration=100)
        tensor = bin_events(stream, 4)
        assert apply_filter_to_tensor(tensor, parse_filter_spec("mf:T=inf")) == tensor

    @given(binary_tensors(max_bins=6))
    @settings(max_examples=100)
    def test_mask_filter_at_activity_bound_is_identity(self, tensor):
        # a binary pixel holds at most channels * bins events
        spec = parse_filter_spec(f"mf:T={tensor.channels * tensor.frames}")
        assert apply_filter_to_tensor(tensor, spec) == tensor

    @given(binary_tensors(), st.integers(1, 2), st.integers(1, 3000))
    @settings(max_examples=100)
    def test_baf_on_tensor_is_unbin_filter_rebin(self, tensor, s, window):
        params = BafParams(s, window)
        expected = bin_events(background_activity_filter(tensor_to_events(tensor), params), tensor.frames)
        assert apply_filter_to_tensor(tensor, FilterSpec(kind="baf", baf=params)) == expected
