import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voipqos.traffic import (
    DEFAULT_TOS,
    Pattern,
    Source,
    TrafficClass,
    TrafficSpec,
    generation_times,
    next_generation_time,
    phase_offset,
)


def voice(**kw):
    base = dict(traffic_class="voice", src="a", dst="b", rate_pps=400, packet_size_bytes=200)
    base.update(kw)
    return TrafficSpec(**base)


@pytest.mark.parametrize("k, t", [(0, 0.0), (1, 0.0025), (400, 1.0)])
def test_cbr_instants(k, t):
    assert next_generation_time(voice(), k) == pytest.approx(t, abs=1e-15)


def _onoff_by_enumeration(rate, on, off, count):
    """Walk a fine grid at the packet spacing, keeping instants inside on-periods."""
    step, period = F(1) / F(rate), F(on) + F(off)
    out, t = [], F(0)
    while len(out) < count:
        if t % period < on:
            out.append(t)
        t += step
    return out


def test_onoff_second_burst_starts_after_off_period():
    spec = voice(rate_pps=10, pattern="onoff", on_s=1.0, off_s=1.0)
    assert next_generation_time(spec, 10) == 2.0
    expected = _onoff_by_enumeration(10, 1, 1, 45)
    got = [next_generation_time(spec, k) for k in range(45)]
    assert got == pytest.approx([float(x) for x in expected], abs=1e-12)


def test_single_packet_source_sends_at_start():
    spec = voice(rate_pps=1, start_s=3.5, stop_s=4.0)
    assert next_generation_time(spec, 0) == 3.5
    assert generation_times(spec, 480).tolist() == [3.5]


def test_no_packets_at_or_after_stop():
    spec = voice(start_s=0.0, stop_s=1.0)
    times = generation_times(spec, 480)
    assert len(times) == 400 and times[-1] < 1.0
    assert len(generation_times(spec, 0.5)) == 200


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.5, 500),
    st.floats(0, 5),
    st.floats(0.5, 20),
    st.booleans(),
    st.floats(0.05, 2),
    st.floats(0.05, 2),
)
def test_generation_times_agree_with_ordinals(rate, start, span, onoff, on, off):
    kw = dict(rate_pps=rate, start_s=start, stop_s=start + span)
    if onoff:
        kw.update(pattern="onoff", on_s=on, off_s=off)
    spec = voice(**kw)
    times = generation_times(spec, 1e9)
    assert np.all(np.diff(times) > 0)
    assert np.all(times < spec.stop_s)
    for k in range(len(times)):
        assert times[k] == next_generation_time(spec, k)
    assert next_generation_time(spec, len(times)) >= spec.stop_s - 1e-9


def test_tos_defaults_by_class():
    for cls, tos in DEFAULT_TOS.items():
        assert TrafficSpec(cls, "a", "b", 1, 100).tos == tos
    assert voice(tos=3).tos == 3


def test_offered_load():
    assert voice().offered_bps == 400 * 200 * 8
    assert TrafficSpec("ftp", "a", "b", 100, 1500).offered_bps == 1_200_000


@pytest.mark.parametrize(
    "kw",
    [{"rate_pps": 0}, {"packet_size_bytes": 0}, {"tos": 8}, {"start_s": 2, "stop_s": 1},
     {"pattern": "onoff", "on_s": 0, "off_s": 1}],
)
def test_problems_reported(kw):
    assert voice(**kw).problems()


def test_phase_offset_is_seeded_and_bounded():
    spec = voice(jitter_seed=7)
    a, b = phase_offset(spec, 1), phase_offset(spec, 1)
    assert a == b and 0 <= a < 1 / 400
    assert phase_offset(spec, 2) != a
    assert phase_offset(voice(), 1) == 0.0


def test_source_makes_packets_until_stop():
    src = Source(voice(stop_s=1.0), flow=3, src=0, dst=5)
    p = src.make_packet(11, src.next_time())
    assert (p.id, p.flow, p.size, p.tos, p.traffic_class) == (11, 3, 200, 6, TrafficClass.VOICE)
    assert p.delay is None
    p.delivered_at = 0.25
    assert p.delay == 0.25
    assert math.isclose(src.next_time(), 0.0025)
    with pytest.raises(ValueError):
        src.make_packet(12, 1.0)
    assert Pattern("cbr") is Pattern.CBR
