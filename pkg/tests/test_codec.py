import pytest
from hypothesis import given, strategies as st

from hhesim.codec import (
    CountMismatchError,
    FixedPointFormat,
    Q8_8,
    QuantizationRangeError,
    SlotVector,
    TelemetryRecord,
    default_bound,
    dequantize,
    load_telemetry_csv,
    pack_records,
    quantize,
    round_half_down,
    snap,
    unpack_records,
)
from hhesim.params import load_paramset


def rec(speed=0.0, accel=0.0, occ=0.0, queue=0.0, rsu="r", ts=0):
    return TelemetryRecord(rsu, ts, speed, accel, occ, queue)


class TestRoundHalfDown:
    @pytest.mark.parametrize(
        "x,expected",
        [(2.5, 2), (-2.5, -3), (3.5, 3), (2.3, 2), (2.7, 3), (-2.3, -2),
         (-2.7, -3), (0.0, 0), (0.5, 0), (-0.5, -1)],
    )
    def test_tie_rule(self, x, expected):
        assert round_half_down(x) == expected

    @given(st.floats(min_value=-1e6, max_value=1e6))
    def test_within_half(self, x):
        assert abs(round_half_down(x) - x) <= 0.5


class TestQuantize:
    def test_exact_product(self):
        assert quantize(60.5, Q8_8) == 15488

    def test_zero(self):
        assert quantize(0.0, Q8_8) == 0

    def test_just_above_max(self):
        with pytest.raises(QuantizationRangeError):
            quantize(Q8_8.max_value + Q8_8.resolution, Q8_8)

    def test_max_and_min_are_representable(self):
        assert quantize(Q8_8.max_value, Q8_8) == Q8_8.int_max
        assert quantize(Q8_8.min_value, Q8_8) == Q8_8.int_min

    def test_half_tick_ties_round_down(self):
        assert quantize(2.5 / 256, Q8_8) == 2
        assert quantize(-2.5 / 256, Q8_8) == -3

    @pytest.mark.parametrize(
        "v,expected", [(15488, 60.5), (1, 1 / 256), (-256, -1.0)]
    )
    def test_dequantize(self, v, expected):
        assert dequantize(v, Q8_8) == expected

    @given(st.floats(min_value=-127.9, max_value=127.9))
    def test_roundtrip_error_bound(self, x):
        err = abs(dequantize(quantize(x, Q8_8), Q8_8) - x)
        assert err <= Q8_8.quantization_error_bound

    def test_format_validation(self):
        with pytest.raises(ValueError):
            FixedPointFormat(16, 16)
        with pytest.raises(ValueError):
            FixedPointFormat(40, 8)

    def test_snap_has_no_range_check(self):
        assert snap(200.004, Q8_8) == pytest.approx(200.00390625)


class TestSlotVector:
    def test_norm_within_bound(self):
        sv = SlotVector((1.0, -2.0, 3.0), 6.0)
        assert sv.norm1 == 6.0

    def test_bound_violation_rejected(self):
        with pytest.raises(ValueError):
            SlotVector((4.0, 4.0), 6.0)

    def test_of_widens_bound(self):
        sv = SlotVector.of([10.0, -10.0], declared_bound=5.0)
        assert sv.bound >= sv.norm1


class TestPacking:
    def test_exact_fit(self):
        p = load_paramset("Par-80S")  # 12 slots, 3 records
        records = [rec(speed=10.0 + i) for i in range(3)]
        vectors = pack_records(records, p)
        assert len(vectors) == 1
        assert vectors[0].values[0] == 10.0
        assert vectors[0].values[4] == 11.0
        assert vectors[0].values[8] == 12.0

    def test_padding(self):
        p = load_paramset("Par-80S")
        vectors = pack_records([rec(speed=5.5)], p)
        assert len(vectors) == 1
        assert vectors[0].values[4:] == (0.0,) * 8

    def test_two_vector_split(self):
        # 20 records x 4 fields into 60 slots: 15 records, then 5 + padding
        p = load_paramset("Par-80L")
        records = [rec(speed=float(i)) for i in range(20)]
        vectors = pack_records(records, p)
        assert len(vectors) == 2
        assert vectors[0].values[0] == 0.0
        assert vectors[0].values[56] == 14.0
        assert vectors[1].values[0] == 15.0
        assert vectors[1].values[20:] == (0.0,) * 40

    def test_default_bound_is_loose_worst_case(self):
        p = load_paramset("Par-80M")
        vectors = pack_records([rec()], p)
        assert vectors[0].bound == default_bound(p.slots, Q8_8) == 32 * 128.0

    def test_out_of_range_record(self):
        p = load_paramset("Par-80S")
        with pytest.raises(QuantizationRangeError):
            pack_records([rec(speed=200.0)], p)

    def test_values_are_quantized(self):
        p = load_paramset("Par-80S")
        vectors = pack_records([rec(speed=10.123456)], p)
        assert vectors[0].values[0] == snap(10.123456, Q8_8)


class TestUnpacking:
    def test_identity_on_quantized_records(self):
        p = load_paramset("Par-80S")
        records = [
            rec(speed=13.37, accel=-1.5, occ=7, queue=3),
            rec(speed=0.25, accel=0.0, occ=12, queue=0),
            rec(speed=-4.75, accel=2.25, occ=1, queue=9),
        ]
        out = unpack_records(pack_records(records, p), Q8_8, count=3)
        for original, recovered in zip(records, out):
            assert recovered.slot_fields() == \
                original.quantized(Q8_8).slot_fields()

    def test_empty(self):
        assert unpack_records([], Q8_8) == []

    def test_count_exceeding_capacity(self):
        p = load_paramset("Par-80S")
        vectors = pack_records([rec()], p)
        with pytest.raises(CountMismatchError):
            unpack_records(vectors, Q8_8, count=4)

    def test_padding_trimmed_by_count(self):
        p = load_paramset("Par-80L")
        records = [rec(speed=float(i)) for i in range(20)]
        out = unpack_records(pack_records(records, p), Q8_8, count=20)
        assert len(out) == 20
        assert out[-1].speed == 19.0

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=-120, max_value=120),
                st.floats(min_value=-8, max_value=8),
                st.integers(min_value=0, max_value=60),
                st.integers(min_value=0, max_value=60),
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_roundtrip_property(self, fields):
        p = load_paramset("Par-80M")
        records = [rec(s, a, float(o), float(q)) for s, a, o, q in fields]
        out = unpack_records(pack_records(records, p), Q8_8,
                             count=len(records))
        for original, recovered in zip(records, out):
            for a, b in zip(original.slot_fields(), recovered.slot_fields()):
                assert abs(a - b) <= Q8_8.quantization_error_bound


class TestCsv:
    def test_load(self, tmp_path):
        path = tmp_path / "telemetry.csv"
        path.write_text(
            "rsu_id,timestamp_ms,speed,acceleration,occupancy,queue_length\n"
            "rsu-0,1000,12.5,-0.5,7,3\n"
            "rsu-1,1100,9.0,1.25,4,0\n"
        )
        records = load_telemetry_csv(str(path))
        assert len(records) == 2
        assert records[0].speed == 12.5
        assert records[1].rsu_id == "rsu-1"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "telemetry.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            load_telemetry_csv(str(path))

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "telemetry.csv"
        path.write_text(
            "rsu_id,timestamp_ms,speed,acceleration,occupancy,queue_length\n"
            "rsu-0,notanumber,1,2,3,4\n"
        )
        with pytest.raises(ValueError, match=":2"):
            load_telemetry_csv(str(path))
