import json

import pytest
from hypothesis import given, settings, strategies as st

from hhesim.netsim import (
    DEFAULT_UPLINK,
    LinkModel,
    Workload,
    fragment,
    load_scenario_config,
    run_from_config,
    run_scenario,
    transmit_time,
)
from hhesim.params import (
    ConfigError,
    PARAMSET_NAMES,
    fragment_count,
    load_paramset,
    load_profile,
    serialized_size_bytes,
)

FAST_LINK = LinkModel(bandwidth_bps=100e6, mtu_bytes=1400)
ADDMUL = load_profile("CKKS-addmul")


class TestFragment:
    def test_small_message_single_fragment(self):
        assert fragment(195, FAST_LINK) == [195]

    def test_bfv_fragments_and_tail(self):
        frags = fragment(131939, FAST_LINK)
        assert len(frags) == 95
        assert frags[-1] == 339  # 131939 - 94*1400
        assert all(f == 1400 for f in frags[:-1])

    def test_zero_size_control_message(self):
        assert fragment(0, FAST_LINK) == [0]

    @given(
        size=st.integers(min_value=0, max_value=5 * 10 ** 6),
        mtu=st.integers(min_value=64, max_value=9000),
        ovh=st.integers(min_value=0, max_value=63),
    )
    @settings(max_examples=200)
    def test_matches_fragment_count_and_conserves_bytes(self, size, mtu, ovh):
        link = LinkModel(bandwidth_bps=1e6, mtu_bytes=mtu,
                         per_fragment_overhead_bytes=ovh)
        frags = fragment(size, link)
        assert sum(frags) == size
        assert len(frags) == fragment_count(size, mtu, ovh)
        assert all(0 <= f <= mtu - ovh for f in frags)


class TestTransmitTime:
    def test_one_mtu_at_11_2_mbit(self):
        link = LinkModel(bandwidth_bps=11.2e6, mtu_bytes=1400)
        assert transmit_time(1400, link) == pytest.approx(1e-3)

    def test_time_ratio_equals_byte_ratio(self):
        link = LinkModel(bandwidth_bps=50e6, mtu_bytes=1400)
        p = load_paramset("Par-80S")
        small = serialized_size_bytes(p)
        big = load_profile("BFV").ciphertext_bytes
        ratio = transmit_time(big, link) / transmit_time(small, link)
        assert ratio == pytest.approx(big / small)

    def test_zero_size_pays_propagation_only(self):
        link = LinkModel(bandwidth_bps=1e6, propagation_delay_s=0.007)
        assert transmit_time(0, link) == pytest.approx(0.007)

    def test_per_fragment_terms_accumulate(self):
        link = LinkModel(
            bandwidth_bps=8e6, mtu_bytes=1000,
            per_fragment_overhead_bytes=100, per_fragment_latency_s=0.001,
            propagation_delay_s=0.01,
        )
        # 1800 bytes -> fragments of 900 payload: 2 fragments
        expected = 2 * ((900 + 100) * 8 / 8e6 + 0.001) + 0.01
        assert transmit_time(1800, link) == pytest.approx(expected)

    def test_link_validation(self):
        with pytest.raises(ValueError):
            LinkModel(bandwidth_bps=0)
        with pytest.raises(ValueError):
            LinkModel(bandwidth_bps=1e6, mtu_bytes=10,
                      per_fragment_overhead_bytes=10)


class TestRunScenario:
    def test_hhe_single_fragment_uploads(self):
        p = load_paramset("Par-80L")
        report = run_scenario(
            Workload(rsu_count=1, duration_s=1.0), FAST_LINK, FAST_LINK,
            p, ADDMUL, seed=3,
        )
        ups = [m for m in report.messages
               if not m.offline and m.direction == "up"]
        assert len(ups) == 1  # 10 records -> 40 of 60 slots -> one packet
        assert ups[0].fragments == 1
        assert ups[0].payload_bytes == serialized_size_bytes(p)

    def test_pure_he_fragments_per_upload(self):
        report = run_scenario(
            Workload(rsu_count=1, duration_s=1.0, mode="PureHE"),
            FAST_LINK, FAST_LINK, load_paramset("Par-80L"), ADDMUL, seed=3,
        )
        ups = [m for m in report.messages
               if not m.offline and m.direction == "up"]
        assert len(ups) == 10  # one per telemetry message
        assert {m.fragments for m in ups} == {751}

    def test_uplink_byte_ratio_tracks_sizes(self):
        p = load_paramset("Par-80S")
        bfv = load_profile("BFV")
        hhe = run_scenario(
            Workload(rsu_count=1, duration_s=2.0), FAST_LINK, FAST_LINK,
            p, bfv, seed=5,
        )
        pure = run_scenario(
            Workload(rsu_count=1, duration_s=2.0, mode="PureHE"),
            FAST_LINK, FAST_LINK, p, bfv, seed=5,
        )
        per_msg_hhe = (
            hhe.totals["uplink_online_bytes"]
            / hhe.totals["uplink_online_msgs"]
        )
        per_msg_pure = (
            pure.totals["uplink_online_bytes"]
            / pure.totals["uplink_online_msgs"]
        )
        assert per_msg_hhe == serialized_size_bytes(p)
        assert per_msg_pure == bfv.ciphertext_bytes
        assert per_msg_pure / per_msg_hhe == pytest.approx(
            bfv.ciphertext_bytes / serialized_size_bytes(p)
        )

    def test_determinism_same_seed(self):
        kwargs = dict(seed=11, cycle_window_s=1.0)
        a = run_scenario(Workload(rsu_count=2, duration_s=3.0),
                         FAST_LINK, FAST_LINK,
                         load_paramset("Par-80M"), ADDMUL, **kwargs)
        b = run_scenario(Workload(rsu_count=2, duration_s=3.0),
                         FAST_LINK, FAST_LINK,
                         load_paramset("Par-80M"), ADDMUL, **kwargs)
        assert a.as_dict() == b.as_dict()

    def test_different_seed_changes_payload_content(self):
        a = run_scenario(Workload(rsu_count=1, duration_s=1.0),
                         FAST_LINK, FAST_LINK,
                         load_paramset("Par-80M"), ADDMUL, seed=1)
        b = run_scenario(Workload(rsu_count=1, duration_s=1.0),
                         FAST_LINK, FAST_LINK,
                         load_paramset("Par-80M"), ADDMUL, seed=2)
        assert a.analytics != b.analytics

    def test_report_conservation(self):
        report = run_scenario(
            Workload(rsu_count=3, duration_s=4.0), FAST_LINK, FAST_LINK,
            load_paramset("Par-128M"), ADDMUL, seed=13,
        )
        ups = [m for m in report.messages
               if not m.offline and m.direction == "up"]
        assert report.totals["uplink_online_bytes"] == \
            sum(m.payload_bytes for m in ups)
        assert report.totals["uplink_online_fragments"] == \
            sum(m.fragments for m in ups)
        assert report.totals["uplink_online_bytes"] == \
            sum(c["uplink_bytes"] for c in report.cycles)
        assert report.totals["offline_msgs"] == 3
        assert report.totals["offline_bytes"] == 3 * ADDMUL.ciphertext_bytes
        assert report.totals["nonce_overhead_bits"] == \
            len(ups) * 128

    def test_queue_empty_at_10hz_when_service_fast(self):
        # BFV service time at 100 Mbit/s is ~10.6 ms per message,
        # well under the 100 ms interarrival gap
        report = run_scenario(
            Workload(rsu_count=2, duration_s=3.0, mode="PureHE"),
            FAST_LINK, FAST_LINK, load_paramset("Par-80S"),
            load_profile("BFV"), seed=17,
        )
        ups = [m for m in report.messages
               if not m.offline and m.direction == "up"]
        assert all(m.queue_s == 0.0 for m in ups)

    def test_queue_builds_when_service_slow(self):
        slow = LinkModel(bandwidth_bps=5e6, mtu_bytes=1400)
        report = run_scenario(
            Workload(rsu_count=1, duration_s=2.0, mode="PureHE"),
            slow, FAST_LINK, load_paramset("Par-80S"),
            load_profile("BFV"), seed=17,
        )
        ups = [m for m in report.messages
               if not m.offline and m.direction == "up"]
        assert any(m.queue_s > 0.0 for m in ups)

    @pytest.mark.parametrize("name", PARAMSET_NAMES)
    @pytest.mark.parametrize("overhead", [0, 7, 1188])
    def test_single_fragment_for_all_sets_and_overheads(self, name,
                                                        overhead):
        link = LinkModel(bandwidth_bps=100e6, mtu_bytes=1400,
                         per_fragment_overhead_bytes=overhead)
        report = run_scenario(
            Workload(rsu_count=1, duration_s=1.0), link, FAST_LINK,
            load_paramset(name), ADDMUL, seed=19,
        )
        ups = [m for m in report.messages
               if not m.offline and m.direction == "up"]
        assert ups and all(m.fragments == 1 for m in ups)

    def test_offline_traffic_not_in_online_totals(self):
        report = run_scenario(
            Workload(rsu_count=2, duration_s=2.0), FAST_LINK, FAST_LINK,
            load_paramset("Par-80S"), ADDMUL, seed=23,
        )
        online = report.totals["uplink_online_bytes"]
        assert online < report.totals["offline_bytes"]
        assert all(m.latency_s == 0.0
                   for m in report.messages if m.offline)

    def test_rsu_side_decryption(self):
        report = run_scenario(
            Workload(rsu_count=1, duration_s=1.0), FAST_LINK, FAST_LINK,
            load_paramset("Par-80M"), ADDMUL, seed=29, decryptor="rsu",
        )
        assert len(report.analytics) == 1


class TestScenarioConfig:
    def write(self, tmp_path, body):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(body) if isinstance(body, dict) else body)
        return str(path)

    def test_minimal_config_gets_defaults(self, tmp_path):
        cfg = load_scenario_config(
            self.write(tmp_path, {"paramset": "Par-80L"})
        )
        assert cfg.param.name == "Par-80L"
        assert cfg.profile.scheme == "CKKS-addmul"
        assert cfg.workload.bsm_rate_hz == 10.0
        assert cfg.workload.plaintext_bytes_per_msg == 200
        assert cfg.link_up == DEFAULT_UPLINK

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown keys"):
            load_scenario_config(self.write(
                tmp_path, {"paramset": "Par-80L", "bogus": 1}
            ))

    def test_malformed_json_reports_line(self, tmp_path):
        with pytest.raises(ConfigError, match=r":2:"):
            load_scenario_config(self.write(tmp_path, "{\n  nope\n}"))

    def test_missing_paramset(self, tmp_path):
        with pytest.raises(ConfigError, match="paramset"):
            load_scenario_config(self.write(tmp_path, {}))

    def test_bad_link_key(self, tmp_path):
        with pytest.raises(ConfigError, match="link keys"):
            load_scenario_config(self.write(
                tmp_path,
                {"paramset": "Par-80S", "uplink": {"speed": 1}},
            ))

    def test_bad_mode(self, tmp_path):
        with pytest.raises(ConfigError, match="mode"):
            load_scenario_config(self.write(
                tmp_path, {"paramset": "Par-80S", "mode": "Hybrid"}
            ))

    def test_telemetry_replay(self, tmp_path):
        csv_path = tmp_path / "telemetry.csv"
        csv_path.write_text(
            "rsu_id,timestamp_ms,speed,acceleration,occupancy,queue_length\n"
            + "".join(
                f"r,{i},{10 + i},0.0,1,0\n" for i in range(10)
            )
        )
        cfg = load_scenario_config(self.write(tmp_path, {
            "paramset": "Par-80L",
            "duration_s": 1,
            "telemetry_csv": str(csv_path),
        }))
        report = run_from_config(cfg)
        # slot 0 of the mean equals the replayed first record's speed
        assert report.analytics[0][0] == pytest.approx(10.0, abs=0.2)

    def test_run_from_config_carries_name(self, tmp_path):
        cfg = load_scenario_config(self.write(
            tmp_path, {"paramset": "Par-80S", "duration_s": 1,
                       "name": "tiny"}
        ))
        report = run_from_config(cfg)
        assert report.header["scenario"] == "tiny"

    def test_params_config_override_reaches_scenario(self, tmp_path):
        params_path = tmp_path / "params.json"
        params_path.write_text(json.dumps({
            "profiles": {"Rubato-hom": {"ciphertext_bytes": 4096,
                                        "supports_mul": True}},
        }))
        cfg = load_scenario_config(self.write(tmp_path, {
            "paramset": "Par-80S",
            "profile": "Rubato-hom",
            "duration_s": 1,
            "params_config": str(params_path),
        }))
        assert cfg.profile.ciphertext_bytes == 4096
        report = run_from_config(cfg)
        assert report.totals["downlink_bytes"] == 4096
        assert report.totals["offline_bytes"] == 4096
