import json

import pytest
import sympy
from hypothesis import given, strategies as st

from hhesim import params
from hhesim.params import (
    ConfigError,
    DeltaPolicy,
    FRAGMENT_OVERHEAD_PRESETS,
    PARAMSET_NAMES,
    UnknownParamSetError,
    all_paramsets,
    ciphertext_size_bytes,
    compute_delta,
    expansion_factor,
    fragment_count,
    load_params_config,
    load_paramset,
    load_profile,
    nonce_overhead_bits,
    payload_bytes,
    reported_expansion,
    round_half_away,
    select_prime,
    serialized_size_bytes,
)

TABLE1 = {
    "Par-80S": (80, 16, 12, 26, 11.1),
    "Par-80M": (80, 36, 32, 25, 2.7),
    "Par-80L": (80, 64, 60, 25, 1.6),
    "Par-128S": (128, 16, 12, 26, 10.5),
    "Par-128M": (128, 36, 32, 25, 4.1),
    "Par-128L": (128, 64, 60, 25, 4.1),
}

# frozen from the independent oracle below (sympy scan upward from 2^(c-1)+1)
PRIME_26 = 33554467
PRIME_25 = 16777259


def oracle_next_prime(c):
    n = 2 ** (c - 1) + 1
    while not sympy.isprime(n):
        n += 1
    return n


class TestSelectPrime:
    def test_tiny(self):
        assert select_prime(3) == 5

    @pytest.mark.parametrize("c,expected", [(26, PRIME_26), (25, PRIME_25)])
    def test_published_widths(self, c, expected):
        assert select_prime(c) == expected
        assert oracle_next_prime(c) == expected

    @pytest.mark.parametrize("c", range(2, 33))
    def test_against_independent_oracle(self, c):
        q = select_prime(c)
        assert sympy.isprime(q)
        assert 2 ** (c - 1) < q < 2 ** c
        assert q == oracle_next_prime(c)

    def test_deterministic(self):
        assert select_prime(26) == select_prime(26)

    def test_rejects_small_width(self):
        with pytest.raises(ValueError):
            select_prime(1)


class TestParamSets:
    @pytest.mark.parametrize("name", PARAMSET_NAMES)
    def test_matches_published_row(self, name):
        p = load_paramset(name)
        assert (p.security_bits, p.key_len, p.slots, p.modulus_bits,
                p.noise_width) == TABLE1[name]
        assert 2 ** (p.modulus_bits - 1) < p.q < 2 ** p.modulus_bits
        assert sympy.isprime(p.q)

    def test_unknown_name(self):
        with pytest.raises(UnknownParamSetError):
            load_paramset("Par-256")

    def test_q_override_must_be_prime(self):
        with pytest.raises(ConfigError):
            load_paramset("Par-80S", q_override=33554468)

    def test_q_override_must_match_bit_length(self):
        with pytest.raises(ConfigError):
            load_paramset("Par-80S", q_override=PRIME_25)

    def test_param_ids_are_stable(self):
        assert [p.param_id for p in all_paramsets()] == list(range(6))

    def test_tail_cutoffs(self):
        cutoffs = {p.name: p.gauss_tail_cutoff for p in all_paramsets()}
        assert cutoffs == {
            "Par-80S": 111, "Par-80M": 27, "Par-80L": 16,
            "Par-128S": 105, "Par-128M": 41, "Par-128L": 41,
        }


class TestSizes:
    @pytest.mark.parametrize(
        "name,ct_bytes", [
            ("Par-80S", 41), ("Par-80M", 104), ("Par-80L", 195),
            ("Par-128S", 41), ("Par-128M", 104), ("Par-128L", 195),
        ],
    )
    def test_ciphertext_sizes(self, name, ct_bytes):
        assert ciphertext_size_bytes(load_paramset(name)) == ct_bytes

    @pytest.mark.parametrize(
        "slots,expected", [(12, 24), (32, 64), (60, 120)]
    )
    def test_payloads_at_16_bits(self, slots, expected):
        assert payload_bytes(slots, 16) == expected

    def test_payload_single_byte(self):
        assert payload_bytes(1, 8) == 1

    def test_payload_rejects_bad_args(self):
        with pytest.raises(ValueError):
            payload_bytes(0, 16)

    @pytest.mark.parametrize("name", PARAMSET_NAMES)
    def test_real_expansion_within_band(self, name):
        p = load_paramset(name)
        ratio = expansion_factor(
            ciphertext_size_bytes(p), payload_bytes(p.slots, 16)
        )
        assert 1.6 <= ratio <= 1.71

    def test_serialized_size_includes_header_and_nonce(self):
        p = load_paramset("Par-80L")
        assert serialized_size_bytes(p) == 1 + 10 + 195


class TestExpansion:
    def test_bfv_reported(self):
        assert expansion_factor(131939, 200) == pytest.approx(659.695)
        assert reported_expansion(131939, 200, 0) == 660

    def test_symmetric_reported(self):
        assert reported_expansion(41, 24, 1) == 1.7
        assert reported_expansion(104, 64, 1) == 1.6

    def test_identity(self):
        assert expansion_factor(200, 200) == 1.0

    def test_zero_plaintext(self):
        with pytest.raises(ValueError):
            expansion_factor(100, 0)

    def test_rounding_is_half_away_from_zero(self):
        assert round_half_away(0.5, 0) == 1
        assert round_half_away(1.65, 1) == 1.7
        assert round_half_away(1.625, 1) == 1.6
        assert round_half_away(-0.5, 0) == -1


class TestFragmentCount:
    def test_bfv_row(self):
        assert fragment_count(131939, 1400, 0) == 95

    def test_symmetric_rows_fit_one_fragment(self):
        for p in all_paramsets():
            assert fragment_count(ciphertext_size_bytes(p), 1400, 0) == 1

    def test_plain_ceiling_oracle(self):
        # ceil(394573/1400); the published table prints 284, reproduced
        # only under the 7-byte preset
        assert fragment_count(394573, 1400, 0) == 282
        assert fragment_count(394573, 1400, 7) == 284
        assert fragment_count(787791, 1400, 7) == 566
        assert fragment_count(1050129, 1400, 7) == 754

    def test_presets(self):
        assert FRAGMENT_OVERHEAD_PRESETS == {"none": 0, "header7": 7}

    def test_invalid_mtu(self):
        with pytest.raises(ValueError):
            fragment_count(100, 7, 7)

    def test_zero_size_counts_one(self):
        assert fragment_count(0, 1400, 0) == 1

    @given(
        size=st.integers(min_value=0, max_value=10 ** 7),
        mtu=st.integers(min_value=2, max_value=9000),
        ovh=st.integers(min_value=0, max_value=100),
    )
    def test_monotone_and_single_fragment_boundary(self, size, mtu, ovh):
        if mtu <= ovh:
            return
        n = fragment_count(size, mtu, ovh)
        assert n >= 1
        assert fragment_count(size + 1, mtu, ovh) >= n
        assert (n == 1) == (size <= mtu - ovh)


class TestDelta:
    def test_unit_bound(self):
        q = PRIME_26
        assert compute_delta(q, 1) == q / 16

    def test_worked_example(self):
        # confirm primality first, then divide
        assert sympy.isprime(33554467)
        d = compute_delta(33554467, 1024)
        assert d == 33554467 / 16384
        assert d == pytest.approx(2048.0, rel=1e-3)

    def test_delta_one_boundary(self):
        q = PRIME_25
        assert compute_delta(q, q / 16) == pytest.approx(1.0)

    def test_nonpositive_bound(self):
        with pytest.raises(ValueError):
            compute_delta(PRIME_26, 0)

    def test_policy_constructors_agree(self):
        q = PRIME_26
        a = DeltaPolicy.for_bound(q, 1536.0)
        b = DeltaPolicy.from_delta(q, a.delta)
        assert b.bound == pytest.approx(a.bound)


class TestNonceOverhead:
    @pytest.mark.parametrize(
        "r,lam,bits", [(10, 128, 1280), (0, 128, 0), (100, 80, 8000)]
    )
    def test_formula(self, r, lam, bits):
        assert nonce_overhead_bits(r, lam) == bits

    def test_negative_count(self):
        with pytest.raises(ValueError):
            nonce_overhead_bits(-1, 80)


class TestProfiles:
    def test_published_sizes(self):
        sizes = {
            name: load_profile(name).ciphertext_bytes
            for name in ("BFV", "BGV", "CKKS-add", "CKKS-addmul")
        }
        assert sizes == {
            "BFV": 131939, "BGV": 394573,
            "CKKS-add": 787791, "CKKS-addmul": 1050129,
        }

    def test_add_only_profile(self):
        assert not load_profile("CKKS-add").supports_mul
        assert load_profile("CKKS-addmul").supports_mul

    def test_unknown_profile(self):
        with pytest.raises(params.UnknownProfileError):
            load_profile("Paillier")


class TestConfigFile:
    def test_roundtrip_defaults(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text("{}")
        paramsets, profiles = load_params_config(str(path))
        assert paramsets["Par-80S"].q == PRIME_26
        assert profiles["BFV"].ciphertext_bytes == 131939

    def test_q_and_profile_overrides(self, tmp_path):
        q_alt = int(sympy.nextprime(PRIME_26))
        path = tmp_path / "params.json"
        path.write_text(json.dumps({
            "paramsets": {"Par-80S": {"q": q_alt}},
            "profiles": {"Rubato-hom": {"ciphertext_bytes": 123456}},
        }))
        paramsets, profiles = load_params_config(str(path))
        assert paramsets["Par-80S"].q == q_alt
        assert paramsets["Par-80M"].q == PRIME_25
        assert profiles["Rubato-hom"].ciphertext_bytes == 123456

    def test_bad_q_rejected(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text(json.dumps({"paramsets": {"Par-80S": {"q": 100}}}))
        with pytest.raises(ConfigError):
            load_params_config(str(path))

    def test_unknown_paramset_rejected(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text(json.dumps({"paramsets": {"Par-256": {}}}))
        with pytest.raises(ConfigError):
            load_params_config(str(path))

    def test_malformed_json_reports_location(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text("{\n  broken\n}")
        with pytest.raises(ConfigError, match=r":2:"):
            load_params_config(str(path))
