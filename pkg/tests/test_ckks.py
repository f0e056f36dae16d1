"""Ciphertext operation tests. The oracle for every homomorphic op is the
same arithmetic done on the plaintext vectors."""
import numpy as np
import pytest

from fedshield.ckks import (
    CkksParams,
    add,
    bench_params,
    ciphertext_count,
    concat_chunks,
    decode,
    decrypt,
    deserialize_ct,
    encode,
    encrypt,
    keygen,
    mul_plain_scalar,
    pack_tensors,
    rescale,
    serialize_ct,
    unpack_tensors,
)
from fedshield.ckks.poly import crt_centered, rns_add, rns_intt, rns_pointwise_mul
from fedshield.errors import DepthExhaustedError, FormatError, StateError

TOL = 1e-3


def enc(vals, params, pk, seed):
    return encrypt(encode(vals, params.scale, params), pk, seed)


class TestKeygen:
    def test_deterministic(self, tiny_params):
        sk1, pk1 = keygen(tiny_params, seed=42)
        sk2, pk2 = keygen(tiny_params, seed=42)
        assert np.array_equal(sk1.s_ntt, sk2.s_ntt)
        assert np.array_equal(pk1.b_ntt, pk2.b_ntt)
        assert np.array_equal(pk1.a_ntt, pk2.a_ntt)

    def test_different_seeds_differ(self, tiny_params):
        _, pk1 = keygen(tiny_params, seed=1)
        _, pk2 = keygen(tiny_params, seed=2)
        assert not np.array_equal(pk1.a_ntt, pk2.a_ntt)

    def test_pk_relation_has_small_error(self, tiny_params, tiny_keys):
        # b + a*s should equal the Gaussian error polynomial
        sk, pk = tiny_keys
        top = tiny_params.max_level
        acc = rns_add(pk.b_ntt,
                      rns_pointwise_mul(pk.a_ntt, sk.s_ntt, tiny_params, top),
                      tiny_params, top)
        coeffs = crt_centered(rns_intt(acc, tiny_params, top),
                              tiny_params, top)
        bound = 6 * tiny_params.noise_stddev + 1
        assert max(abs(int(c)) for c in coeffs) <= bound

    def test_secret_is_ternary(self, tiny_params, tiny_keys):
        sk, _ = tiny_keys
        s0 = crt_centered(rns_intt(sk.s_ntt, tiny_params,
                                   tiny_params.max_level),
                          tiny_params, tiny_params.max_level)
        assert set(int(c) for c in s0) <= {-1, 0, 1}

    def test_no_serializer_for_secret_key(self):
        import fedshield.ckks as ckks_pkg
        assert not any("secret" in name.lower() and "serial" in name.lower()
                       for name in dir(ckks_pkg))


class TestEncryptDecrypt:
    def test_roundtrip(self, small_params, small_keys, rng):
        sk, pk = small_keys
        for trial in range(5):
            vals = rng.uniform(-1, 1, small_params.slot_count)
            ct = enc(vals, small_params, pk, seed=100 + trial)
            out = decode(decrypt(ct, sk))
            assert np.max(np.abs(out - vals)) < TOL

    def test_deterministic_given_seed(self, small_params, small_keys, rng):
        _, pk = small_keys
        vals = rng.uniform(-1, 1, small_params.slot_count)
        ct1 = enc(vals, small_params, pk, seed=5)
        ct2 = enc(vals, small_params, pk, seed=5)
        assert np.array_equal(ct1.c0, ct2.c0)
        assert np.array_equal(ct1.c1, ct2.c1)

    def test_randomized_across_seeds(self, small_params, small_keys, rng):
        # same message, fresh randomness: nearly all residues change
        _, pk = small_keys
        vals = rng.uniform(-1, 1, small_params.slot_count)
        ct1 = enc(vals, small_params, pk, seed=1)
        ct2 = enc(vals, small_params, pk, seed=2)
        frac_same = np.mean(ct1.c0[0] == ct2.c0[0])
        assert frac_same < 0.01

    def test_wrong_key_yields_garbage(self, small_params, rng):
        sk_a, pk_a = keygen(small_params, seed=21)
        sk_b, _ = keygen(small_params, seed=22)
        for trial in range(10):
            vals = rng.uniform(-1, 1, small_params.slot_count)
            ct = enc(vals, small_params, pk_a, seed=trial)
            out = decode(decrypt(ct, sk_b))
            rms = float(np.sqrt(np.mean(out ** 2)))
            assert rms > 1.0

    def test_long_vector_through_packing(self, small_params, small_keys, rng):
        # 1000 entries through multiple ciphertexts
        sk, pk = small_keys
        vec = rng.uniform(-1, 1, 1000)
        chunks, desc = pack_tensors([vec], small_params.slot_count)
        assert len(chunks) == ciphertext_count(1000, small_params.slot_count)
        cts = [enc(c, small_params, pk, seed=i) for i, c in enumerate(chunks)]
        decoded = concat_chunks([decode(decrypt(ct, sk)) for ct in cts])
        (out,) = unpack_tensors(decoded, desc)
        assert np.max(np.abs(out - vec)) < TOL


class TestHomomorphicOps:
    def test_add_matches_plain_sum(self, small_params, small_keys, rng):
        sk, pk = small_keys
        for trial in range(10):
            a = rng.uniform(-1, 1, small_params.slot_count)
            b = rng.uniform(-1, 1, small_params.slot_count)
            ct = add(enc(a, small_params, pk, 2 * trial),
                     enc(b, small_params, pk, 2 * trial + 1))
            out = decode(decrypt(ct, sk))
            assert np.max(np.abs(out - (a + b))) < TOL

    def test_add_three(self, small_params, small_keys, rng):
        sk, pk = small_keys
        vs = [rng.uniform(-1, 1, small_params.slot_count) for _ in range(3)]
        ct = enc(vs[0], small_params, pk, 0)
        for i, v in enumerate(vs[1:], 1):
            ct = add(ct, enc(v, small_params, pk, i))
        out = decode(decrypt(ct, sk))
        assert np.max(np.abs(out - sum(vs))) < TOL

    def test_add_level_mismatch_raises(self, small_params, small_keys, rng):
        _, pk = small_keys
        vals = rng.uniform(-1, 1, small_params.slot_count)
        ct_full = enc(vals, small_params, pk, 0)
        ct_low = mul_plain_scalar(ct_full, 1.0)
        with pytest.raises(StateError):
            add(ct_full, ct_low)

    def test_add_scale_mismatch_raises(self, small_params, small_keys, rng):
        _, pk = small_keys
        vals = rng.uniform(-1, 1, small_params.slot_count)
        ct_a = enc(vals, small_params, pk, 0)
        pt = encode(vals, 2.0 ** 30, small_params)
        ct_b = encrypt(pt, pk, 1)
        with pytest.raises(StateError):
            add(ct_a, ct_b)

    def test_mul_scalar_identity(self, small_params, small_keys, rng):
        sk, pk = small_keys
        vals = rng.uniform(-1, 1, small_params.slot_count)
        ct = mul_plain_scalar(enc(vals, small_params, pk, 0), 1.0)
        assert ct.level == small_params.max_level - 1
        assert ct.scale == small_params.scale
        out = decode(decrypt(ct, sk))
        assert np.max(np.abs(out - vals)) < TOL

    def test_mul_scalar_matches_plain(self, small_params, small_keys, rng):
        sk, pk = small_keys
        for k in (1.0 / 3.0, 0.25, -0.7, 2.5):
            vals = rng.uniform(-1, 1, small_params.slot_count)
            out = decode(decrypt(mul_plain_scalar(
                enc(vals, small_params, pk, 3), k), sk))
            assert np.max(np.abs(out - k * vals)) < TOL

    def test_encrypted_mean_of_three(self, small_params, small_keys, rng):
        sk, pk = small_keys
        vs = [rng.uniform(-1, 1, small_params.slot_count) for _ in range(3)]
        acc = enc(vs[0], small_params, pk, 10)
        for i, v in enumerate(vs[1:], 11):
            acc = add(acc, enc(v, small_params, pk, i))
        mean_ct = mul_plain_scalar(acc, 1.0 / 3.0)
        out = decode(decrypt(mean_ct, sk))
        assert np.max(np.abs(out - np.mean(vs, axis=0))) < TOL

    def test_depth_exhaustion(self, small_params, small_keys, rng):
        # 3-modulus chain: two multiplies pass, the third dies
        _, pk = small_keys
        ct = enc(rng.uniform(-1, 1, 4), small_params, pk, 0)
        ct = mul_plain_scalar(ct, 0.5)
        ct = mul_plain_scalar(ct, 0.5)
        assert ct.level == 0
        with pytest.raises(DepthExhaustedError):
            mul_plain_scalar(ct, 0.5)

    def test_rescale_tracks_scale_and_level(self, small_params, small_keys,
                                            rng):
        _, pk = small_keys
        ct = enc(rng.uniform(-1, 1, 4), small_params, pk, 0)
        r = rescale(ct)
        assert r.level == ct.level - 1
        q_top = small_params.primes[ct.level]
        assert r.scale == pytest.approx(ct.scale / q_top)


class TestWireFormat:
    def test_roundtrip_bit_exact(self, small_params, small_keys, rng):
        _, pk = small_keys
        ct = enc(rng.uniform(-1, 1, small_params.slot_count), small_params,
                 pk, 9)
        back = deserialize_ct(serialize_ct(ct), small_params)
        assert np.array_equal(back.c0, ct.c0)
        assert np.array_equal(back.c1, ct.c1)
        assert back.scale == ct.scale and back.level == ct.level
        assert serialize_ct(back) == serialize_ct(ct)

    def test_roundtrip_after_rescale(self, small_params, small_keys, rng):
        _, pk = small_keys
        ct = mul_plain_scalar(
            enc(rng.uniform(-1, 1, 8), small_params, pk, 9), 0.5)
        back = deserialize_ct(serialize_ct(ct), small_params)
        assert back.level == ct.level
        assert np.array_equal(back.c0, ct.c0)

    def test_bad_magic(self, small_params, small_keys, rng):
        _, pk = small_keys
        blob = bytearray(serialize_ct(enc([1.0], small_params, pk, 0)))
        blob[:4] = b"NOPE"
        with pytest.raises(FormatError):
            deserialize_ct(bytes(blob), small_params)

    def test_truncated(self, small_params, small_keys):
        _, pk = small_keys
        blob = serialize_ct(enc([1.0], small_params, pk, 0))
        with pytest.raises(FormatError):
            deserialize_ct(blob[:-8], small_params)

    def test_cross_params_rejected(self, small_params, tiny_params,
                                   small_keys):
        _, pk = small_keys
        blob = serialize_ct(enc([1.0], small_params, pk, 0))
        with pytest.raises(FormatError):
            deserialize_ct(blob, tiny_params)


class TestPacking:
    def test_count_formula(self):
        assert ciphertext_count(30_000_000, 8192) == 3663
        assert ciphertext_count(0, 8192) == 0
        assert ciphertext_count(1, 8192) == 1
        assert ciphertext_count(8192, 8192) == 1
        assert ciphertext_count(8193, 8192) == 2

    def test_tensor_roundtrip(self, rng):
        tensors = [rng.normal(size=(7, 5)), rng.normal(size=(3,)),
                   rng.normal(size=(2, 2, 2))]
        chunks, desc = pack_tensors(tensors, slot_count=16)
        assert all(c.shape == (16,) for c in chunks)
        assert desc.n_chunks == ciphertext_count(7 * 5 + 3 + 8, 16)
        out = unpack_tensors(concat_chunks(chunks), desc)
        for a, b in zip(tensors, out):
            assert np.array_equal(a, b)

    def test_descriptor_json_roundtrip(self):
        _, desc = pack_tensors([np.zeros((4, 3))], 8)
        from fedshield.ckks import PackingDescriptor
        again = PackingDescriptor.from_json(desc.to_json())
        assert again == desc


class TestBenchParams:
    def test_deployment_chain_shape(self):
        p = bench_params()
        assert p.poly_degree == 16384
        assert p.modulus_bits == (60, 40, 40, 40, 60)
        assert p.slot_count == 8192


class TestNonstandardChains:
    def test_five_modulus_chain_depth(self, rng):
        params = CkksParams(poly_degree=64,
                            modulus_bits=(60, 40, 40, 40, 60))
        sk, pk = keygen(params, seed=3)
        vals = rng.uniform(-1, 1, 4)
        ct = enc(vals, params, pk, 0)
        for _ in range(4):
            ct = mul_plain_scalar(ct, 1.0)
        assert ct.level == 0
        with pytest.raises(DepthExhaustedError):
            mul_plain_scalar(ct, 1.0)
        out = decode(decrypt(ct, sk))
        assert np.max(np.abs(out[:4] - vals)) < TOL
