import random

import numpy as np
import pytest

from udrift.cipher import BLOCK, Blowfish, PacketCipher, derive_subkeys
from udrift.errors import KeyLengthError

# Classic published ECB vectors (Eric Young's set, reproduced in most
# independent implementations): (key, plaintext, ciphertext) hex.
ECB_VECTORS = [
    ("0000000000000000", "0000000000000000", "4EF997456198DD78"),
    ("FFFFFFFFFFFFFFFF", "FFFFFFFFFFFFFFFF", "51866FD5B85ECB8A"),
    ("3000000000000000", "1000000000000001", "7D856F9A613063F2"),
    ("1111111111111111", "1111111111111111", "2466DD878B963C9D"),
    ("0123456789ABCDEF", "1111111111111111", "61F9C3802281B096"),
    ("1111111111111111", "0123456789ABCDEF", "7D0CC630AFDA1EC7"),
    ("FEDCBA9876543210", "0123456789ABCDEF", "0ACEAB0FC6A0A28D"),
    ("7CA110454A1A6E57", "01A1D6D039776742", "59C68245EB05282B"),
    ("0131D9619DC1376E", "5CD54CA83DEF57DA", "B1B8CC0B250F09A0"),
    ("07A1133E4A0B2686", "0248D43806F67172", "1730E5778BEA1DA4"),
    ("3849674C2602319E", "51454B582DDF440A", "A25E7856CF2651EB"),
    ("04B915BA43FEB5B6", "42FD443059577FA2", "353882B109CE8F1A"),
    ("0113B970FD34F2CE", "059B5E0851CF143A", "48F4D0884C379918"),
    ("0170F175468FB5E6", "0756D8E0774761D2", "432193B78951FC98"),
    ("43297FAD38E373FE", "762514B829BF486A", "13F04154D69D1AE5"),
    ("07A7137045DA2A16", "3BDD119049372802", "2EEDDA93FFD39C79"),
    ("04689104C2FD3B2F", "26955F6835AF609A", "D887E0393C2DA6E3"),
    ("37D06BB516CB7546", "164D5E404F275232", "5F99D04F5B163969"),
    ("1F08260D1AC2465E", "6B056E18759F5CCA", "4A057A3B24D3977B"),
    ("584023641ABA6176", "004BD6EF09176062", "452031C1E4FADA8E"),
    ("025816164629B007", "480D39006EE762F2", "7555AE39F59B87BD"),
    ("49793EBC79B3258F", "437540C8698F3CFA", "53C55F9CB49FC019"),
    ("4FB05E1515AB73A7", "072D43A077075292", "7A8E7BFA937E89A3"),
    ("49E95D6D4CA229BF", "02FE55778117F12A", "CF9C5D7A4986ADB5"),
    ("018310DC409B26D6", "1D9D5C5018F728C2", "D1ABB290658BC778"),
    ("1C587F1C13924FEF", "305532286D6F295A", "55CB3774D13EF201"),
    ("0101010101010101", "0123456789ABCDEF", "FA34EC4847B268B2"),
    ("1F1F1F1F0E0E0E0E", "0123456789ABCDEF", "A790795108EA3CAE"),
    ("E0FEE0FEF1FEF1FE", "0123456789ABCDEF", "C39E072D9FAC631D"),
    ("0000000000000000", "FFFFFFFFFFFFFFFF", "014933E0CDAFF6E4"),
    ("FFFFFFFFFFFFFFFF", "0000000000000000", "F21E9A77B71C49BC"),
    ("0123456789ABCDEF", "0000000000000000", "245946885754369A"),
    ("FEDCBA9876543210", "FFFFFFFFFFFFFFFF", "6B5C5A9C5D9E0A5A"),
]


def _reference_ecb():
    """Independent implementation from the cryptography package, if present."""
    try:
        from cryptography.hazmat.decrepit.ciphers.algorithms import Blowfish as Alg
    except ImportError:
        try:
            from cryptography.hazmat.primitives.ciphers.algorithms import Blowfish as Alg
        except ImportError:
            return None
    from cryptography.hazmat.primitives.ciphers import Cipher, modes

    def encrypt(key, block):
        enc = Cipher(Alg(key), modes.ECB()).encryptor()
        return enc.update(block) + enc.finalize()

    return encrypt


@pytest.mark.parametrize("key,plain,cipher", ECB_VECTORS)
def test_published_ecb_vectors(key, plain, cipher):
    bf = Blowfish(bytes.fromhex(key))
    assert bf.encrypt_block(bytes.fromhex(plain)).hex().upper() == cipher


@pytest.mark.parametrize("key,plain,cipher", ECB_VECTORS[:8])
def test_decrypt_inverts_encrypt(key, plain, cipher):
    bf = Blowfish(bytes.fromhex(key))
    assert bf.decrypt_block(bytes.fromhex(cipher)) == bytes.fromhex(plain)


def test_matches_independent_library():
    ref = _reference_ecb()
    if ref is None:
        pytest.skip("cryptography package has no Blowfish")
    rng = random.Random(0xBF)
    for length in (4, 5, 8, 16, 24, 37, 56):
        key = bytes(rng.randrange(256) for _ in range(length))
        block = bytes(rng.randrange(256) for _ in range(8))
        assert Blowfish(key).encrypt_block(block) == ref(key, block)


@pytest.mark.parametrize("length", [0, 1, 3, 57, 64])
def test_key_length_bounds(length):
    with pytest.raises(KeyLengthError):
        derive_subkeys(b"k" * length)


def test_key_schedule_deterministic():
    a = Blowfish(b"same key bytes")
    b = Blowfish(b"same key bytes")
    assert a.encrypt_block(b"01234567") == b.encrypt_block(b"01234567")


def test_vectorized_counters_match_scalar_blocks():
    rng = random.Random(17)
    bf = Blowfish(bytes(rng.randrange(256) for _ in range(16)))
    counters = np.array([rng.randrange(1 << 64) for _ in range(64)], dtype=np.uint64)
    stream = bf.encrypt_counters(counters)
    for i, c in enumerate(counters):
        block = int(c).to_bytes(8, "big")
        assert stream[8 * i:8 * (i + 1)] == bf.encrypt_block(block)


def _packet_cipher(seed=3):
    rng = random.Random(seed)
    key = bytes(rng.randrange(256) for _ in range(16))
    iv = bytes(rng.randrange(256) for _ in range(8))
    return PacketCipher(Blowfish(key), iv)


def test_keystream_block_deterministic_and_counter_sensitive():
    pc = _packet_cipher()
    assert pc.keystream_block(12345) == pc.keystream_block(12345)
    assert pc.keystream_block(12345) != pc.keystream_block(12346)


def test_keystream_block_is_ecb_of_iv_xor_counter():
    rng = random.Random(9)
    key = bytes(rng.randrange(256) for _ in range(16))
    iv = bytes(rng.randrange(256) for _ in range(8))
    bf = Blowfish(key)
    pc = PacketCipher(bf, iv)
    c = 0x0102030405060708
    block = (int.from_bytes(iv, "big") ^ c).to_bytes(8, "big")
    assert pc.keystream_block(c) == bf.encrypt_block(block)


def test_seal_empty_payload():
    pc = _packet_cipher()
    assert pc.seal(0, b"") == b""


def test_seal_open_roundtrip_all_lengths():
    pc = _packet_cipher()
    rng = random.Random(11)
    blob = bytes(rng.randrange(256) for _ in range(1456))
    for length in range(0, 1457):
        data = blob[:length]
        sealed = pc.seal(length, data)
        assert len(sealed) == length
        assert pc.open(length, sealed) == data


def test_seal_uses_packet_sequence():
    pc = _packet_cipher()
    data = bytes(64)
    assert pc.seal(1, data) != pc.seal(2, data)
    # keystream positions match the documented counter layout
    first = pc.seal(41, data)[:BLOCK]
    expect = bytes(b ^ k for b, k in zip(data[:BLOCK], pc.keystream_block(41 * 256)))
    assert first == expect


def test_seal_stable_across_calls():
    pc = _packet_cipher()
    data = b"retransmitted payload" * 10
    assert pc.seal(99, data) == pc.seal(99, data)
