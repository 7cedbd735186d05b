import hashlib

from distortlab.seeding import derive_rng, derive_seed


def test_derive_seed_is_documented_hash():
    digest = hashlib.blake2b(b"7:attack:1:2", digest_size=8).digest()
    assert derive_seed(7, "attack", 1, 2) == int.from_bytes(digest, "little")


def test_streams_are_independent_of_call_order():
    a = derive_rng(1, "x", 0).random(3)
    derive_rng(1, "y", 0).random(100)
    assert (derive_rng(1, "x", 0).random(3) == a).all()
    assert derive_seed(1, "x", 0) != derive_seed(1, "x", 1)
    assert derive_seed(1, "x", 0) != derive_seed(2, "x", 0)
