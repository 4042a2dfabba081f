import pytest

from hamster.crypto import CryptoEnv, InsufficientVotesError, Signature, UnknownNodeError, hash_bytes, leader_of

DIGEST = hash_bytes(b"message")


@pytest.mark.parametrize("scheme", ["hmac", "ed25519"])
def test_sign_verify(scheme):
    env = CryptoEnv(4, seed=1, scheme=scheme)
    sig = env.sign(2, DIGEST)
    assert env.verify_sig(2, DIGEST, sig)
    assert not env.verify_sig(1, DIGEST, sig)
    assert not env.verify_sig(2, hash_bytes(b"other"), sig)
    assert not env.verify_sig(2, DIGEST, Signature(2, bytes(len(sig.data))))


def test_deterministic_keys_per_seed():
    assert CryptoEnv(3, seed=5).sign(0, DIGEST) == CryptoEnv(3, seed=5).sign(0, DIGEST)
    assert CryptoEnv(3, seed=5).sign(0, DIGEST) != CryptoEnv(3, seed=6).sign(0, DIGEST)


def test_quorum():
    env = CryptoEnv(5)
    votes = [(i, env.sign(i, DIGEST)) for i in (3, 1, 1, 4)]
    q = env.assemble_quorum(votes, 3)
    assert q.signers == (1, 3, 4)
    assert env.verify_quorum(q, DIGEST, 3)
    assert not env.verify_quorum(q, DIGEST, 4)
    assert not env.verify_quorum(q, hash_bytes(b"x"), 3)
    assert q.wire_size() == len(q.encode())
    with pytest.raises(InsufficientVotesError):
        env.assemble_quorum(votes, 4)


def test_unknown_node_and_scheme():
    env = CryptoEnv(2)
    with pytest.raises(UnknownNodeError):
        env.sign(2, DIGEST)
    with pytest.raises(ValueError):
        CryptoEnv(2, scheme="rsa")


def test_round_robin_leader():
    assert [leader_of(v, 3) for v in range(5)] == [0, 1, 2, 0, 1]
