import math

import pytest

from hamster import perf
from hamster.perf import PerfParams

# n=9, k=5, m=1000 bytes (1000 symbols of 8 bits), B=1e6 B/s, prop 10 ms,
# t_f=1e-8, t_hash=1e-6, t_sig=2e-5, t_ver=4e-5; sums expanded by hand
VECTOR = dict(n=9, k=5, m=1000, B=1e6, delta_p=0.01, t_f=1e-8, t_hash=1e-6, t_sig=2e-5, t_ver=4e-5)
HAND_HAMSTER = {"propose": 0.012088, "repropose": 0.013969, "vote": 0.010488}
HAND_SYNC = {"propose": 0.019069, "vote": 0.0193845}


def test_hamster_terms_match_hand_sums():
    b = perf.t_hamster(PerfParams(**VECTOR))
    for key, value in HAND_HAMSTER.items():
        assert b.terms[key] == pytest.approx(value, rel=1e-12)
    assert b.exact == pytest.approx(0.036545, rel=1e-12)


def test_sync_terms_match_hand_sums():
    b = perf.t_sync(PerfParams(**VECTOR))
    for key, value in HAND_SYNC.items():
        assert b.terms[key] == pytest.approx(value, rel=1e-12)
    assert b.exact == pytest.approx(0.0384535, rel=1e-12)


def test_follow_commit_uses_full_cost_and_flags_difference():
    b = perf.t_follow(PerfParams(**VECTOR))
    assert b.terms["follow_commit"] == pytest.approx(9 * 4.1e-5 + 200 * 25 * 1e-8)
    assert b.notes and "differs" in b.notes[0]
    clean = perf.t_follow(PerfParams(n=9, k=5, m=1000))
    assert clean.notes == ()


def test_throughput_and_latency():
    p = PerfParams(**VECTOR, c=32)
    assert perf.throughput("hamster", p) == pytest.approx(1000 / (32 * 0.036545))
    assert perf.throughput("hamster", p, with_follow=True) == pytest.approx(1000 / (32 * 0.036545) / 2)
    assert perf.latency("sync-hotstuff", p) == pytest.approx(0.0384535 + 4 * 0.01)
    assert perf.latency("hamster", PerfParams(**VECTOR, t_req=0.1, t_res=0.2)) == pytest.approx(0.036545 + 0.02 + 0.3)


def test_propagation_limit_gain_is_two_thirds():
    p = PerfParams(n=9, k=5, m=1000, delta_p=0.05)
    assert perf.gain(p) == pytest.approx(2 / 3)
    assert perf.gain(p, exact=False) == pytest.approx(2 / 3)


@pytest.mark.parametrize("n", [9, 17, 65])
def test_transmission_limit_gain_is_two_k_over_three(n):
    k = (n + 1) // 2
    p = PerfParams(n=n, k=k, m=1e6, B=1e6)
    assert perf.gain(p) == pytest.approx(2 * k / 3)


def test_gain_rises_with_block_size():
    gains = [perf.gain(PerfParams(n=9, k=5, m=m, B=1e7, delta_p=0.0075)) for m in (77, 10**3, 10**5, 10**7)]
    assert gains == sorted(gains)
    assert gains[0] < 0.7 and gains[-1] > 3.3


def test_unbounded_bandwidth_and_zero_time():
    p = PerfParams(n=3, k=2, m=100)
    assert p.tx == 0.0
    assert math.isinf(perf.throughput("hamster", p))


def test_parameter_validation():
    with pytest.raises(ValueError):
        PerfParams(n=3, k=4, m=1)
    with pytest.raises(ValueError):
        PerfParams(n=3, k=2, m=-1)
    with pytest.raises(ValueError):
        PerfParams(n=3, k=2, m=1, l=0)
