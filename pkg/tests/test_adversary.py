import numpy as np
import pytest

from manetids.adversary import DROP, PASS
from manetids.aodv import Data, Rerr, Rreq
from manetids.config import AttackKind, SimConfig
from manetids.sim.engine import Simulator, run_until
from manetids.sim.kernels import RERR_RECV, RERR_SENT, RREP_SENT, RREQ_RECV, RREQ_SENT

from conftest import static_sim


def total(sim, counter):
    return sim.counts[:, :, counter].sum(axis=0)


def attacked_line(kind, seed=0, **kw):
    """Three nodes in a line with the single attacker in the middle.

    Returns (sim, left, attacker, right).
    """
    probe = static_sim(np.zeros((3, 2)), attack_kind=kind, malicious_count=1, rng_seed=seed, **kw)
    m = probe.malicious_ids[0]
    left, right = [i for i in range(3) if i != m]
    pos = np.zeros((3, 2))
    pos[left] = (0, 0)
    pos[m] = (200, 0)
    pos[right] = (400, 0)
    sim = static_sim(pos, attack_kind=kind, malicious_count=1, rng_seed=seed, **kw)
    assert sim.malicious_ids == (m,)
    return sim, left, m, right


def mobile(kind, count, duration, dt, traffic=True, seed=1, pause=0):
    cfg = SimConfig(attack_kind=kind, malicious_count=count, duration=duration,
                    sampling_interval=dt, pause_time=pause, rng_seed=seed)
    sim = Simulator(cfg, traffic=traffic)
    sim.run()
    return sim


# -- assignment ---------------------------------------------------------------

def test_malicious_ids_are_distinct_and_sized():
    cfg = SimConfig(attack_kind=AttackKind.FLOODING, malicious_count=25, duration=10,
                    sampling_interval=5, rng_seed=4)
    sim = Simulator(cfg)
    ids = sim.malicious_ids
    assert len(ids) == 25 == len(set(ids))
    assert all(0 <= i < 50 for i in ids)


def test_assignment_depends_on_seed():
    make = lambda s: Simulator(SimConfig(attack_kind=AttackKind.DROPPING, malicious_count=5,
                                         duration=10, sampling_interval=5, rng_seed=s)).malicious_ids
    assert make(3) == make(3)
    assert make(3) != make(4)


def test_forging_victims_are_legitimate():
    cfg = SimConfig(attack_kind=AttackKind.FORGING, malicious_count=15, duration=10,
                    sampling_interval=5, rng_seed=2)
    adv = Simulator(cfg).adversary
    assert set(adv.victims) == set(adv.malicious_ids)
    assert not any(adv.is_malicious[v] for v in adv.victims.values())


def test_no_attack_means_no_adversary():
    sim = mobile(AttackKind.NONE, 0, 30, 10)
    assert sim.adversary is None
    assert sim.malicious_ids == ()
    assert sim.counter_log().stats["injected"].sum() == 0


# -- injection rates ----------------------------------------------------------

@pytest.mark.parametrize("kind,counter", [(AttackKind.FLOODING, RREQ_SENT),
                                          (AttackKind.FORGING, RERR_SENT)])
def test_ten_per_second_for_whole_run(kind, counter):
    sim = mobile(kind, 1, 700, 1, traffic=False)
    m = sim.malicious_ids[0]
    per_second = sim.counts[:, m, counter]
    assert per_second.tolist() == [10] * 700
    assert per_second.sum() == 7000
    assert sim.adversary.injected[m] == 7000


def test_no_ticks_before_first_period():
    sim, _, m, _ = attacked_line(AttackKind.FLOODING, duration=1.0, dt=1.0)
    run_until(sim, 0.09)
    assert sim.adversary.injected[m] == 0
    run_until(sim, 0.1)
    assert sim.adversary.injected[m] == 1


def test_flooding_destinations_vary_and_exclude_self():
    cfg = SimConfig(attack_kind=AttackKind.FLOODING, malicious_count=1, duration=10,
                    sampling_interval=5, rng_seed=9)
    sim = Simulator(cfg, traffic=False)
    m = sim.malicious_ids[0]
    dests = [sim.adversary.flooding_tick(m, 0.0).destination for _ in range(500)]
    assert m not in dests
    assert len(set(dests)) == 49


def test_flooded_requests_are_destination_only():
    sim, _, m, _ = attacked_line(AttackKind.FLOODING)
    rreq = sim.adversary.flooding_tick(m, 0.0)
    assert rreq.dest_only and rreq.source == m


# -- forging ------------------------------------------------------------------

def test_forged_rerr_inflates_sequence():
    sim, left, m, right = attacked_line(AttackKind.FORGING)
    adv = sim.adversary
    victim = adv.victims[m]
    sim.aodv.routes.seq[m, victim] = 6
    rerr = adv.forging_tick(m, victim, 0.0)
    assert rerr.unreachable == ((victim, 7),)
    assert total(sim, RERR_SENT)[m] == 1


def test_forged_rerr_tears_down_route_through_attacker():
    sim, left, m, right = attacked_line(AttackKind.FORGING)
    victim = sim.adversary.victims[m]
    other = left if victim == right else right
    sim.aodv.routes.install(other, victim, m, 2, 3, 0.0, 10.0)
    sim.adversary.forging_tick(m, victim, 0.0)
    run_until(sim, 0.01)
    assert not sim.aodv.routes.valid(other, victim, 0.01)
    assert total(sim, RERR_RECV)[other] == 1
    # the victim hears it too but has no route to itself
    assert total(sim, RERR_RECV)[victim] == 1
    assert sim.aodv.routes.entry(victim, victim) is None


# -- dropping -----------------------------------------------------------------

def test_dropping_filter_scope():
    sim, left, m, _ = attacked_line(AttackKind.DROPPING)
    adv = sim.adversary
    assert adv.dropping_filter(m, Rerr(((0, 1),), left)) == DROP
    assert adv.dropping_filter(m, Data(left, 2, 64, [left])) == PASS
    assert adv.dropping_filter(m, Rreq(1, left, 2, 0, 1)) == PASS
    assert adv.dropping_filter(left, Rerr(((0, 1),), m)) == PASS


def test_dropper_hears_but_ignores_rerr():
    sim, left, m, right = attacked_line(AttackKind.DROPPING)
    aodv = sim.aodv
    aodv.routes.install(m, right, right, 1, 1, 0.0, 10.0)
    aodv.routes.install(left, right, m, 2, 1, 0.0, 10.0)
    aodv.routes.used[m, right] = 0.0
    aodv.handle_rerr(m, Rerr(((right, 2),), right), right, 0.0)
    run_until(sim, 0.5)
    assert total(sim, RERR_RECV)[m] == 1
    assert aodv.routes.valid(m, right, 0.5)
    assert aodv.rerr_propagated[m] == 0
    assert total(sim, RERR_RECV)[left] == 0


def test_dropper_forwards_data():
    sim, left, m, right = attacked_line(AttackKind.DROPPING)
    pkt = Data(left, right, 256, [left])
    sim.aodv.forward_data(left, pkt, 0.0)
    run_until(sim, 1.0)
    assert pkt.path == [left, m, right]
    assert sim.aodv.data_forwarded[m] == 1


def test_dropping_nodes_never_propagate_over_a_run():
    sim = mobile(AttackKind.DROPPING, 15, 120, 10, seed=5)
    ids = list(sim.malicious_ids)
    assert sim.counts[:, ids, RERR_RECV].sum() > 0
    assert sim.aodv.rerr_propagated[ids].sum() == 0
    assert sim.aodv.rerr_propagated.sum() > 0


# -- black hole -----------------------------------------------------------------

def test_blackhole_answers_and_swallows_rreq():
    sim, left, m, right = attacked_line(AttackKind.BLACKHOLE)
    sim.aodv.originate_rreq(left, right, 0.0)
    run_until(sim, 1.0)
    assert total(sim, RREQ_SENT)[m] == 0
    assert total(sim, RREQ_RECV)[right] == 0
    assert total(sim, RREP_SENT)[m] == 1
    e = sim.aodv.routes.entry(left, right)
    assert e.next_hop == m and e.hop_count == 2


def test_spurious_reply_fields():
    sim, left, m, right = attacked_line(AttackKind.BLACKHOLE)
    rrep = sim.adversary.blackhole_reply(m, Rreq(1, left, right, 4, 1), left, 0.0)
    assert (rrep.hop_count, rrep.dest_seq, rrep.destination, rrep.origin) == (1, 5, right, m)


def test_blackhole_drops_transit_data():
    sim, left, m, right = attacked_line(AttackKind.BLACKHOLE)
    for _ in range(3):
        sim.aodv.forward_data(left, Data(left, right, 256, [left]), 0.0)
    run_until(sim, 2.0)
    assert sim.aodv.data_forwarded[m] == 0
    assert sim.aodv.data_delivered[right] == 0


def test_blackhole_consumes_own_data():
    sim, left, m, _ = attacked_line(AttackKind.BLACKHOLE)
    sim.aodv.forward_data(left, Data(left, m, 256, [left]), 0.0)
    run_until(sim, 1.0)
    assert sim.aodv.data_delivered[m] == 1


def test_blackholes_never_forward_over_a_run():
    sim = mobile(AttackKind.BLACKHOLE, 15, 120, 10, seed=6)
    ids = list(sim.malicious_ids)
    assert sim.counts[:, ids, RREP_SENT].sum() > 0
    assert sim.aodv.data_forwarded[ids].sum() == 0
