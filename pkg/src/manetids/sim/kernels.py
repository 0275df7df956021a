"""Array kernels for the hot paths of the simulator.

Written in the nopython subset so numba can compile them; without numba
they run as ordinary Python.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

RREQ_SENT, RREQ_RECV, RREP_SENT, RERR_SENT, RERR_RECV = range(5)

REPLY_DEST, REPLY_INTERMEDIATE, REPLY_SPURIOUS = 0, 1, 2


@njit(cache=True)
def better_route(old_next, old_hops, old_seq, old_valid, new_hops, new_seq):
    """Route preference: fresher sequence, then fewer hops, else keep the incumbent."""
    if old_next < 0:
        return True
    if new_seq > old_seq:
        return True
    if new_seq == old_seq:
        if not old_valid:
            return True
        return new_hops < old_hops
    return False


@njit(cache=True)
def install_route(nh, hops, seq, exp, node, dest, next_hop, new_hops, new_seq, now, lifetime):
    """Apply the preference rule; returns True when the entry was written or refreshed."""
    valid = nh[node, dest] >= 0 and exp[node, dest] > now
    if better_route(nh[node, dest], hops[node, dest], seq[node, dest], valid, new_hops, new_seq):
        nh[node, dest] = next_hop
        hops[node, dest] = new_hops
        seq[node, dest] = new_seq
        exp[node, dest] = now + lifetime
        return True
    if (valid and nh[node, dest] == next_hop and hops[node, dest] == new_hops
            and seq[node, dest] == new_seq):
        exp[node, dest] = max(exp[node, dest], now + lifetime)
        return True
    return False


@njit(cache=True)
def positions_at(seg, now, side):
    """Node positions from (ox, oy, vx, vy, t0, t1) segment rows."""
    n = seg.shape[0]
    pos = np.empty((n, 2))
    for i in range(n):
        t = now if now < seg[i, 5] else seg[i, 5]
        dt = t - seg[i, 4]
        x = seg[i, 0] + seg[i, 2] * dt
        y = seg[i, 1] + seg[i, 3] * dt
        pos[i, 0] = min(max(x, 0.0), side)
        pos[i, 1] = min(max(y, 0.0), side)
    return pos


@njit(cache=True)
def receivers_csr(pos, senders, range2):
    """In-range receivers of each sender (sender excluded), as CSR arrays."""
    n = pos.shape[0]
    k = senders.shape[0]
    ptr = np.zeros(k + 1, dtype=np.int64)
    idx = np.empty(k * n, dtype=np.int64)
    m = 0
    for a in range(k):
        s = senders[a]
        sx = pos[s, 0]
        sy = pos[s, 1]
        for r in range(n):
            if r == s:
                continue
            dx = pos[r, 0] - sx
            dy = pos[r, 1] - sy
            if dx * dx + dy * dy <= range2:
                idx[m] = r
                m += 1
        ptr[a + 1] = m
    return ptr, idx[:m]


@njit(cache=True)
def rreq_wave(senders, ptr, idx, seen, source, source_seq, dest, dest_seq, dest_only,
              hop_count, now, lifetime, blackhole, nh, hops, seq, exp, counts, heard):
    """Deliver one RREQ wave: every sender broadcast the same request at once.

    ``counts`` is the (node, counter) block and ``heard`` the (node, node)
    block of the current interval. Returns the nodes that rebroadcast and
    the replies to send as (replier, previous hop, reply kind).
    """
    n = nh.shape[0]
    rebroadcast = np.empty(n, dtype=np.int64)
    repliers = np.empty(n, dtype=np.int64)
    reply_to = np.empty(n, dtype=np.int64)
    reply_kind = np.empty(n, dtype=np.int64)
    nr = 0
    nb = 0
    for a in range(senders.shape[0]):
        s = senders[a]
        for j in range(ptr[a], ptr[a + 1]):
            r = idx[j]
            counts[r, RREQ_RECV] += 1
            heard[r, s] = True
            if seen[r]:
                continue
            seen[r] = True
            if blackhole[r]:
                repliers[nb] = r
                reply_to[nb] = s
                reply_kind[nb] = REPLY_SPURIOUS
                nb += 1
                continue
            install_route(nh, hops, seq, exp, r, source, s, hop_count + 1, source_seq,
                          now, lifetime)
            if r == dest:
                repliers[nb] = r
                reply_to[nb] = s
                reply_kind[nb] = REPLY_DEST
                nb += 1
            elif (not dest_only and nh[r, dest] >= 0 and exp[r, dest] > now
                    and seq[r, dest] >= dest_seq):
                repliers[nb] = r
                reply_to[nb] = s
                reply_kind[nb] = REPLY_INTERMEDIATE
                nb += 1
            else:
                rebroadcast[nr] = r
                nr += 1
    return rebroadcast[:nr], repliers[:nb], reply_to[:nb], reply_kind[:nb]


@njit(cache=True)
def rreq_flood(senders, ptr, idx, seen, source, source_seq, dest, dest_seq, dest_only,
               hop_count, now, stop_time, delay, lifetime, range2, side, seg, blackhole,
               nh, hops, seq, exp, counts, heard):
    """Deliver the wave arriving at ``now`` and keep flooding while nothing else is due.

    After each delivery the rebroadcasting nodes transmit immediately; the
    next wave is delivered in the same call only if it arrives strictly
    before ``stop_time`` and the current wave produced no replies. Returns
    (pending senders, ptr, idx, their hop count, time of the last delivered
    wave, repliers, reply_to, reply_kind, receptions delivered, receptions
    scheduled).
    """
    delivered = 0
    scheduled = 0
    while True:
        delivered += idx.shape[0]
        rebroadcast, repliers, reply_to, reply_kind = rreq_wave(
            senders, ptr, idx, seen, source, source_seq, dest, dest_seq, dest_only,
            hop_count, now, lifetime, blackhole, nh, hops, seq, exp, counts, heard)
        hop_count += 1
        if rebroadcast.shape[0] == 0:
            senders = rebroadcast
            ptr = np.zeros(1, dtype=np.int64)
            idx = np.empty(0, dtype=np.int64)
            break
        for a in range(rebroadcast.shape[0]):
            counts[rebroadcast[a], RREQ_SENT] += 1
        senders = rebroadcast
        ptr, idx = receivers_csr(positions_at(seg, now, side), senders, range2)
        scheduled += idx.shape[0]
        if idx.shape[0] == 0 or repliers.shape[0] > 0 or not now + delay < stop_time:
            break
        now = now + delay
    return (senders, ptr, idx, hop_count, now, repliers, reply_to, reply_kind,
            delivered, scheduled)
