# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled event loop.

Mirrors ``netmodel.ReferenceSim`` event for event: identical (time, seq)
ordering and identical floating-point expression order, so both backends
produce bit-identical packet logs.
"""

import numpy as np
from voipqos.engine import InvariantViolation
cimport numpy as cnp
from libc.stdlib cimport malloc, realloc, free

cnp.import_array()

cdef enum:
    NTOS = 8

cdef enum:
    EV_GEN = 0
    EV_ARRIVAL = 1
    EV_TXDONE = 2

cdef enum:
    K_UNBOUNDED = 0
    K_FIFO = 1
    K_PQ = 2
    K_WFQ = 3

cdef struct Ev:
    double t
    long long seq
    int kind
    int a
    long long b


cdef inline bint ev_less(Ev* x, Ev* y) nogil:
    return x.t < y.t or (x.t == y.t and x.seq < y.seq)


cdef class _Kernel:
    cdef Ev* heap
    cdef Py_ssize_t hn, hcap
    cdef long long seq
    cdef double clock
    cdef long long dispatched

    # ports
    cdef int n_ports
    cdef int[::1] kind, nq, peer, busy
    cdef double[::1] rate, prop, rate_Bps, vtime, last_update
    cdef long long[::1] current, buffered, eseq
    cdef long long[::1] cap, qhead, qtail, qcount
    cdef int[::1] cls
    cdef double[::1] weight, last_finish

    # topology
    cdef int[:, ::1] route
    cdef double[::1] node_delay

    # sources
    cdef int[::1] src_node, src_dst, src_tos
    cdef long long[::1] src_size, offs
    cdef double[::1] sched

    # packets
    cdef long long npk
    cdef int[::1] pk_src
    cdef double[::1] pk_created, pk_fate_time, pk_tag
    cdef signed char[::1] pk_fate
    cdef long long[::1] pk_next, pk_eseq

    def __cinit__(self):
        self.heap = NULL

    def __dealloc__(self):
        if self.heap != NULL:
            free(self.heap)

    cdef int push(self, double t, int kind, int a, long long b) except -1:
        cdef Py_ssize_t i, parent
        cdef Ev e
        cdef Ev* grown
        if self.hn == self.hcap:
            self.hcap = self.hcap * 2 if self.hcap else 1024
            grown = <Ev*> realloc(self.heap, self.hcap * sizeof(Ev))
            if grown == NULL:
                raise MemoryError()
            self.heap = grown
        e.t = t
        e.seq = self.seq
        e.kind = kind
        e.a = a
        e.b = b
        self.seq += 1
        i = self.hn
        self.hn += 1
        while i > 0:
            parent = (i - 1) >> 1
            if ev_less(&e, &self.heap[parent]):
                self.heap[i] = self.heap[parent]
                i = parent
            else:
                break
        self.heap[i] = e
        return 0

    cdef Ev pop(self):
        cdef Ev top = self.heap[0]
        cdef Ev last
        cdef Py_ssize_t i = 0, child, n
        self.hn -= 1
        n = self.hn
        if n > 0:
            last = self.heap[n]
            while True:
                child = 2 * i + 1
                if child >= n:
                    break
                if child + 1 < n and ev_less(&self.heap[child + 1], &self.heap[child]):
                    child += 1
                if ev_less(&self.heap[child], &last):
                    self.heap[i] = self.heap[child]
                    i = child
                else:
                    break
            self.heap[i] = last
        return top

    # --- WFQ virtual clock ---------------------------------------------------------

    cdef void advance(self, int p, double now):
        cdef double t = self.last_update[p]
        cdef double wsum, fmin, f, dt
        cdef bint active
        cdef int q, base = p * NTOS, n = self.nq[p]
        if now > t:
            while True:
                active = False
                wsum = 0.0
                fmin = 0.0
                for q in range(n):
                    f = self.last_finish[base + q]
                    if f > self.vtime[p]:
                        if not active or f < fmin:
                            fmin = f
                        active = True
                        wsum = wsum + self.weight[base + q]
                if not active:
                    break
                dt = (fmin - self.vtime[p]) * wsum / self.rate_Bps[p]
                if t + dt <= now:
                    t = t + dt
                    self.vtime[p] = fmin
                else:
                    self.vtime[p] = self.vtime[p] + (now - t) * self.rate_Bps[p] / wsum
                    break
            self.last_update[p] = now

    # --- qdisc ---------------------------------------------------------------------

    cdef bint enqueue(self, int p, long long pid, double now):
        cdef int k = self.kind[p]
        cdef int base = p * NTOS
        cdef int q = 0, i
        cdef bint idle
        cdef double start, tag
        cdef long long c
        if k == K_WFQ:
            self.advance(p, now)
            if self.buffered[p] == 0:
                idle = True
                for i in range(self.nq[p]):
                    if self.last_finish[base + i] > self.vtime[p]:
                        idle = False
                        break
                if idle:
                    self.vtime[p] = 0.0
                    for i in range(self.nq[p]):
                        self.last_finish[base + i] = 0.0
        if k == K_PQ or k == K_WFQ:
            q = self.cls[base + self.src_tos[self.pk_src[pid]]]
        c = self.cap[base + q]
        if c >= 0 and self.qcount[base + q] >= c:
            return False
        if k == K_WFQ:
            start = self.vtime[p] if self.vtime[p] > self.last_finish[base + q] else self.last_finish[base + q]
            tag = start + <double> self.src_size[self.pk_src[pid]] / self.weight[base + q]
            self.last_finish[base + q] = tag
            self.pk_tag[pid] = tag
            self.pk_eseq[pid] = self.eseq[p]
            self.eseq[p] += 1
        self.pk_next[pid] = -1
        if self.qcount[base + q] == 0:
            self.qhead[base + q] = pid
        else:
            self.pk_next[self.qtail[base + q]] = pid
        self.qtail[base + q] = pid
        self.qcount[base + q] += 1
        self.buffered[p] += 1
        return True

    cdef long long dequeue(self, int p, double now):
        cdef int k = self.kind[p]
        cdef int base = p * NTOS
        cdef int q, best = -1
        cdef long long h, bh = -1
        if self.buffered[p] == 0:
            return -1
        if k == K_WFQ:
            self.advance(p, now)
            for q in range(self.nq[p]):
                if self.qcount[base + q]:
                    h = self.qhead[base + q]
                    if best < 0 or self.pk_tag[h] < self.pk_tag[bh] or (
                            self.pk_tag[h] == self.pk_tag[bh] and self.pk_eseq[h] < self.pk_eseq[bh]):
                        best = q
                        bh = h
        else:
            for q in range(self.nq[p]):
                if self.qcount[base + q]:
                    best = q
                    bh = self.qhead[base + q]
                    break
        self.qhead[base + best] = self.pk_next[bh]
        self.qcount[base + best] -= 1
        self.buffered[p] -= 1
        return bh

    # --- movement -------------------------------------------------------------------

    cdef int start_tx(self, int p, double now) except -1:
        cdef long long pid = self.dequeue(p, now)
        if pid < 0:
            self.busy[p] = 0
            self.current[p] = -1
            return 0
        self.busy[p] = 1
        self.current[p] = pid
        self.push(now + <double> (self.src_size[self.pk_src[pid]] * 8) / self.rate[p], EV_TXDONE, p, 0)
        return 0

    cdef int forward(self, int node, long long pid, double now) except -1:
        cdef int s = self.pk_src[pid]
        cdef int dst = self.src_dst[s]
        cdef int p
        if node == dst:
            if self.pk_fate[pid] != 0:
                raise InvariantViolation(f"packet {pid} delivered twice or after a drop")
            self.pk_fate[pid] = 1
            self.pk_fate_time[pid] = now
            return 0
        p = self.route[node, dst]
        if p < 0:
            raise InvariantViolation(f"no route from node {node} to {dst}")
        if not self.enqueue(p, pid, now):
            self.pk_fate[pid] = 2
            self.pk_fate_time[pid] = now
            return 0
        if not self.busy[p]:
            self.start_tx(p, now)
        return 0

    cdef int run(self, double end) except -1:
        cdef Ev ev
        cdef int s, p
        cdef long long pid, nxt
        while self.hn > 0 and self.heap[0].t <= end:
            ev = self.pop()
            self.clock = ev.t
            self.dispatched += 1
            if ev.kind == EV_GEN:
                s = ev.a
                pid = self.npk
                self.npk += 1
                self.pk_src[pid] = s
                self.pk_created[pid] = ev.t
                nxt = self.offs[s] + ev.b + 1
                if nxt < self.offs[s + 1]:
                    self.push(self.sched[nxt], EV_GEN, s, ev.b + 1)
                self.forward(self.src_node[s], pid, ev.t)
            elif ev.kind == EV_ARRIVAL:
                self.forward(ev.a, ev.b, ev.t)
            else:
                p = ev.a
                pid = self.current[p]
                self.push(ev.t + self.prop[p] + self.node_delay[self.peer[p]], EV_ARRIVAL, self.peer[p], pid)
                self.start_tx(p, ev.t)
        self.clock = end
        return 0


def simulate(inp):
    """Run a ``netmodel.SimInput``; returns ``(source, created, fate, fate_time, n_events)``."""
    cdef _Kernel k = _Kernel()
    cdef int s
    net = inp.network
    n_ports = net.n_ports
    npk = inp.n_packets
    k.n_ports = n_ports
    k.kind = np.ascontiguousarray(inp.port_kind, dtype=np.intc)
    k.nq = np.ascontiguousarray(inp.port_nq, dtype=np.intc)
    k.peer = np.ascontiguousarray(net.port_peer, dtype=np.intc)
    k.busy = np.zeros(n_ports, dtype=np.intc)
    k.rate = np.ascontiguousarray(net.port_rate, dtype=np.float64)
    k.prop = np.ascontiguousarray(net.port_prop, dtype=np.float64)
    k.rate_Bps = np.ascontiguousarray(net.port_rate, dtype=np.float64) / 8
    k.vtime = np.zeros(n_ports)
    k.last_update = np.zeros(n_ports)
    k.current = np.full(n_ports, -1, dtype=np.int64)
    k.buffered = np.zeros(n_ports, dtype=np.int64)
    k.eseq = np.zeros(n_ports, dtype=np.int64)
    k.cap = np.ascontiguousarray(inp.port_cap, dtype=np.int64).reshape(-1)
    k.qhead = np.full(n_ports * 8, -1, dtype=np.int64)
    k.qtail = np.full(n_ports * 8, -1, dtype=np.int64)
    k.qcount = np.zeros(n_ports * 8, dtype=np.int64)
    k.cls = np.ascontiguousarray(inp.port_cls, dtype=np.intc).reshape(-1)
    k.weight = np.ascontiguousarray(inp.port_weight, dtype=np.float64).reshape(-1)
    k.last_finish = np.zeros(n_ports * 8)
    k.route = np.ascontiguousarray(net.route, dtype=np.intc)
    k.node_delay = np.ascontiguousarray(net.node_delay, dtype=np.float64)
    k.src_node = np.ascontiguousarray(inp.src_node, dtype=np.intc)
    k.src_dst = np.ascontiguousarray(inp.src_dst, dtype=np.intc)
    k.src_tos = np.ascontiguousarray(inp.src_tos, dtype=np.intc)
    k.src_size = np.ascontiguousarray(inp.src_size, dtype=np.int64)
    k.offs = np.ascontiguousarray(inp.sched_offset, dtype=np.int64)
    k.sched = np.ascontiguousarray(inp.sched_time, dtype=np.float64)
    source = np.zeros(npk, dtype=np.intc)
    created = np.zeros(npk)
    fate = np.zeros(npk, dtype=np.int8)
    fate_time = np.full(npk, np.nan)
    k.pk_src = source
    k.pk_created = created
    k.pk_fate = fate
    k.pk_fate_time = fate_time
    k.pk_tag = np.zeros(npk)
    k.pk_next = np.full(npk, -1, dtype=np.int64)
    k.pk_eseq = np.zeros(npk, dtype=np.int64)
    for s in range(inp.n_sources):
        if k.offs[s + 1] > k.offs[s]:
            k.push(k.sched[k.offs[s]], EV_GEN, s, 0)
    k.run(inp.end_s)
    n = k.npk
    return (source[:n].astype(np.int32), created[:n].copy(), fate[:n].copy(),
            fate_time[:n].copy(), int(k.dispatched))
