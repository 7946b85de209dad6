from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voipqos.qdisc import (
    Admission,
    Discipline,
    FifoQdisc,
    Job,
    PriorityQdisc,
    QdiscConfig,
    QdiscConfigError,
    WfqQdisc,
    gps_oracle,
    make_qdisc,
    serve,
)

CLS4 = (0, 1, 2, 3, 3, 3, 3, 3)  # tos k -> queue k, for hand-built cases


def test_default_classifier():
    cfg = QdiscConfig(discipline="pq")
    assert cfg.classify(6) == 0
    assert cfg.classify(0) == cfg.n_queues - 1
    assert all(QdiscConfig(discipline="fifo").classify(t) == 0 for t in range(8))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"classifier": (0,) * 7},
        {"classifier": (0, 0, 0, 0, 0, 0, 0, 9)},
        {"discipline": "wfq", "weights": (1, 0, 1, 1)},
        {"discipline": "wfq", "weights": (1, 2)},
        {"capacity": 0},
        {"class_capacity": (10, 0, 10, 10)},
    ],
)
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(QdiscConfigError):
        QdiscConfig(**kwargs)


def test_fifo_tail_drop_at_capacity():
    q = FifoQdisc(3)
    assert [q.enqueue(Job(0, 0, 100, i), 0) for i in range(3)] == [Admission.ACCEPTED] * 3
    assert q.enqueue(Job(0, 0, 100, 3), 0) is Admission.DROPPED
    assert q.drops == [1] and len(q) == 3


def test_pq_tail_drop_is_per_queue():
    q = PriorityQdisc(4, [2, 2, 2, 2], CLS4)
    for i in range(2):
        assert q.enqueue(Job(0, 2, 1500, i), 0)
    assert q.enqueue(Job(0, 2, 1500, 2), 0) is Admission.DROPPED
    assert q.enqueue(Job(0, 0, 200, 3), 0) is Admission.ACCEPTED
    assert q.drops == [0, 0, 1, 0]


def test_pq_serves_voice_before_older_ftp():
    q = PriorityQdisc(4, [None] * 4, QdiscConfig().classifier)
    ftp, voice = Job(1, 2, 1500, 0), Job(2, 6, 200, 1)
    q.enqueue(ftp, 1)
    q.enqueue(voice, 2)
    assert q.dequeue(3) is voice
    assert q.dequeue(3) is ftp
    assert q.dequeue(3) is None


def test_fifo_preserves_order():
    q = FifoQdisc(None)
    jobs = [Job(i, i % 8, 100, i) for i in range(3)]
    for j in jobs:
        q.enqueue(j, j.time)
    assert [q.dequeue(5) for _ in jobs] == jobs


def _ab_jobs():
    return [Job(0, 0, 100, 0), Job(0, 0, 100, 1), Job(0, 1, 100, 2), Job(0, 1, 100, 3)]


def test_wfq_finish_tags_hand_example():
    q = WfqQdisc(F(800), [F(3), F(1)], [None, None], CLS4)
    for j in _ab_jobs():
        q.enqueue(j, 0)
    tags = [t for buf in q.queues for t, _, _ in buf]
    # max(V, last) + 100 / w, with V = 0 at an idle port
    assert tags == [F(100, 3), F(200, 3), F(100), F(200)]


def test_wfq_service_order_hand_example():
    q = WfqQdisc(F(800), [F(3), F(1)], [None, None], CLS4)
    rec = serve(_ab_jobs(), q, F(800))
    assert rec.order == [0, 1, 2, 3]


def test_gps_sole_flow_gets_full_rate():
    assert gps_oracle([(0, 0, 100)], [1], F(100)) == [1]


def test_gps_symmetric_weights_finish_together():
    f = gps_oracle([(0, 0, 100), (0, 1, 100)], [F(1), F(1)], F(100))
    assert f[0] == f[1] == 2


def test_gps_weighted_hand_example():
    # A drains at 75 B/s, B at 25 B/s: A1 at 4/3, A2 at 8/3; B1 has 100 - 25*8/3 = 100/3
    # bytes left and then gets the full 100 B/s, finishing at 3; B2 ends at 4
    f = gps_oracle([(0, 0, 100), (0, 0, 100), (0, 1, 100), (0, 1, 100)], [F(3), F(1)], F(100))
    assert f == [F(4, 3), F(8, 3), F(3), F(4)]


# --- random instances -------------------------------------------------------------


@st.composite
def instances(draw, max_queues=4, max_packets=64):
    nq = draw(st.integers(1, max_queues))
    n = draw(st.integers(1, max_packets))
    gaps = [F(g, 1000) for g in draw(st.lists(st.integers(0, 20), min_size=n, max_size=n))]
    qs = draw(st.lists(st.integers(0, nq - 1), min_size=n, max_size=n))
    sizes = draw(st.lists(st.integers(40, 1500), min_size=n, max_size=n))
    weights = [F(w) for w in draw(st.lists(st.integers(1, 8), min_size=nq, max_size=nq))]
    t = F(0)
    jobs = []
    for i in range(n):
        t += gaps[i]
        jobs.append(Job(t, qs[i], sizes[i], i))
    return nq, weights, jobs


RATE = F(1_544_000)


def _classifier(nq):
    return tuple(min(t, nq - 1) for t in range(8))


@settings(max_examples=50, deadline=None)
@given(instances())
def test_gps_oracle_matches_fifo_on_one_queue_and_total_work(inst):
    nq, weights, jobs = inst
    gps = gps_oracle([(j.time, j.tos, j.size) for j in jobs], weights, RATE / 8)
    fifo = serve(jobs, FifoQdisc(None), RATE)
    # both are work conserving: the last byte leaves at the same instant
    assert max(gps) == max(fifo.finish.values())
    single = gps_oracle([(j.time, 0, j.size) for j in jobs], [F(1)], RATE / 8)
    assert single == [fifo.finish[j.idx] for j in jobs]


@settings(max_examples=50, deadline=None)
@given(instances(), st.sampled_from(["fifo", "pq", "wfq"]), st.integers(1, 6))
def test_work_conservation_and_capacity(inst, disc, cap):
    nq, weights, jobs = inst
    cfg = QdiscConfig(discipline=disc, capacity=cap, class_capacity=(cap,) * nq, classifier=_classifier(nq), weights=weights)
    qd = make_qdisc(cfg, RATE)
    rec = serve(jobs, qd, RATE)
    assert len(rec.order) + len(rec.dropped) == len(jobs)
    assert sum(qd.drops) == len(rec.dropped)
    # link never idles while an accepted packet waits
    by_size = {j.idx: j.size for j in jobs}
    arrival = {j.idx: j.time for j in jobs}
    prev_finish = F(0)
    for k, idx in enumerate(rec.order):
        earliest = min(arrival[i] for i in rec.order[k:])
        assert rec.start[idx] == max(prev_finish, earliest)
        assert rec.finish[idx] == rec.start[idx] + F(8 * by_size[idx]) / RATE
        prev_finish = rec.finish[idx]


@settings(max_examples=50, deadline=None)
@given(instances(), st.integers(1, 6))
def test_occupancy_never_exceeds_capacity(inst, cap):
    nq, weights, jobs = inst
    for disc in ("fifo", "pq", "wfq"):
        cfg = QdiscConfig(discipline=disc, capacity=cap, class_capacity=(cap,) * nq, classifier=_classifier(nq), weights=weights)
        qd = make_qdisc(cfg, RATE)
        for j in jobs:
            qd.enqueue(j, j.time)
            assert all(qd.occupancy(q) <= cap for q in range(len(qd.queues)))
            if j.idx % 3 == 0:
                qd.dequeue(j.time)


@settings(max_examples=50, deadline=None)
@given(instances())
def test_fifo_order_is_arrival_order(inst):
    _, _, jobs = inst
    rec = serve(jobs, FifoQdisc(5), RATE)
    assert rec.order == sorted(rec.order)


@settings(max_examples=50, deadline=None)
@given(instances())
def test_pq_strict_precedence(inst):
    nq, _, jobs = inst
    qd = PriorityQdisc(nq, [None] * nq, _classifier(nq))
    rec = serve(jobs, qd, RATE)
    by_idx = {j.idx: j for j in jobs}
    for idx in rec.order:
        t = rec.start[idx]
        waiting = [k for k in rec.order if by_idx[k].time <= t and rec.start[k] > t]
        assert all(by_idx[k].tos >= by_idx[idx].tos for k in waiting)
        same_queue = [k for k in waiting if by_idx[k].tos == by_idx[idx].tos]
        assert all(k > idx for k in same_queue)


@settings(max_examples=50, deadline=None)
@given(instances())
def test_wfq_tags_nondecreasing_within_a_queue(inst):
    nq, weights, jobs = inst
    qd = WfqQdisc(RATE, weights, [None] * nq, _classifier(nq))
    for j in jobs:
        qd.enqueue(j, j.time)
        for buf in qd.queues:
            tags = [t for t, _, _ in buf]
            assert tags == sorted(tags)
        if j.idx % 2:
            qd.dequeue(j.time)


def test_wfq_virtual_time_resets_when_idle():
    qd = WfqQdisc(F(800), [F(1), F(1)], [None, None], CLS4)
    qd.enqueue(Job(0, 0, 100, 0), 0)
    assert qd.dequeue(0).idx == 0
    qd.enqueue(Job(10, 1, 100, 1), 10)
    assert qd.vtime == 0
    assert qd.head_tags() == [None, F(100)]


def test_make_qdisc_dispatch():
    assert isinstance(make_qdisc(QdiscConfig(discipline=Discipline.FIFO), 1e6), FifoQdisc)
    assert isinstance(make_qdisc(QdiscConfig(discipline=Discipline.PQ), 1e6), PriorityQdisc)
    assert isinstance(make_qdisc(QdiscConfig(discipline=Discipline.WFQ), 1e6), WfqQdisc)
