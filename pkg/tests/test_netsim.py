import numpy as np
import pytest

from gatetele import protocols
from gatetele.netsim import (DeadlockError, NetworkConfig, NetworkError, NodeSpec, OwnershipError, QuantumLink,
                             build_network, create_epr, run, star_config)
from gatetele.noise import DeviceNoise, LinkNoise
from gatetele.protocols import InputSpec, three_node_config, three_node_gate_teleport
from gatetele.qmath import Statevector, fidelity_pure, gate_by_name

BELL = np.array([1, 0, 0, 1]) / np.sqrt(2)


def pair(f=1.0):
    return NetworkConfig((NodeSpec("a"), NodeSpec("b")), (QuantumLink("a", "b", LinkNoise(f)),), (("a", "b"),))


def test_build_examples():
    assert build_network(pair()).cfg.node_names == ["a", "b"]
    star = star_config("gate", ["input0", "input1", "input2"])
    assert len(build_network(star).cfg.quantum_links) == 3


@pytest.mark.parametrize("cfg", [
    NetworkConfig((NodeSpec("a"), NodeSpec("a"))),
    NetworkConfig((NodeSpec("a"),), (QuantumLink("a", "zz"),)),
    NetworkConfig((NodeSpec("a"), NodeSpec("b")), (), (("a", "c"),)),
    NetworkConfig((NodeSpec("a"),), (QuantumLink("a", "a"),)),
])
def test_build_errors(cfg):
    with pytest.raises(NetworkError):
        build_network(cfg)


def test_create_epr_fidelity():
    for f in (1.0, 0.7):
        sim = build_network(pair(f))
        a, b = create_epr(sim, "a", "b")
        sim._materialize()
        assert (a.node, b.node) == ("a", "b")
        assert fidelity_pure(sim.state, Statevector(BELL)) == pytest.approx(f, abs=1e-10)


def test_two_pairs_are_product():
    cfg = star_config("g", ["x", "y"], LinkNoise(0.8))
    sim = build_network(cfg)
    create_epr(sim, "x", "g")
    create_epr(sim, "y", "g")
    sim._materialize()
    w = 0.8 * 4 / 3 - 1 / 3
    werner = w * np.outer(BELL, BELL) + (1 - w) * np.eye(4) / 4
    assert np.allclose(sim.state.elements, np.kron(werner, werner))


def test_create_epr_unknown_link():
    sim = build_network(star_config("g", ["x", "y"]))
    with pytest.raises(NetworkError):
        create_epr(sim, "x", "y")


def _coin_programs(theta=1.1):
    def a(ctx):
        epr = ctx.create_epr("b")
        q = ctx.new_qubit()
        ctx.apply("RY", q, theta=theta)
        bits = [ctx.measure(q), ctx.measure(epr)]
        yield ctx.flush()
        ctx.send("b", bits, "m")
        return bits

    def b(ctx):
        half = yield ctx.recv_epr("a")
        yield ctx.flush()
        bits = yield ctx.recv("a", "m")
        return bits + [ctx.measure(half)]
    return {"a": a, "b": b}


def test_exact_branches_sum_to_one():
    sim = build_network(pair(0.7))
    out = run(sim, _coin_programs(), "exact")
    assert len(out.branches) == 8
    assert out.total_probability == pytest.approx(1, abs=1e-9)
    # the last measurement repeats the EPR bit except for Werner noise
    p_agree = sum(b.probability for b in out.branches if b.outcomes[1] == b.outcomes[2])
    assert p_agree == pytest.approx((1 + (4 * 0.7 - 1) / 3) / 2)


def test_sampled_deterministic():
    sim = build_network(pair(0.7))
    a = run(sim, _coin_programs(), "sampled", seed=42)
    b = run(sim, _coin_programs(), "sampled", seed=42)
    assert a.bits() == b.bits()
    assert a.branches[0].returns == b.branches[0].returns
    assert np.array_equal(a.branches[0].state.elements, b.branches[0].state.elements)


def test_exact_deterministic():
    sim = build_network(pair(0.8))
    a = run(sim, _coin_programs(), "exact")
    b = run(sim, _coin_programs(), "exact")
    assert [x.outcomes for x in a.branches] == [x.outcomes for x in b.branches]
    assert [x.probability for x in a.branches] == [x.probability for x in b.branches]


def test_sampled_frequencies_match_exact():
    sim = build_network(pair(0.7))
    exact = {b.outcomes: b.probability for b in run(sim, _coin_programs(), "exact").branches}
    n = 10_000
    counts: dict = {}
    for seed in range(n):
        key = run(sim, _coin_programs(), "sampled", seed=seed).bits()
        counts[key] = counts.get(key, 0) + 1
    assert set(counts) <= set(exact)
    for key, p in exact.items():
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(counts.get(key, 0) - n * p) <= 5 * sigma + 1e-9, key


def test_deadlock_names_node_and_tag():
    def a(ctx):
        yield ctx.recv("b", "never")

    def b(ctx):
        yield ctx.flush()
    with pytest.raises(DeadlockError) as err:
        run(build_network(pair()), {"a": a, "b": b})
    assert err.value.node == "a" and "never" in str(err.value)


def test_ownership_violation():
    shared = {}

    def a(ctx):
        shared["q"] = ctx.create_epr("b")
        yield ctx.flush()

    def b(ctx):
        yield ctx.recv_epr("a")
        yield ctx.flush()
        ctx.apply("X", shared["q"])

    with pytest.raises(OwnershipError, match="owned by 'a'"):
        run(build_network(pair()), {"a": a, "b": b})

    def b_spanning(ctx):
        half = yield ctx.recv_epr("a")
        yield ctx.flush()
        ctx._sim.apply(gate_by_name("CNOT"), [half, shared["q"]])

    with pytest.raises(OwnershipError, match="several nodes"):
        run(build_network(pair()), {"a": a, "b": b_spanning})


def test_classical_fifo():
    def a(ctx):
        for i in range(5):
            ctx.send("b", [i % 2, i // 2], f"t{i}")
            if i == 2:
                yield ctx.flush()

    def b(ctx):
        got = []
        for _ in range(5):
            got.append((yield ctx.recv("a")))
        return got
    out = run(build_network(pair()), {"a": a, "b": b})
    assert out.branches[0].returns["b"] == [[0, 0], [1, 0], [0, 1], [1, 1], [0, 2]]
    assert [m.tag for m in out.branches[0].messages] == ["t0", "t1", "t2", "t3", "t4"]


def test_send_needs_classical_link():
    cfg = NetworkConfig((NodeSpec("a"), NodeSpec("b")), (QuantumLink("a", "b"),))

    def a(ctx):
        ctx.send("b", [1])
        yield ctx.flush()
    with pytest.raises(NetworkError):
        run(build_network(cfg), {"a": a})


def test_flush_barrier_orders_segments():
    log = []

    def make(name):
        def prog(ctx):
            log.append((name, 0))
            yield ctx.flush()
            log.append((name, 1))
            yield ctx.flush()
            log.append((name, 2))
        return prog
    cfg = star_config("c", ["x", "y"])
    run(build_network(cfg), {n: make(n) for n in ("y", "c", "x")})
    assert log == [(n, s) for s in range(3) for n in ("c", "x", "y")]


def test_measured_qubit_rejected():
    def a(ctx):
        q = ctx.new_qubit()
        ctx.measure(q)
        ctx.apply("X", q)
        yield ctx.flush()
    with pytest.raises(NetworkError):
        run(build_network(pair()), {"a": a})


def test_bad_mode():
    with pytest.raises(NetworkError):
        run(build_network(pair()), _coin_programs(), "quantum")


def test_measurement_flip_biases_readout():
    cfg = pair().with_device_noise(DeviceNoise(0, 0, 0.1), ["a"])

    def a(ctx):
        q = ctx.new_qubit()
        return [ctx.measure(q)]
        yield
    out = run(build_network(cfg), {"a": a})
    probs = {b.outcomes: b.probability for b in out.branches}
    assert probs[(1,)] == pytest.approx(0.1)


def test_bell_measurement_order_is_irrelevant(monkeypatch):
    """Swapping the two readouts inside the Bell measurement leaves the output unchanged."""
    cfg = three_node_config(LinkNoise(0.85), DeviceNoise(0.03, 0.03, 0.02))
    inp = InputSpec.random(2, np.random.default_rng(5))
    u = gate_by_name("CNOT")
    ref = three_node_gate_teleport(build_network(cfg), u, inp)

    def reversed_order(ctx, q, epr):
        ctx.apply("CNOT", q, epr)
        ctx.apply("H", q)
        m = ctx.measure(q)
        e = ctx.measure(epr)
        return e, m
    monkeypatch.setattr(protocols, "_bell_measure", reversed_order)
    alt = three_node_gate_teleport(build_network(cfg), u, inp)
    assert alt.fidelity == pytest.approx(ref.fidelity, abs=1e-12)
