"""Multi-node network simulation with a shared global density matrix.

Node programs are generator functions ``program(ctx)``.  Local work (gates,
measurements, sends, EPR creation) runs straight through; a program pauses
only when it yields one of the requests built by its :class:`NodeContext`::

    def program(ctx):
        epr = yield ctx.recv_epr("gate")   # block until the peer created the pair
        yield ctx.flush()                  # barrier
        bits = yield ctx.recv("gate")      # block until a message arrives
        return epr

Scheduling is by logical rounds.  Programs run in node-name order until each
one is waiting at a flush, blocked on a receive or finished; the waiting
flushes are then released together.  A round in which nothing can move and
nobody is flushing is a deadlock.

``exact`` mode enumerates every measurement branch by replaying the programs
with forced outcomes; the quantum state reached after each outcome prefix is
cached, so shared prefixes are only simulated once.  Measured qubits are
removed from the global state as soon as they are read out.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Generator, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .noise import DeviceNoise, LinkNoise, noisy_apply, werner_epr
from .qmath import DensityMatrix, GateMatrix, gate_by_name, measure_branches, partial_trace

log = logging.getLogger(__name__)

MODES = ("exact", "sampled")


class NetworkError(ValueError):
    """Invalid network configuration or request."""


class OwnershipError(RuntimeError):
    pass


class DeadlockError(RuntimeError):
    def __init__(self, node: str, what: str):
        super().__init__(f"deadlock: node {node!r} is blocked waiting for {what}")
        self.node = node
        self.what = what


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class NodeSpec:
    name: str
    noise: DeviceNoise = field(default_factory=DeviceNoise)


@dataclass(frozen=True)
class QuantumLink:
    node_a: str
    node_b: str
    noise: LinkNoise = field(default_factory=LinkNoise)

    @property
    def key(self) -> frozenset:
        return frozenset((self.node_a, self.node_b))


def _link_key(a: str, b: str) -> frozenset:
    return frozenset((a, b))


@dataclass(frozen=True)
class NetworkConfig:
    nodes: tuple[NodeSpec, ...]
    quantum_links: tuple[QuantumLink, ...] = ()
    classical_links: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "quantum_links", tuple(self.quantum_links))
        object.__setattr__(self, "classical_links", tuple(tuple(c) for c in self.classical_links))

    def validate(self) -> None:
        names = [n.name for n in self.nodes]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise NetworkError(f"duplicate node names: {', '.join(dupes)}")
        known = set(names)
        ends = [(l.node_a, l.node_b) for l in self.quantum_links] + list(self.classical_links)
        for a, b in ends:
            for end in (a, b):
                if end not in known:
                    raise NetworkError(f"link {a}-{b} references unknown node {end!r}")
            if a == b:
                raise NetworkError(f"link {a}-{b} connects a node to itself")

    @property
    def node_names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise NetworkError(f"unknown node {name!r}")

    def quantum_link(self, a: str, b: str) -> QuantumLink:
        for link in self.quantum_links:
            if link.key == _link_key(a, b):
                return link
        raise NetworkError(f"no quantum link between {a!r} and {b!r}")

    def has_classical_link(self, a: str, b: str) -> bool:
        return any(_link_key(*c) == _link_key(a, b) for c in self.classical_links)

    def with_link_fidelity(self, f: float, links: Optional[Iterable[tuple[str, str]]] = None) -> "NetworkConfig":
        chosen = None if links is None else {_link_key(a, b) for a, b in links}
        new = tuple(replace(l, noise=LinkNoise(f)) if chosen is None or l.key in chosen else l
                    for l in self.quantum_links)
        return replace(self, quantum_links=new)

    def with_device_noise(self, noise: DeviceNoise, nodes: Optional[Iterable[str]] = None) -> "NetworkConfig":
        chosen = None if nodes is None else set(nodes)
        new = tuple(replace(n, noise=noise) if chosen is None or n.name in chosen else n
                    for n in self.nodes)
        return replace(self, nodes=new)


def star_config(center: str, leaves: Sequence[str], link: LinkNoise = LinkNoise(),
                device: DeviceNoise = DeviceNoise()) -> NetworkConfig:
    """Every leaf joined to ``center`` by one quantum and one classical link."""
    nodes = [NodeSpec(center, device)] + [NodeSpec(l, device) for l in leaves]
    return NetworkConfig(
        tuple(nodes),
        tuple(QuantumLink(l, center, link) for l in leaves),
        tuple((l, center) for l in leaves),
    )


# --- runtime values ---------------------------------------------------------

@dataclass(frozen=True)
class QubitRef:
    node: str
    local_id: int
    global_index: int


@dataclass(frozen=True)
class ClassicalMessage:
    sender: str
    payload: tuple[int, ...]
    tag: str = ""


@dataclass(frozen=True)
class _Flush:
    pass


@dataclass(frozen=True)
class _Recv:
    peer: str
    tag: Optional[str]


@dataclass(frozen=True)
class _RecvEPR:
    peer: str


Program = Callable[["NodeContext"], Generator]


@dataclass(frozen=True)
class Branch:
    outcomes: tuple[int, ...]
    probability: float
    state: DensityMatrix
    qubits: tuple[QubitRef, ...]
    returns: Mapping[str, Any]
    messages: tuple[ClassicalMessage, ...] = ()

    def reduced(self, refs: Sequence[QubitRef]) -> DensityMatrix:
        """Density matrix of ``refs`` (in the given order)."""
        pos = {q: i for i, q in enumerate(self.qubits)}
        missing = [r for r in refs if r not in pos]
        if missing:
            raise NetworkError(f"qubits not alive at end of run: {missing}")
        return partial_trace(self.state, [pos[r] for r in refs])


@dataclass(frozen=True)
class RunOutcome:
    mode: str
    seed: Optional[int]
    branches: tuple[Branch, ...]

    @property
    def total_probability(self) -> float:
        return float(sum(b.probability for b in self.branches))

    def bits(self) -> tuple[int, ...]:
        if len(self.branches) != 1:
            raise NetworkError("bits() is only defined for a single sampled trajectory")
        return self.branches[0].outcomes


# --- measurement strategies -------------------------------------------------

class _Sampler:
    def __init__(self, seed: Optional[int]):
        self.rng = np.random.default_rng(seed)

    def lookup(self, path):
        return None

    def choose(self, path, branches) -> int:
        outcome = int(self.rng.random() < branches[1][0])
        if branches[outcome][1] is None:
            outcome = 1 - outcome
        return outcome

    def store(self, key, value):
        pass


class _Enumerator:
    """Forces a known outcome prefix and remembers untried siblings."""

    def __init__(self, cache: dict):
        self.cache = cache
        self.prefix: tuple[int, ...] = ()
        self.pending: list[tuple[int, ...]] = []

    def lookup(self, path):
        depth = len(path)
        if depth < len(self.prefix):
            outcome = self.prefix[depth]
            hit = self.cache.get(path + (outcome,))
            if hit is not None:
                return outcome, hit
        return None

    def choose(self, path, branches) -> int:
        depth = len(path)
        if depth < len(self.prefix):
            return self.prefix[depth]
        valid = [m for m in (0, 1) if branches[m][1] is not None]
        for other in valid[1:]:
            self.pending.append(path + (other,))
        return valid[0]

    def store(self, key, value):
        self.cache[key] = value


# --- simulation -------------------------------------------------------------

class Simulation:
    def __init__(self, cfg: NetworkConfig, check_invariants: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.check_invariants = check_invariants
        self._noise = {n.name: n.noise for n in cfg.nodes}
        self.reset()

    def reset(self) -> None:
        self.state = DensityMatrix(np.ones((1, 1), dtype=complex))
        self.weight = 1.0
        self.path: tuple[int, ...] = ()
        self.live: list[QubitRef] = []
        self.measured: set[QubitRef] = set()
        self._pending: list[Callable[[DensityMatrix], DensityMatrix]] = []
        self._next_global = 0
        self._next_local: dict[str, int] = {n: 0 for n in self.cfg.node_names}
        self._classical: dict[tuple[str, str], list[ClassicalMessage]] = {}
        self._epr: dict[tuple[str, str], list[QubitRef]] = {}
        self.message_log: list[ClassicalMessage] = []
        self._strategy: Any = _Sampler(0)

    # state bookkeeping; quantum updates are queued and applied lazily

    def _record(self, op: Callable[[DensityMatrix], DensityMatrix]) -> None:
        self._pending.append(op)

    def _materialize(self) -> None:
        for op in self._pending:
            self.state = op(self.state)
            if self.check_invariants:
                self.state.check()
        self._pending.clear()

    def _alloc(self, node: str) -> QubitRef:
        ref = QubitRef(node, self._next_local[node], self._next_global)
        self._next_local[node] += 1
        self._next_global += 1
        self.live.append(ref)
        return ref

    def position(self, ref: QubitRef) -> int:
        if ref in self.measured:
            raise NetworkError(f"qubit {ref} was already measured")
        try:
            return self.live.index(ref)
        except ValueError:
            raise NetworkError(f"unknown qubit {ref}") from None

    def new_qubit(self, node: str) -> QubitRef:
        self.cfg.node(node)
        ref = self._alloc(node)
        zero = DensityMatrix.zeros(1)
        self._record(lambda rho: rho.tensor(zero))
        return ref

    def create_epr(self, node_a: str, node_b: str) -> tuple[QubitRef, QubitRef]:
        link = self.cfg.quantum_link(node_a, node_b)
        pair = werner_epr(link.noise.epr_fidelity)
        a, b = self._alloc(node_a), self._alloc(node_b)
        self._record(lambda rho: rho.tensor(pair))
        return a, b

    def apply(self, g: GateMatrix, refs: Sequence[QubitRef]) -> None:
        nodes = {r.node for r in refs}
        if len(nodes) != 1:
            raise OwnershipError(f"gate {g.label} spans qubits on several nodes: {sorted(nodes)}")
        noise = self._noise[refs[0].node]
        pos = [self.position(r) for r in refs]
        self._record(lambda rho: noisy_apply(rho, g, pos, noise))

    def measure(self, ref: QubitRef) -> int:
        pos = self.position(ref)
        flip = self._noise[ref.node].measurement_flip
        self.live.pop(pos)
        self.measured.add(ref)
        cached = self._strategy.lookup(self.path)
        if cached is not None:
            outcome, (self.state, self.weight) = cached
            self._pending.clear()
        else:
            self._materialize()
            branches = _readout(self.state, pos, flip)
            outcome = self._strategy.choose(self.path, branches)
            p, post = branches[outcome]
            self.state, self.weight = post, self.weight * p
            self._strategy.store(self.path + (outcome,), (post, self.weight))
            if self.check_invariants:
                self.state.check()
        self.path = self.path + (outcome,)
        return outcome

    def send(self, sender: str, receiver: str, payload: Sequence[int], tag: str = "") -> None:
        if not self.cfg.has_classical_link(sender, receiver):
            raise NetworkError(f"no classical link between {sender!r} and {receiver!r}")
        msg = ClassicalMessage(sender, tuple(int(b) for b in payload), tag)
        self._classical.setdefault((sender, receiver), []).append(msg)
        self.message_log.append(msg)

    # scheduling

    def _try_satisfy(self, node: str, req) -> tuple[bool, Any]:
        if isinstance(req, _Recv):
            queue = self._classical.get((req.peer, node))
            if not queue:
                return False, None
            msg = queue.pop(0)
            if req.tag is not None and msg.tag != req.tag:
                raise NetworkError(
                    f"node {node!r} expected tag {req.tag!r} from {req.peer!r}, got {msg.tag!r}")
            return True, list(msg.payload)
        if isinstance(req, _RecvEPR):
            queue = self._epr.get((req.peer, node))
            if not queue:
                return False, None
            return True, queue.pop(0)
        raise NetworkError(f"program on {node!r} yielded unsupported request {req!r}")

    def _execute(self, programs: Mapping[str, Program]) -> dict[str, Any]:
        order = sorted(programs)
        gens = {name: programs[name](NodeContext(self, name)) for name in order}
        status: dict[str, tuple[str, Any]] = {name: ("ready", None) for name in order}
        returns: dict[str, Any] = {}
        while True:
            progressed = False
            for name in order:
                kind, payload = status[name]
                if kind == "blocked":
                    ok, value = self._try_satisfy(name, payload)
                    if not ok:
                        continue
                    kind, payload = "ready", value
                if kind != "ready":
                    continue
                progressed = True
                status[name] = self._step(name, gens[name], payload, returns)
            if progressed:
                continue
            flushing = [n for n in order if status[n][0] == "flush"]
            if flushing:
                for n in flushing:
                    status[n] = ("ready", None)
                continue
            blocked = [n for n in order if status[n][0] == "blocked"]
            if blocked:
                req = status[blocked[0]][1]
                what = (f"message tag {req.tag!r} from {req.peer!r}" if isinstance(req, _Recv)
                        else f"EPR half from {req.peer!r}")
                raise DeadlockError(blocked[0], what)
            return returns

    def _step(self, name, gen, value, returns) -> tuple[str, Any]:
        while True:
            try:
                req = gen.send(value)
            except StopIteration as stop:
                returns[name] = stop.value
                return ("done", None)
            if isinstance(req, _Flush):
                return ("flush", None)
            ok, value = self._try_satisfy(name, req)
            if not ok:
                return ("blocked", req)

    def _snapshot(self, returns) -> Branch:
        self._materialize()
        return Branch(self.path, self.weight, self.state, tuple(self.live), dict(returns),
                      tuple(self.message_log))


class NodeContext:
    """What a program running on ``node`` may touch."""

    def __init__(self, sim: Simulation, node: str):
        self._sim = sim
        self.node = node

    def _own(self, ref: QubitRef) -> None:
        if ref.node != self.node:
            raise OwnershipError(f"node {self.node!r} cannot operate on qubit owned by {ref.node!r}")

    def new_qubit(self) -> QubitRef:
        return self._sim.new_qubit(self.node)

    def create_epr(self, peer: str) -> QubitRef:
        mine, theirs = self._sim.create_epr(self.node, peer)
        self._sim._epr.setdefault((self.node, peer), []).append(theirs)
        return mine

    def apply(self, gate: Union[str, GateMatrix], *qubits: QubitRef, theta: Optional[float] = None) -> None:
        for q in qubits:
            self._own(q)
        g = gate if isinstance(gate, GateMatrix) else gate_by_name(gate, theta)
        if g.n_qubits != len(qubits):
            raise NetworkError(f"gate {g.label} needs {g.n_qubits} qubits, got {len(qubits)}")
        self._sim.apply(g, qubits)

    def measure(self, qubit: QubitRef) -> int:
        self._own(qubit)
        return self._sim.measure(qubit)

    def send(self, peer: str, bits: Sequence[int], tag: str = "") -> None:
        self._sim.send(self.node, peer, bits, tag)

    def recv(self, peer: str, tag: Optional[str] = None) -> _Recv:
        return _Recv(peer, tag)

    def recv_epr(self, peer: str) -> _RecvEPR:
        return _RecvEPR(peer)

    def flush(self) -> _Flush:
        return _Flush()


def _readout(rho: DensityMatrix, pos: int, flip: float) -> list[tuple[float, Optional[DensityMatrix]]]:
    """Reported-bit branches of a measurement, with the measured qubit traced out."""
    n = rho.n_qubits
    keep = [q for q in range(n) if q != pos]
    raw = []
    for b in measure_branches(rho, pos):
        if b.post_state is None:
            raw.append((b.probability, None))
        elif keep:
            raw.append((b.probability, partial_trace(b.post_state, keep).elements))
        else:
            raw.append((b.probability, np.ones((1, 1), dtype=complex)))
    out = []
    for r in (0, 1):
        mix = [((1 - flip) if m == r else flip, raw[m]) for m in (0, 1)]
        p = sum(w * pm for w, (pm, st) in mix if st is not None)
        if p < 1e-12:
            out.append((max(p, 0.0), None))
            continue
        acc = sum(w * pm * st for w, (pm, st) in mix if st is not None and w > 0)
        out.append((p, DensityMatrix(acc / p)))
    return out


def build_network(cfg: NetworkConfig, check_invariants: bool = False) -> Simulation:
    return Simulation(cfg, check_invariants=check_invariants)


def create_epr(sim: Simulation, node_a: str, node_b: str) -> tuple[QubitRef, QubitRef]:
    return sim.create_epr(node_a, node_b)


def run(sim: Simulation, programs: Mapping[str, Program], mode: str = "exact",
        seed: Optional[int] = 0) -> RunOutcome:
    """Run one program per node; see the module docstring for semantics."""
    if mode not in MODES:
        raise NetworkError(f"mode must be one of {MODES}, got {mode!r}")
    for name in programs:
        sim.cfg.node(name)
    if mode == "sampled":
        sim.reset()
        sim._strategy = _Sampler(seed)
        returns = sim._execute(programs)
        branch = sim._snapshot(returns)
        return RunOutcome(mode, seed, (replace(branch, probability=1.0),))

    cache: dict = {}
    enum = _Enumerator(cache)
    todo: list[tuple[int, ...]] = [()]
    branches = []
    while todo:
        prefix = todo.pop()
        sim.reset()
        enum.prefix = prefix
        enum.pending = []
        sim._strategy = enum
        returns = sim._execute(programs)
        branches.append(sim._snapshot(returns))
        todo.extend(reversed(enum.pending))
    branches.sort(key=lambda b: b.outcomes)
    total = sum(b.probability for b in branches)
    if abs(total - 1) > 1e-9:
        log.warning("exact-mode branch probabilities sum to %.12f", total)
    return RunOutcome(mode, None, tuple(branches))
