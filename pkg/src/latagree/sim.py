"""Deterministic discrete-event harness with Byzantine fault injection.

A scenario file fixes the processes, their roles, the input schedule, and the
network shape.  Given a seed, the run is fully deterministic: message delays
come from one seeded generator, ties break on a global send sequence number,
and the resulting trace serializes to byte-identical JSONL.

Channels are reliable.  With ``reorder: false`` per-channel FIFO order is
enforced by clamping delivery times; ``link_delays`` adds fixed extra latency
to chosen links, which is how scenarios steer interleavings (for example to
force two clients into incomparable decisions).
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import random
from dataclasses import dataclass, field

from .a1la import A1Client, A1Replica, a1_threshold
from .client import BROADCAST, WAITING, Client
from .crypto import DowngradeRefused, Signature, SignatureOracle
from .lattice import ADD, REMOVE, GROWSET, MAXREG, Configuration, LatticeValue, ObjectValue
from .messages import (
    A1Nack,
    A1Proposal,
    Ack,
    Decision,
    Ledger,
    Nack,
    Proposal,
    SignedMessage,
    SignedValue,
    join_ledger_values,
    sign_message,
    sign_value,
)
from .replica import Replica

ROLE_CORRECT = "correct"
ROLE_CRASH = "crash"
ROLE_BYZANTINE = "byzantine"

BEHAVIORS_REPLICA = ("equivocate-ack", "forge-ledger-entry", "stale-key-replay", "silent-drop")
BEHAVIORS_CLIENT = ("double-propose",)


class ScenarioError(Exception):
    """The scenario file does not satisfy the schema."""


@dataclass
class ReplicaSpec:
    id: str
    role: str = ROLE_CORRECT
    behavior: str | None = None
    crash_at_step: int | None = None
    initial: bool = True


@dataclass
class ClientSpec:
    id: str
    role: str = ROLE_CORRECT
    behavior: str | None = None
    inputs: list = field(default_factory=list)  # rala: [{"at", "obj", "conf"}]
    init: list | None = None  # a1la initial value elements
    init2: list | None = None  # a1la double-propose second value


@dataclass
class Scenario:
    protocol: str
    replicas: list
    clients: list
    seed: int
    max_steps: int
    max_delay: int
    reorder: bool
    link_delays: dict
    obj_kind: str
    version: int = 1

    @classmethod
    def from_json(cls, obj) -> "Scenario":
        if not isinstance(obj, dict):
            raise ScenarioError("scenario must be a JSON object")
        protocol = obj.get("protocol")
        if protocol not in ("rala", "a1la"):
            raise ScenarioError(f"field 'protocol': expected 'rala' or 'a1la', got {protocol!r}")
        seed = obj.get("seed", 0)
        if not isinstance(seed, int) or not (-(2**63) <= seed < 2**64):
            raise ScenarioError("field 'seed': expected a 64-bit integer")
        max_steps = obj.get("max_steps", 100_000)
        if not isinstance(max_steps, int) or max_steps < 1:
            raise ScenarioError("field 'max_steps': expected a positive integer")
        net = obj.get("network", {})
        if not isinstance(net, dict):
            raise ScenarioError("field 'network': expected an object")
        max_delay = net.get("max_delay", 10)
        reorder = bool(net.get("reorder", True))
        link_delays = dict(net.get("link_delays", {}))
        obj_kind = obj.get("obj_kind", GROWSET)
        if obj_kind not in (GROWSET, MAXREG):
            raise ScenarioError(f"field 'obj_kind': unknown lattice {obj_kind!r}")

        replicas = []
        for i, r in enumerate(obj.get("replicas", [])):
            if "id" not in r:
                raise ScenarioError(f"replicas[{i}]: missing 'id'")
            role = r.get("role", ROLE_CORRECT)
            if role not in (ROLE_CORRECT, ROLE_CRASH, ROLE_BYZANTINE):
                raise ScenarioError(f"replicas[{i}]: unknown role {role!r}")
            behavior = r.get("behavior")
            if role == ROLE_BYZANTINE and behavior not in BEHAVIORS_REPLICA:
                raise ScenarioError(f"replicas[{i}]: byzantine replica needs a behavior in {BEHAVIORS_REPLICA}")
            if role == ROLE_BYZANTINE and protocol == "a1la" and behavior not in ("equivocate-ack", "silent-drop"):
                raise ScenarioError(f"replicas[{i}]: behavior {behavior!r} applies to the long-lived protocol only")
            if role == ROLE_CRASH and not isinstance(r.get("crash_at_step"), int):
                raise ScenarioError(f"replicas[{i}]: crash role needs integer 'crash_at_step'")
            replicas.append(
                ReplicaSpec(r["id"], role, behavior, r.get("crash_at_step"), bool(r.get("initial", True)))
            )
        if not replicas:
            raise ScenarioError("field 'replicas': at least one replica required")

        clients = []
        for i, c in enumerate(obj.get("clients", [])):
            if "id" not in c:
                raise ScenarioError(f"clients[{i}]: missing 'id'")
            role = c.get("role", ROLE_CORRECT)
            if role not in (ROLE_CORRECT, ROLE_BYZANTINE):
                raise ScenarioError(f"clients[{i}]: unknown role {role!r}")
            behavior = c.get("behavior")
            if role == ROLE_BYZANTINE:
                if protocol != "a1la":
                    raise ScenarioError(f"clients[{i}]: byzantine clients are only modeled for a1la")
                if behavior not in BEHAVIORS_CLIENT:
                    raise ScenarioError(f"clients[{i}]: byzantine client needs a behavior in {BEHAVIORS_CLIENT}")
            clients.append(
                ClientSpec(c["id"], role, behavior, list(c.get("inputs", [])), c.get("init"), c.get("init2"))
            )
        if not clients:
            raise ScenarioError("field 'clients': at least one client required")

        ids = [r.id for r in replicas] + [c.id for c in clients]
        if len(ids) != len(set(ids)):
            raise ScenarioError("process ids must be unique")
        return cls(protocol, replicas, clients, seed, max_steps, max_delay, reorder, link_delays, obj_kind)

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as f:
            try:
                obj = json.load(f)
            except json.JSONDecodeError as e:
                raise ScenarioError(f"{path}: not valid JSON ({e})") from e
        return cls.from_json(obj)

    # -- derived views ---------------------------------------------------------

    def initial_configuration(self) -> Configuration:
        return Configuration(frozenset((r.id, ADD) for r in self.replicas if r.initial))

    def correct_replica_ids(self) -> frozenset:
        return frozenset(r.id for r in self.replicas if r.role == ROLE_CORRECT)

    def byzantine_ids(self) -> frozenset:
        return frozenset(p.id for p in self.replicas + self.clients if p.role == ROLE_BYZANTINE)

    def object_value(self, raw) -> ObjectValue:
        if self.obj_kind == MAXREG:
            return ObjectValue.maxreg(int(raw))
        return ObjectValue.growset(str(x) for x in raw)

    def conf_delta(self, raw) -> Configuration:
        pairs = {(str(r), ADD) for r in raw.get("add", [])}
        pairs |= {(str(r), REMOVE) for r in raw.get("remove", [])}
        return Configuration(frozenset(pairs))

    def scheduled_confs(self) -> list:
        out = []
        for c in self.clients:
            for item in c.inputs:
                if "conf" in item:
                    out.append(self.conf_delta(item["conf"]))
        return out

    def availability_ok(self) -> bool:
        """Every reachable configuration combination keeps a correct majority."""
        correct = self.correct_replica_ids()
        if self.protocol == "a1la":
            n = len(self.replicas)
            return len(correct) >= a1_threshold(n)
        base = self.initial_configuration()
        deltas = self.scheduled_confs()
        for k in range(len(deltas) + 1):
            for combo in itertools.combinations(deltas, k):
                conf = base
                for d in combo:
                    conf = conf.join(d)
                members = conf.members
                if not members or len(members & correct) * 2 <= len(members):
                    return False
        return True

    def digest(self) -> str:
        payload = json.dumps(self_to_json(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def self_to_json(s: Scenario) -> dict:
    return {
        "version": s.version,
        "protocol": s.protocol,
        "seed": s.seed,
        "max_steps": s.max_steps,
        "network": {"max_delay": s.max_delay, "reorder": s.reorder, "link_delays": s.link_delays},
        "obj_kind": s.obj_kind,
        "replicas": [
            {"id": r.id, "role": r.role, "behavior": r.behavior, "crash_at_step": r.crash_at_step, "initial": r.initial}
            for r in s.replicas
        ],
        "clients": [
            {"id": c.id, "role": c.role, "behavior": c.behavior, "inputs": c.inputs, "init": c.init, "init2": c.init2}
            for c in s.clients
        ],
    }


# ---------------------------------------------------------------------------
# Process adapters


class Node:
    kind = "replica"
    is_client = False

    def __init__(self, pid: str, correct: bool, crash_step: int | None = None):
        self.pid = pid
        self.correct = correct
        self.crash_step = crash_step

    def deliver(self, sender: str, msg: SignedMessage):
        return [], False

    def poll(self):
        return []

    def digest(self) -> str:
        return "-"

    def accused(self):
        return []


class ReplicaNode(Node):
    def __init__(self, pid, correct, crash_step, impl: Replica):
        super().__init__(pid, correct, crash_step)
        self.impl = impl

    def deliver(self, sender, msg):
        return self.impl.on_message(sender, msg)

    def digest(self):
        return self.impl.state_digest()


class ClientNode(Node):
    kind = "client"
    is_client = True

    def __init__(self, pid, impl: Client):
        super().__init__(pid, True)
        self.impl = impl

    def deliver(self, sender, msg):
        return self.impl.on_message(sender, msg)

    def poll(self):
        return self.impl.poll()

    def digest(self):
        return self.impl.state_digest()

    def accused(self):
        return sorted(self.impl.accusation.accused)


class A1ClientNode(ClientNode):
    pass


class A1ReplicaNode(ReplicaNode):
    pass


class SilentDropNode(Node):
    """Byzantine replica that never answers proposals.

    Indistinguishable from a slow replica; it exercises liveness under the
    availability precondition rather than any accusation path.
    """

    def __init__(self, pid, impl: Replica):
        super().__init__(pid, False)
        self.impl = impl

    def deliver(self, sender, msg):
        if isinstance(msg.body, (Proposal, A1Proposal)):
            return [], False
        out, accepted = self.impl.on_message(sender, msg)
        return [], accepted

    def digest(self):
        return self.impl.state_digest()


class EquivocateAckNode(Node):
    """Byzantine replica that keeps an independent honest fork per client.

    Each fork is a full replica sharing the one real key handle, so every ACK
    it emits is genuinely signed and internally consistent; only a cross-client
    comparison (two ACKs for incomparable values) exposes it.  Signing a fork
    whose configuration fell behind the shared key floor raises
    DowngradeRefused; those replies are silently dropped.
    """

    def __init__(self, pid, make_replica):
        super().__init__(pid, False)
        self._make = make_replica
        self.forks: dict[str, Replica] = {}

    def _fork(self, client_id: str) -> Replica:
        if client_id not in self.forks:
            self.forks[client_id] = self._make()
        return self.forks[client_id]

    def deliver(self, sender, msg):
        if isinstance(msg.body, Proposal):
            try:
                return self._fork(sender).on_message(sender, msg)
            except DowngradeRefused:
                return [], False
        # decisions and gossip feed every fork so each stays plausible
        accepted = False
        for fork in list(self.forks.values()):
            try:
                _, ok = fork.on_message(sender, msg)
                accepted = accepted or ok
            except DowngradeRefused:
                pass
        return [], accepted

    def digest(self):
        parts = ",".join(f"{c}:{f.state_digest()}" for c, f in sorted(self.forks.items()))
        return hashlib.sha256(parts.encode()).hexdigest()[:16]


class ForgeLedgerEntryNode(Node):
    """Byzantine replica answering proposals with a NACK holding a forged entry."""

    def __init__(self, pid, impl: Replica, obj_kind: str):
        super().__init__(pid, False)
        self.impl = impl
        self.obj_kind = obj_kind

    def deliver(self, sender, msg):
        if not isinstance(msg.body, Proposal):
            out, accepted = self.impl.on_message(sender, msg)
            return out, accepted
        prop: Proposal = msg.body
        prop_v = join_ledger_values(prop.obj_ledger, prop.conf_ledger, self.obj_kind)
        fake_value = ObjectValue.growset(["forged"]) if self.obj_kind == GROWSET else ObjectValue.maxreg(10**9)
        from .messages import entry_preimage

        preimage = entry_preimage(self.pid, fake_value)
        bad_sig = Signature(self.pid, 0, hashlib.sha256(preimage).hexdigest(), "plain", "00" * 32)
        delta = Ledger.of([SignedValue(self.pid, fake_value, bad_sig)])
        nack = Nack(prop_v.digest, delta, Ledger(), prop.prop_nb)
        t = max(self.impl.t_r, prop.last_dec.conf.cardinality)
        try:
            reply = sign_message(self.impl.handle, nack, fs_timestamp=t)
        except DowngradeRefused:
            return [], False
        return [(sender, reply)], False

    def digest(self):
        return self.impl.state_digest()


class StaleKeyReplayNode(Node):
    """Honest until evicted; afterwards replays pre-eviction ACKs and tries to
    sign at its old timestamp (which the key oracle refuses)."""

    def __init__(self, pid, impl: Replica):
        super().__init__(pid, False)
        self.impl = impl
        self.stored_acks: list[SignedMessage] = []
        self.evicted = False
        self.evicted_step: int | None = None  # stamped by the engine
        self.stale_digests: set[str] = set()

    def _replay(self):
        # attempt to forge a fresh ACK below the current key floor, then
        # re-send everything signed before the eviction
        stale_t = min((m.sig.timestamp for m in self.stored_acks), default=0)
        stale_t = min(stale_t, max(0, self.impl.handle.current_timestamp - 1))
        try:
            self.impl.handle.fs_sign(b"stale", stale_t)
        except DowngradeRefused:
            pass
        return [(BROADCAST, m) for m in self.stored_acks]

    def deliver(self, sender, msg):
        if self.evicted:
            return (self._replay() if isinstance(msg.body, (Proposal, Decision)) else []), False
        out, accepted = self.impl.on_message(sender, msg)
        for _, m in out:
            if isinstance(m.body, Ack):
                self.stored_acks.append(m)
        if self.pid in self.impl.last_dec.conf.excluded:
            self.evicted = True
            self.stale_digests = {m.digest for m in self.stored_acks}
            return list(out) + self._replay(), accepted
        return out, accepted

    def digest(self):
        return self.impl.state_digest()


class A1EquivocateNode(Node):
    """One-shot Byzantine replica keeping an independent fork per client, so it
    can ACK incomparable values to different proposers."""

    def __init__(self, pid, oracle, obj_kind):
        super().__init__(pid, False)
        self._oracle = oracle
        self._obj_kind = obj_kind
        self.forks: dict[str, A1Replica] = {}

    def deliver(self, sender, msg):
        if not isinstance(msg.body, A1Proposal):
            return [], False
        if sender not in self.forks:
            self.forks[sender] = A1Replica(self.pid, self._oracle, self._obj_kind)
        return self.forks[sender].on_message(sender, msg)

    def digest(self):
        parts = ",".join(f"{c}:{f.state_digest()}" for c, f in sorted(self.forks.items()))
        return hashlib.sha256(parts.encode()).hexdigest()[:16]


class DoubleProposeClientNode(Node):
    """One-shot Byzantine client: signs two distinct inputs and sends each
    ledger to half of the replicas."""

    kind = "client"
    is_client = True

    def __init__(self, pid, oracle, obj_kind, replica_ids, value_a: ObjectValue, value_b: ObjectValue):
        super().__init__(pid, False)
        self.handle = oracle.handle(pid)
        self.replica_ids = tuple(sorted(replica_ids))
        self.value_a = value_a
        self.value_b = value_b
        self.sent = False

    def poll(self):
        if self.sent:
            return []
        self.sent = True
        ledger_a = Ledger.of([sign_value(self.handle, self.value_a)])
        ledger_b = Ledger.of([sign_value(self.handle, self.value_b)])
        half = len(self.replica_ids) // 2 or 1
        msg_a = sign_message(self.handle, A1Proposal(ledger_a, 0))
        msg_b = sign_message(self.handle, A1Proposal(ledger_b, 0))
        out = [(r, msg_a) for r in self.replica_ids[:half]]
        out += [(r, msg_b) for r in self.replica_ids[half:]]
        return out

    def digest(self):
        return "byz-double" if self.sent else "byz-idle"


# ---------------------------------------------------------------------------
# Trace


@dataclass
class Trace:
    header: dict
    rows: list
    summary: dict
    # live objects for in-process checkers; never serialized
    scenario: Scenario = None
    oracle: SignatureOracle = None
    nodes: dict = None
    decided: list = None  # [{client, index, step, value, last_dec_before, pend_conf_before}]
    a1_entries: frozenset = frozenset()  # ledger entries observed on the wire (one-shot runs)

    @property
    def quiescent(self) -> bool:
        return self.summary["quiescent"]

    @property
    def tags(self) -> list:
        return self.header["tags"]

    def to_jsonl(self) -> str:
        dump = lambda o: json.dumps(o, sort_keys=True, separators=(",", ":"))
        lines = [dump({"kind": "header", **self.header})]
        lines += [dump({"kind": "row", **row}) for row in self.rows]
        lines.append(dump({"kind": "summary", **self.summary}))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Engine


class Engine:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.oracle = SignatureOracle(self.seed)
        self.queue: list = []
        self.seq = 0
        self.step = 0
        self.rows: list = []
        self.chan_last: dict = {}
        self.decided: list = []
        self._decided_seen: dict = {}
        self.a1_entries: set = set()  # every ledger entry observed on the wire
        self.nodes: dict[str, Node] = {}
        self._client_specs = {c.id: c for c in scenario.clients}
        self._build_nodes()

    # -- construction ----------------------------------------------------------

    def _build_nodes(self):
        s = self.scenario
        init_conf = s.initial_configuration()
        replica_ids = [r.id for r in s.replicas]
        for r in s.replicas:
            if s.protocol == "a1la":
                if r.role == ROLE_BYZANTINE and r.behavior == "equivocate-ack":
                    self.nodes[r.id] = A1EquivocateNode(r.id, self.oracle, s.obj_kind)
                elif r.role == ROLE_BYZANTINE:  # silent-drop
                    self.nodes[r.id] = SilentDropNode(r.id, A1Replica(r.id, self.oracle, s.obj_kind))
                else:
                    impl = A1Replica(r.id, self.oracle, s.obj_kind)
                    self.nodes[r.id] = A1ReplicaNode(r.id, r.role == ROLE_CORRECT, r.crash_at_step, impl)
                continue
            make = lambda rid=r.id: Replica(rid, init_conf, self.oracle, s.obj_kind)
            if r.role == ROLE_BYZANTINE:
                if r.behavior == "equivocate-ack":
                    self.nodes[r.id] = EquivocateAckNode(r.id, make)
                elif r.behavior == "forge-ledger-entry":
                    self.nodes[r.id] = ForgeLedgerEntryNode(r.id, make(), s.obj_kind)
                elif r.behavior == "stale-key-replay":
                    self.nodes[r.id] = StaleKeyReplayNode(r.id, make())
                else:
                    self.nodes[r.id] = SilentDropNode(r.id, make())
            else:
                self.nodes[r.id] = ReplicaNode(r.id, r.role == ROLE_CORRECT, r.crash_at_step, make())
        for c in s.clients:
            if s.protocol == "a1la":
                if c.role == ROLE_BYZANTINE:
                    va = s.object_value(c.init or [])
                    vb = s.object_value(c.init2 or [])
                    self.nodes[c.id] = DoubleProposeClientNode(c.id, self.oracle, s.obj_kind, replica_ids, va, vb)
                else:
                    init_v = s.object_value(c.init) if c.init is not None else None
                    impl = A1Client(c.id, replica_ids, self.oracle, s.obj_kind, init_v)
                    self.nodes[c.id] = A1ClientNode(c.id, impl)
            else:
                impl = Client(c.id, init_conf, self.oracle, s.obj_kind)
                self.nodes[c.id] = ClientNode(c.id, impl)

    # -- scheduling --------------------------------------------------------------

    def _push(self, time: int, item):
        heapq.heappush(self.queue, (time, self.seq, item))
        self.seq += 1

    def _schedule_inputs(self):
        s = self.scenario
        for c in s.clients:
            if s.protocol == "a1la":
                at = c.inputs[0].get("at", 0) if c.inputs else 0
                self._push(at, ("input", c.id, None))
                continue
            for idx, item in enumerate(c.inputs):
                self._push(int(item.get("at", 0)), ("input", c.id, idx))

    def _send(self, now: int, sender: str, dest: str, msg: SignedMessage):
        if dest == BROADCAST:
            for pid in sorted(self.nodes):
                if pid != sender:
                    self._send(now, sender, pid, msg)
            return
        if dest not in self.nodes:
            return
        delay = self.rng.randint(1, max(1, self.scenario.max_delay))
        delay += int(self.scenario.link_delays.get(f"{sender}->{dest}", 0))
        t = now + delay
        if not self.scenario.reorder:
            chan = (sender, dest)
            t = max(t, self.chan_last.get(chan, 0))
            self.chan_last[chan] = t
        self._push(t, ("deliver", sender, dest, msg))

    def _sniff(self, msg: SignedMessage):
        body = msg.body
        if isinstance(body, A1Proposal):
            self.a1_entries |= body.in_ledger.entries
        elif isinstance(body, A1Nack):
            self.a1_entries |= body.d_ledger.entries

    # -- main loop -----------------------------------------------------------------

    def run(self) -> Trace:
        s = self.scenario
        availability_ok = s.availability_ok()
        self._schedule_inputs()
        truncated = False

        while self.queue:
            if self.step >= s.max_steps:
                truncated = True
                break
            time, _, item = heapq.heappop(self.queue)
            self.step += 1
            kind = item[0]
            if kind == "input":
                _, cid, idx = item
                node = self.nodes[cid]
                if s.protocol == "rala" and idx is not None:
                    raw = self._client_specs[cid].inputs[idx]
                    obj = s.object_value(raw["obj"]) if "obj" in raw else None
                    conf = s.conf_delta(raw["conf"]) if "conf" in raw else None
                    node.impl.enqueue_input(obj, conf)
                outbound = node.poll()
                self._record(time, node, "input", None, True, outbound)
                self._dispatch(time, node.pid, outbound)
            else:
                _, sender, dest, msg = item
                node = self.nodes[dest]
                if node.crash_step is not None and self.step >= node.crash_step:
                    self._record(time, node, f"deliver:{msg.body.type}", msg, False, [], note="crashed")
                    continue
                self._sniff(msg)
                outbound, accepted = node.deliver(sender, msg)
                if node.is_client:
                    outbound = list(outbound) + list(node.poll())
                self._record(time, node, f"deliver:{msg.body.type}", msg, accepted, outbound, sender=sender)
                self._dispatch(time, node.pid, outbound)
                if isinstance(node, StaleKeyReplayNode) and node.evicted and node.evicted_step is None:
                    node.evicted_step = self.step
            self._collect_decisions(node)

        quiescent = not truncated and self._all_clients_settled()
        tags = []
        if not availability_ok:
            tags.append("availability-violated")
        if truncated or not quiescent:
            tags.append("non-quiescent")

        header = {
            "scenario": s.digest(),
            "protocol": s.protocol,
            "seed": self.seed,
            "tags": tags,
        }
        summary = self._summary(quiescent, availability_ok)
        return Trace(header, self.rows, summary, s, self.oracle, self.nodes, self.decided, frozenset(self.a1_entries))

    def _dispatch(self, now: int, sender: str, outbound):
        for dest, msg in outbound:
            self._send(now, sender, dest, msg)

    def _all_clients_settled(self) -> bool:
        for node in self.nodes.values():
            if not (node.is_client and node.correct):
                continue
            impl = node.impl
            if self.scenario.protocol == "rala":
                if impl.status != WAITING or impl.in_buffer:
                    return False
            else:
                if impl.started and impl.status != "passive":
                    return False
        return True

    def _collect_decisions(self, node: Node):
        if not (node.is_client and hasattr(node, "impl") and hasattr(node.impl, "decided_log")):
            return
        log = node.impl.decided_log
        seen = self._decided_seen.get(node.pid, 0)
        for rec in log[seen:]:
            self.decided.append(
                {
                    "client": node.pid,
                    "index": rec["index"],
                    "step": self.step,
                    "value": rec["value"],
                    "last_dec_before": rec["last_dec_before"],
                    "pend_conf_before": rec["pend_conf_before"],
                }
            )
        self._decided_seen[node.pid] = len(log)

    def _record(self, time, node, event, msg, accepted, outbound, sender=None, note=None):
        row = {
            "step": self.step,
            "time": time,
            "process": node.pid,
            "event": event,
            "digest": node.digest(),
            "accepted": bool(accepted),
            "out": sorted((d, m.body.type) for d, m in outbound),
        }
        if sender is not None:
            row["from"] = sender
        if msg is not None:
            row["msg"] = msg.digest
        if note:
            row["note"] = note
        if node.is_client:
            row["accused"] = node.accused()
        self.rows.append(row)

    def _summary(self, quiescent, availability_ok) -> dict:
        s = self.scenario
        clients = {}
        for node in self.nodes.values():
            if not node.is_client or not hasattr(node, "impl"):
                continue
            impl = node.impl
            if s.protocol == "rala":
                clients[node.pid] = {
                    "status": impl.status,
                    "lastDec": impl.last_dec.to_json(),
                    "outV": [v.to_json() for v in impl.out_v],
                    "accused": sorted(impl.accusation.accused),
                    "proposeCount": impl.propose_count,
                }
            else:
                clients[node.pid] = {
                    "status": impl.status,
                    "outV": impl.out_v.to_json() if impl.out_v is not None else None,
                    "accused": sorted(impl.accusation.accused),
                    "proposeCount": impl.propose_count,
                }
        stale = sorted(
            d for node in self.nodes.values() if isinstance(node, StaleKeyReplayNode) for d in node.stale_digests
        )
        return {
            "quiescent": quiescent,
            "availability_ok": availability_ok,
            "steps": self.step,
            "clients": clients,
            "byzantine": sorted(s.byzantine_ids()),
            "downgrade_refusals": len(self.oracle.downgrade_attempts),
            "stale_msg_digests": stale,
            "decided": [
                {
                    "client": d["client"],
                    "index": d["index"],
                    "step": d["step"],
                    "value_digest": d["value"].digest if hasattr(d["value"], "digest") else None,
                }
                for d in self.decided
            ],
        }


def run(scenario: Scenario, seed: int | None = None) -> Trace:
    """Execute a scenario to quiescence (or max_steps) and return its trace."""
    return Engine(scenario, seed).run()
