"""Post-hoc trace checkers: protocol properties, lemma checks, decided-state graph.

Each checker evaluates one property predicate over a finished trace and
reports pass/fail plus a witness (first violating step or an explanation).
``applicable_checks`` picks the set that is meaningful for a scenario: for
example value comparability is only promised in runs without Byzantine
processes, while accusation stability must hold in every run.
"""

from __future__ import annotations

import itertools

from .accountability import verify_proof
from .lattice import LatticeValue, ObjectValue
from .sim import (
    EquivocateAckNode,
    ReplicaNode,
    StaleKeyReplayNode,
    Trace,
)


def _correct_clients(trace: Trace):
    return {
        pid: node.impl
        for pid, node in trace.nodes.items()
        if node.is_client and node.correct and hasattr(node, "impl")
    }


def _correct_replicas(trace: Trace):
    out = {}
    for pid, node in trace.nodes.items():
        if isinstance(node, ReplicaNode) and node.correct:
            out[pid] = node.impl
    return out


def _ok(witness=None):
    return {"ok": True, "witness": witness}


def _fail(witness):
    return {"ok": False, "witness": witness}


# ---------------------------------------------------------------------------
# Shared checks (both protocols)


def check_stability(trace: Trace):
    """Per-client accused sets only grow along the trace."""
    last: dict[str, set] = {}
    for row in trace.rows:
        if "accused" not in row:
            continue
        cur = set(row["accused"])
        prev = last.get(row["process"], set())
        if not prev <= cur:
            return _fail(f"step {row['step']}: {row['process']} dropped accusations {sorted(prev - cur)}")
        last[row["process"]] = cur
    return _ok()


def check_accuracy(trace: Trace):
    """Accused sets name only Byzantine processes and every proof verifies."""
    byz = set(trace.summary["byzantine"])
    for cid, impl in _correct_clients(trace).items():
        extra = impl.accusation.accused - byz
        if extra:
            return _fail(f"{cid} accused non-Byzantine processes {sorted(extra)}")
        if not verify_proof(impl.accusation, trace.oracle):
            return _fail(f"{cid} holds an accusation that fails verification")
    return _ok()


def check_agreement(trace: Trace):
    """At quiescence all correct clients hold identical accused sets."""
    if not trace.quiescent:
        return _ok("skipped: trace not quiescent")
    sets = {cid: frozenset(impl.accusation.accused) for cid, impl in _correct_clients(trace).items()}
    distinct = set(sets.values())
    if len(distinct) > 1:
        return _fail({cid: sorted(s) for cid, s in sets.items()})
    return _ok()


# ---------------------------------------------------------------------------
# Long-lived protocol checks


def check_comparability(trace: Trace):
    """Every pair of values learned by correct clients is lattice-comparable."""
    learned = []
    for cid, impl in _correct_clients(trace).items():
        for i, v in enumerate(impl.out_v):
            learned.append((cid, i, v))
    for (c1, i1, v1), (c2, i2, v2) in itertools.combinations(learned, 2):
        if not v1.comparable(v2):
            return _fail(f"{c1}[{i1}] and {c2}[{i2}] are incomparable")
    return _ok()


def check_validity(trace: Trace):
    """Learned values are joins of proposed inputs: bounded above by the join
    of everything scheduled, and bounded below by the client's own inputs."""
    s = trace.scenario
    universe = LatticeValue(ObjectValue.bottom(s.obj_kind), s.initial_configuration())
    for c in s.clients:
        for item in c.inputs:
            if "obj" in item:
                universe = universe.join(LatticeValue(s.object_value(item["obj"]), universe.conf))
            if "conf" in item:
                universe = universe.join(LatticeValue(universe.obj, universe.conf.join(s.conf_delta(item["conf"]))))
    for cid, impl in _correct_clients(trace).items():
        for i, v in enumerate(impl.out_v):
            if not v.leq(universe):
                return _fail(f"{cid}[{i}] contains a value nobody proposed")
        for idx, val in impl.own_input_log:
            if len(impl.out_v) > idx:
                target = impl.out_v[-1]
                joined = isinstance(val, ObjectValue) and val.leq(target.obj)
                joined = joined or (not isinstance(val, ObjectValue) and val.leq(target.conf))
                if not joined:
                    return _fail(f"{cid}: input before decision {idx} missing from final learned value")
    return _ok()


def check_liveness(trace: Trace):
    """Every scheduled input of a correct client ends up in every correct
    client's final learned value.  Needs quiescence and availability."""
    if not trace.quiescent:
        return _fail("trace not quiescent")
    if not trace.summary["availability_ok"]:
        return _ok("skipped: availability precondition violated")
    s = trace.scenario
    byz = set(trace.summary["byzantine"])
    clients = _correct_clients(trace)
    for c in s.clients:
        if c.id in byz:
            continue
        for item in c.inputs:
            obj = s.object_value(item["obj"]) if "obj" in item else None
            conf = s.conf_delta(item["conf"]) if "conf" in item else None
            for cid, impl in clients.items():
                if obj is not None and not obj.leq(impl.last_dec.obj):
                    return _fail(f"input of {c.id} not in {cid}'s learned value")
                if conf is not None and not conf.leq(impl.last_dec.conf):
                    return _fail(f"reconfiguration by {c.id} not in {cid}'s learned value")
    return _ok()


def check_completeness(trace: Trace):
    """If correct clients decided incomparable values, each of them ends the
    run accusing a nonempty set (vacuously true in benign runs)."""
    clients = _correct_clients(trace)
    forked = set()
    for (c1, i1), (c2, i2) in itertools.combinations(
        [(cid, i) for cid, impl in clients.items() for i in range(len(impl.out_v))], 2
    ):
        if not clients[c1].out_v[i1].comparable(clients[c2].out_v[i2]):
            forked.add(c1)
            forked.add(c2)
    for cid in sorted(forked):
        if not clients[cid].accusation.accused:
            return _fail(f"{cid} decided on a fork but accuses nobody")
    return _ok(f"forked clients: {sorted(forked)}" if forked else None)


def check_monotonicity(trace: Trace):
    """Replica repV/lastDec never decrease and pendConf entries only leave
    when absorbed; asserted inline by replicas, surfaced here."""
    for rid, impl in _correct_replicas(trace).items():
        if getattr(impl, "monotonicity_violations", None):
            return _fail(f"{rid}: {impl.monotonicity_violations[0]}")
    for node in trace.nodes.values():
        if isinstance(node, EquivocateAckNode):
            for cid, fork in node.forks.items():
                if fork.monotonicity_violations:
                    return _fail(f"{node.pid} fork {cid}: {fork.monotonicity_violations[0]}")
    return _ok()


def check_eviction(trace: Trace):
    """No stale-timestamped replayed message is ever accepted, and every
    attempt to sign below the key floor was refused."""
    stale = set(trace.summary["stale_msg_digests"])
    replayers = [n for n in trace.nodes.values() if isinstance(n, StaleKeyReplayNode)]
    if not replayers:
        return _ok("skipped: no evicted replayer in scenario")
    evicted_at = min((n.evicted_step for n in replayers if n.evicted_step is not None), default=None)
    if evicted_at is not None:
        for row in trace.rows:
            if row["step"] > evicted_at and row.get("msg") in stale and row["accepted"]:
                return _fail(f"step {row['step']}: {row['process']} accepted a stale replayed message")
    if any(n.evicted for n in replayers) and trace.summary["downgrade_refusals"] == 0:
        return _fail("evicted replica never hit the key floor")
    return _ok(f"refusals: {trace.summary['downgrade_refusals']}")


# ---------------------------------------------------------------------------
# Decided-state graph


class DecidedGraph:
    """Graph over first-decided states; forks witness inconsistency."""

    def __init__(self, vertices, edges, bottom_key):
        self.vertices = vertices  # key -> {"value": LatticeValue, "step", "clients"}
        self.edges = edges  # set of (key, key)
        self.bottom_key = bottom_key

    def reachable(self, a, b) -> bool:
        seen, stack = set(), [a]
        while stack:
            cur = stack.pop()
            if cur == b:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(y for x, y in self.edges if x == cur)
        return False

    def to_dot(self) -> str:
        lines = ["digraph decided_states {"]
        for key, v in sorted(self.vertices.items()):
            label = "bottom" if key == self.bottom_key else f"{key[:8]}\\n{','.join(sorted(v['clients']))}"
            lines.append(f'  "{key[:12]}" [label="{label}"];')
        for a, b in sorted(self.edges):
            lines.append(f'  "{a[:12]}" -> "{b[:12]}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _conf_comb(last_dec_before: LatticeValue, pend_conf_before):
    """All configurations the deciding client could have been covering: the
    prior decided configuration joined with every subset of pending ones."""
    pend = sorted(pend_conf_before, key=lambda c: c.canonical_bytes)
    combos = set()
    for k in range(len(pend) + 1):
        for combo in itertools.combinations(pend, k):
            conf = last_dec_before.conf
            for d in combo:
                conf = conf.join(d)
            combos.add(conf)
    return combos


def build_gs(trace: Trace) -> DecidedGraph:
    if trace.scenario.protocol != "rala":
        raise ValueError("decided-state graph is defined for the long-lived protocol only")
    bottom = LatticeValue(ObjectValue.bottom(trace.scenario.obj_kind), trace.scenario.initial_configuration())
    bottom_key = bottom.digest
    vertices = {bottom_key: {"value": bottom, "step": 0, "clients": set(), "records": []}}
    for rec in trace.decided:
        key = rec["value"].digest
        if key not in vertices:
            vertices[key] = {"value": rec["value"], "step": rec["step"], "clients": set(), "records": []}
        vertices[key]["clients"].add(rec["client"])
        vertices[key]["records"].append(rec)

    edges = set()
    for key, v in vertices.items():
        for rec in v["records"]:
            combos = _conf_comb(rec["last_dec_before"], rec["pend_conf_before"])
            for other_key, other in vertices.items():
                if other_key == key:
                    continue
                s, s_prime = other["value"], v["value"]
                if s.leq(s_prime) and s != s_prime and s.conf in combos:
                    edges.add((other_key, key))
    return DecidedGraph(vertices, edges, bottom_key)


def check_gs_fork(trace: Trace):
    """Path-disconnected decided states only occur together with an accusation."""
    graph = build_gs(trace)
    any_accused = any(impl.accusation.accused for impl in _correct_clients(trace).values())
    keys = [k for k in graph.vertices if k != graph.bottom_key]
    for a, b in itertools.combinations(keys, 2):
        if not graph.reachable(a, b) and not graph.reachable(b, a):
            if not any_accused:
                return _fail(f"fork between decided states {a[:8]} and {b[:8]} without any accusation")
    return _ok()


def check_gs_chain(trace: Trace):
    """Decided states after the last reconfiguration and last accusation form a chain."""
    last_reconf_step = 0
    prev_conf = trace.scenario.initial_configuration()
    for rec in sorted(trace.decided, key=lambda r: r["step"]):
        if rec["value"].conf != prev_conf and not rec["value"].conf.leq(prev_conf):
            last_reconf_step = rec["step"]
            prev_conf = rec["value"].conf
    last_accusation_step = 0
    prev: dict[str, set] = {}
    for row in trace.rows:
        if "accused" in row:
            cur = set(row["accused"])
            if cur - prev.get(row["process"], set()):
                last_accusation_step = row["step"]
            prev[row["process"]] = cur
    cutoff = max(last_reconf_step, last_accusation_step)
    tail = [r["value"] for r in trace.decided if r["step"] > cutoff]
    for v1, v2 in itertools.combinations(tail, 2):
        if not v1.comparable(v2):
            return _fail(f"incomparable decided states after step {cutoff}")
    return _ok(f"cutoff step {cutoff}, {len(tail)} states after it")


# ---------------------------------------------------------------------------
# One-shot protocol checks


def _a1_signed_values(trace: Trace):
    """Every (signer, value) pair that traveled in a proposal or NACK ledger."""
    out: dict[str, set] = {}
    for entry in trace.a1_entries:
        out.setdefault(entry.signer, set()).add(entry.value)
    return out


def check_a1_one_per_process(trace: Trace):
    """No benign output absorbs two distinct values signed by one process."""
    by_signer = _a1_signed_values(trace)
    for cid, impl in _correct_clients(trace).items():
        if impl.out_v is None:
            continue
        for signer, values in by_signer.items():
            absorbed = {v for v in values if v.leq(impl.out_v)}
            if len(absorbed) > 1:
                return _fail(f"{cid}'s output contains {len(absorbed)} values signed by {signer}")
    return _ok()


def check_a1_validity_cap(trace: Trace):
    """Benign outputs sit between the client's own input and the join of benign
    inputs plus at most one value per Byzantine process."""
    s = trace.scenario
    byz = set(trace.summary["byzantine"])
    by_signer = _a1_signed_values(trace)
    benign_join = ObjectValue.bottom(s.obj_kind)
    for signer, values in by_signer.items():
        if signer not in byz:
            for v in values:
                benign_join = benign_join.join(v)
    for cid, impl in _correct_clients(trace).items():
        if impl.out_v is None:
            continue
        if impl.init_v is not None and not impl.init_v.leq(impl.out_v):
            return _fail(f"{cid}'s own input missing from its output")
        cap = benign_join
        used_byz = 0
        for signer in sorted(byz):
            absorbed = {v for v in by_signer.get(signer, set()) if v.leq(impl.out_v)}
            if len(absorbed) > 1:
                return _fail(f"{cid} absorbed two values from Byzantine {signer}")
            for v in absorbed:
                cap = cap.join(v)
                used_byz += 1
        if used_byz > len(byz):
            return _fail(f"{cid} absorbed more Byzantine values than Byzantine processes")
        if not impl.out_v.leq(cap):
            return _fail(f"{cid}'s output exceeds the join of all legitimately signed inputs")
    return _ok()


def check_a1_consistency(trace: Trace):
    """Outputs of correct clients are totally ordered, or every correct client
    ends the run with a nonempty accusation."""
    if not trace.quiescent:
        return _fail("trace not quiescent")
    clients = _correct_clients(trace)
    outputs = [(cid, impl.out_v) for cid, impl in clients.items() if impl.out_v is not None]
    ordered = all(
        v1.leq(v2) or v2.leq(v1) for (_, v1), (_, v2) in itertools.combinations(outputs, 2)
    )
    if ordered:
        return _ok("outputs totally ordered")
    missing = [cid for cid, impl in clients.items() if not impl.accusation.accused]
    if missing:
        return _fail(f"incomparable outputs but {missing} accuse nobody")
    return _ok("incomparable outputs, all correct clients accuse")


def check_a1_liveness(trace: Trace):
    """Each started correct client decides or accuses, within as many proposal
    rounds as there are distinct values in the system."""
    if not trace.quiescent:
        return _fail("trace not quiescent")
    if not trace.summary["availability_ok"]:
        return _ok("skipped: availability precondition violated")
    distinct = {entry.value for entry in trace.a1_entries}
    bound = max(1, len(distinct))
    for cid, impl in _correct_clients(trace).items():
        if not impl.started:
            continue
        if impl.out_v is None and not impl.accusation.accused:
            return _fail(f"{cid} neither decided nor accused")
        if impl.propose_count > bound:
            return _fail(f"{cid} took {impl.propose_count} rounds for {bound} distinct values")
    return _ok(f"bound {bound}")


# ---------------------------------------------------------------------------
# Registry


RALA_CHECKS = {
    "stability": check_stability,
    "accuracy": check_accuracy,
    "agreement": check_agreement,
    "comparability": check_comparability,
    "validity": check_validity,
    "liveness": check_liveness,
    "completeness": check_completeness,
    "monotonicity": check_monotonicity,
    "eviction": check_eviction,
    "gs-fork": check_gs_fork,
    "gs-chain": check_gs_chain,
}

A1LA_CHECKS = {
    "stability": check_stability,
    "accuracy": check_accuracy,
    "agreement": check_agreement,
    "a1-one-per-process": check_a1_one_per_process,
    "a1-validity-cap": check_a1_validity_cap,
    "a1-consistency": check_a1_consistency,
    "a1-liveness": check_a1_liveness,
}


def applicable_checks(trace: Trace) -> list:
    """Default check set: everything that is promised for this scenario."""
    byz = set(trace.summary["byzantine"])
    if trace.scenario.protocol == "a1la":
        names = ["stability", "accuracy", "agreement", "a1-one-per-process", "a1-validity-cap"]
        if trace.quiescent:
            names += ["a1-consistency", "a1-liveness"]
        return names
    names = ["stability", "accuracy", "agreement", "completeness", "validity", "monotonicity", "gs-fork", "gs-chain"]
    if any(isinstance(n, StaleKeyReplayNode) for n in trace.nodes.values()):
        names.append("eviction")
    if not byz:
        names.append("comparability")
        if trace.quiescent and trace.summary["availability_ok"]:
            names.append("liveness")
    return names


def check_properties(trace: Trace, selected=None) -> dict:
    """Run the selected (or applicable) checks and return a verdict report."""
    registry = A1LA_CHECKS if trace.scenario.protocol == "a1la" else RALA_CHECKS
    names = list(selected) if selected else applicable_checks(trace)
    unknown = [n for n in names if n not in registry]
    if unknown:
        raise KeyError(f"unknown checks for protocol {trace.scenario.protocol}: {unknown}")
    results = {name: registry[name](trace) for name in names}
    return {
        "protocol": trace.scenario.protocol,
        "seed": trace.header["seed"],
        "tags": trace.tags,
        "checks": results,
        "ok": all(r["ok"] for r in results.values()),
    }
