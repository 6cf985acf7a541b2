"""Scenario-driven command line: validate and run protocol scenarios.

Scenarios are JSON files with an explicit version.  `validate` reports every
violation it can find; `run` executes the scenario with a seeded generator
and writes three artifacts into the output directory: `records.jsonl` (one
structured record per shot), `summary.csv` (estimate, stderr, ledger
counters), and `resolved-scenario` (the scenario after flag overrides).
Reruns with identical inputs are byte-identical.

Exit codes: 0 success, 2 parse error, 3 schema error, 4 semantic error,
5 capacity error, 6 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .channels import ChoiProgram, KrausChannel, choi_of
from .distributed import (
    KnitCircuit,
    KnitGate,
    Party,
    ProtocolEngine,
    ResourceLedger,
    knit_estimate,
    pingpong_run,
    remote_cnot,
    run_dbqc,
    run_triparty,
    teleport_state,
)
from .errors import (
    CapacityError,
    ObliqError,
    ScenarioParseError,
    ScenarioSchemaError,
    ScenarioSemanticError,
)
from .gates import gate_from_literal, kraus_from_literal, matrix_from_json
from .oblivious import bell_projector, parity_mix_alpha
from .qmath import MAX_STATE_DIM, RegisterLayout, is_hermitian, projector
from .states import PureState
from .superchannel import oqt_compose_choi

SCENARIO_VERSION = 1
BACKENDS = ("statevector", "densitymatrix")
KINDS = (
    "dbqc",
    "triparty",
    "pingpong",
    "knitting",
    "channel_composition",
    "script",
)


# --- literal helpers ---


def state_from_literal(obj, where: str) -> np.ndarray:
    """Resolve a state literal to a normalized vector."""
    if isinstance(obj, dict) and "basis" in obj:
        dim = obj.get("dim")
        if not isinstance(dim, int) or dim < 2:
            raise ScenarioSchemaError(f"{where}: basis state needs an integer dim >= 2")
        idx = obj["basis"]
        if not isinstance(idx, int) or not 0 <= idx < dim:
            raise ScenarioSchemaError(f"{where}: basis index {idx} out of range")
        vec = np.zeros(dim, dtype=complex)
        vec[idx] = 1.0
        return vec
    if isinstance(obj, dict) and "vector" in obj:
        vec = np.array(
            [
                complex(c, 0.0) if isinstance(c, (int, float)) else complex(c[0], c[1])
                for c in obj["vector"]
            ],
            dtype=complex,
        )
        norm = np.linalg.norm(vec)
        if abs(norm - 1.0) > 1e-6:
            raise ScenarioSchemaError(f"{where}: state vector norm {norm:.6g} is not 1")
        return vec / norm
    raise ScenarioSchemaError(f"{where}: unrecognized state literal")


def channel_from_literal(obj, where: str) -> KrausChannel:
    from .channels import amplitude_damping_channel, dephasing_channel, depolarizing_channel

    if isinstance(obj, dict) and "channel" in obj:
        name = obj["channel"]
        if name == "dephasing":
            return dephasing_channel()
        if name == "depolarizing":
            return depolarizing_channel(int(obj.get("dim", 2)))
        if name == "amplitude_damping":
            return amplitude_damping_channel(float(obj.get("gamma", 0.5)))
        raise ScenarioSchemaError(f"{where}: unknown channel name {name!r}")
    if isinstance(obj, dict) and "kraus" in obj:
        try:
            return KrausChannel(kraus_from_literal(obj))
        except ObliqError as exc:
            raise ScenarioSchemaError(f"{where}: {exc}") from exc
    raise ScenarioSchemaError(f"{where}: unrecognized channel literal")


# --- validation ---


def load_scenario(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{path}: top level must be an object")
    return data


def _schema_violations(sc: dict) -> list[str]:
    out = []
    if sc.get("version") != SCENARIO_VERSION:
        out.append(f"version must be {SCENARIO_VERSION}")
    seed = sc.get("seed")
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        out.append("seed must be a 64-bit unsigned integer")
    shots = sc.get("shots")
    if not isinstance(shots, int) or shots < 1:
        out.append("shots must be an integer >= 1")
    if sc.get("backend", "densitymatrix") not in BACKENDS:
        out.append(f"backend must be one of {BACKENDS}")
    tol = sc.get("tolerance", 1e-9)
    if not isinstance(tol, (int, float)) or tol <= 0:
        out.append("tolerance must be a positive number")
    kind = sc.get("kind")
    if kind not in KINDS:
        out.append(f"kind must be one of {KINDS}")
        return out

    def check_gate(obj, where):
        try:
            gate_from_literal(obj)
        except ObliqError as exc:
            out.append(f"{where}: {exc}")

    def check_state(obj, where):
        try:
            state_from_literal(obj, where)
        except ObliqError as exc:
            out.append(str(exc))

    if kind == "dbqc":
        for key in ("input_state", "readout_state"):
            if key not in sc:
                out.append(f"dbqc scenario needs {key}")
            else:
                check_state(sc[key], key)
        for key in ("alice_programs", "bob_programs"):
            progs = sc.get(key)
            if not isinstance(progs, list) or not progs:
                out.append(f"{key} must be a non-empty list of gate literals")
            else:
                for n, g in enumerate(progs):
                    check_gate(g, f"{key}[{n}]")
    elif kind == "triparty":
        if sc.get("scheme") not in ("I", "II"):
            out.append("scheme must be 'I' or 'II'")
        for key in ("psi_a", "psi_b", "readout_state"):
            if key not in sc:
                out.append(f"triparty scenario needs {key}")
            else:
                check_state(sc[key], key)
        for key in ("a_program", "b_program", "nonlocal_program"):
            if key not in sc:
                out.append(f"triparty scenario needs {key}")
            else:
                check_gate(sc[key], key)
    elif kind == "pingpong":
        for key in ("input_state", "readout_state"):
            if key not in sc:
                out.append(f"pingpong scenario needs {key}")
            else:
                check_state(sc[key], key)
        progs = sc.get("programs")
        if not isinstance(progs, list) or not progs:
            out.append("programs must be a non-empty list of gate literals")
        else:
            for n, g in enumerate(progs):
                check_gate(g, f"programs[{n}]")
        if sc.get("blocks", 2) != 2:
            out.append("blocks must be 2")
    elif kind == "knitting":
        if sc.get("mode", "exact_sum") not in ("exact_sum", "sampled"):
            out.append("mode must be exact_sum or sampled")
        nq = sc.get("num_qudits")
        if not isinstance(nq, int) or nq < 1:
            out.append("num_qudits must be an integer >= 1")
        ld = sc.get("local_dim", 2)
        if not isinstance(ld, int) or ld < 2:
            out.append("local_dim must be an integer >= 2")
        gates = sc.get("gates")
        if not isinstance(gates, list):
            out.append("gates must be a list")
        else:
            for n, g in enumerate(gates):
                if not isinstance(g, dict) or "targets" not in g:
                    out.append(f"gates[{n}] needs targets")
                    continue
                check_gate(g, f"gates[{n}]")
        if "observable" not in sc:
            out.append("knitting scenario needs an observable")
        else:
            try:
                obs = matrix_from_json(sc["observable"])
                if not is_hermitian(obs):
                    out.append("observable must be Hermitian")
            except ObliqError as exc:
                out.append(f"observable: {exc}")
        if "input_state" in sc:
            check_state(sc["input_state"], "input_state")
    elif kind == "channel_composition":
        chans = sc.get("channels")
        if not isinstance(chans, list) or len(chans) != 2:
            out.append("channels must be a list of exactly two channel literals")
        else:
            for n, ch in enumerate(chans):
                try:
                    channel_from_literal(ch, f"channels[{n}]")
                except ObliqError as exc:
                    out.append(str(exc))
    elif kind == "script":
        steps = sc.get("steps")
        if not isinstance(steps, list) or not steps:
            out.append("script scenario needs a non-empty steps list")
        else:
            for n, step in enumerate(steps):
                if not isinstance(step, dict) or "op" not in step:
                    out.append(f"steps[{n}]: each step needs an op")
        if not isinstance(sc.get("parties"), list) or not sc.get("parties"):
            out.append("script scenario needs a parties list")
    return out


_SCRIPT_OPS = (
    "prepare_state",
    "prepare_program",
    "distribute_ebit",
    "local_gate",
    "isi_inject",
    "oqt_link",
    "bell_measure_qt",
    "remote_cnot",
    "final_measure",
    "broadcast",
)


def _script_semantic_violations(sc: dict) -> list[str]:
    out = []
    parties = list(sc.get("parties", []))
    held: dict[str, str] = {}
    dims: dict[str, int] = {}
    ebits: dict[int, dict] = {}

    def need_register(step_no, label, party=None):
        if label not in held:
            out.append(f"step {step_no}: register {label!r} is not live")
            return False
        if party is not None and held[label] != party:
            out.append(
                f"step {step_no}: register {label!r} belongs to {held[label]!r}, not {party!r}"
            )
            return False
        return True

    for n, step in enumerate(sc.get("steps", [])):
        op = step.get("op")
        if op not in _SCRIPT_OPS:
            out.append(f"step {n}: unknown op {op!r}")
            continue
        party = step.get("party") or step.get("party_a") or step.get("control_party")
        if party is not None and party not in parties:
            out.append(f"step {n}: unknown party {party!r}")
            continue
        if op == "prepare_state":
            label = step.get("label")
            if label in held:
                out.append(f"step {n}: register {label!r} already live")
            try:
                vec = state_from_literal(step.get("state"), f"step {n}")
                held[label] = party
                dims[label] = vec.shape[0]
            except ObliqError as exc:
                out.append(str(exc))
        elif op == "prepare_program":
            for key in ("out_label", "in_label"):
                if step.get(key) in held:
                    out.append(f"step {n}: register {step.get(key)!r} already live")
            try:
                gate = gate_from_literal(step.get("gate"))
                held[step.get("out_label")] = party
                held[step.get("in_label")] = party
                dims[step.get("out_label")] = gate.shape[0]
                dims[step.get("in_label")] = gate.shape[0]
            except ObliqError as exc:
                out.append(f"step {n}: {exc}")
        elif op == "distribute_ebit":
            rid = step.get("resource")
            if rid in ebits:
                out.append(f"step {n}: ebit {rid} distributed twice")
            pb = step.get("party_b")
            if pb not in parties:
                out.append(f"step {n}: unknown party {pb!r}")
                continue
            d = step.get("dim", 2)
            la, lb = step.get("label_a"), step.get("label_b")
            ebits[rid] = {"used": False}
            held[la] = party
            held[lb] = pb
            dims[la] = dims[lb] = d
        elif op in ("oqt_link", "bell_measure_qt", "remote_cnot"):
            rid = step.get("resource")
            if rid not in ebits:
                out.append(f"step {n}: ebit {rid} was never distributed")
            elif ebits[rid]["used"]:
                out.append(f"step {n}: ebit {rid} already consumed")
            else:
                ebits[rid]["used"] = True
            for key in ("labels", "state_label", "control", "target"):
                val = step.get(key)
                labs = val if isinstance(val, list) else [val] if val else []
                for lab in labs:
                    need_register(n, lab)
        elif op == "local_gate":
            try:
                gate_from_literal(step.get("gate"))
            except ObliqError as exc:
                out.append(f"step {n}: {exc}")
            for lab in step.get("labels", []):
                need_register(n, lab, party)
        elif op == "isi_inject":
            if need_register(n, step.get("in_label"), party):
                try:
                    state_from_literal(step.get("state"), f"step {n}")
                except ObliqError as exc:
                    out.append(str(exc))
        elif op == "final_measure":
            for lab in step.get("labels", []):
                need_register(n, lab, party)
            try:
                state_from_literal(step.get("state"), f"step {n}")
            except ObliqError as exc:
                out.append(str(exc))
        elif op == "broadcast":
            if not isinstance(step.get("bits"), int) or step.get("bits") < 0:
                out.append(f"step {n}: bits must be a non-negative integer")
    return out


def _semantic_violations(sc: dict) -> list[str]:
    out = []
    kind = sc.get("kind")
    if kind == "dbqc":
        d = len(state_from_literal(sc["input_state"], "input_state"))
        if len(state_from_literal(sc["readout_state"], "readout_state")) != d:
            out.append("readout_state dimension differs from input_state")
        for key in ("alice_programs", "bob_programs"):
            for n, g in enumerate(sc[key]):
                if gate_from_literal(g).shape[0] != d:
                    out.append(f"{key}[{n}] does not act on dimension {d}")
    elif kind == "triparty":
        da = len(state_from_literal(sc["psi_a"], "psi_a"))
        db = len(state_from_literal(sc["psi_b"], "psi_b"))
        do = len(state_from_literal(sc["readout_state"], "readout_state"))
        if do != da * db:
            out.append("readout_state must live on the joint A x B space")
        if gate_from_literal(sc["a_program"]).shape[0] != da:
            out.append("a_program does not act on psi_a")
        if gate_from_literal(sc["b_program"]).shape[0] != db:
            out.append("b_program does not act on psi_b")
        u = gate_from_literal(sc["nonlocal_program"])
        if u.shape[0] != da * db:
            out.append("nonlocal_program must act on the joint A x B space")
        elif sc.get("scheme") == "II":
            top, off1, off2 = u[:db, :db], u[:db, db:], u[db:, :db]
            if (
                np.abs(top - np.eye(db)).max() > 1e-9
                or np.abs(off1).max() > 1e-12
                or np.abs(off2).max() > 1e-12
            ):
                out.append("scheme II needs a controlled nonlocal gate [[I,0],[0,V]]")
    elif kind == "pingpong":
        d = len(state_from_literal(sc["input_state"], "input_state"))
        if len(state_from_literal(sc["readout_state"], "readout_state")) != d:
            out.append("readout_state dimension differs from input_state")
        for n, g in enumerate(sc["programs"]):
            if gate_from_literal(g).shape[0] != d:
                out.append(f"programs[{n}] does not act on dimension {d}")
    elif kind == "knitting":
        nq, ld = sc["num_qudits"], sc.get("local_dim", 2)
        dim = ld**nq
        if dim > MAX_STATE_DIM:
            return out  # width checks are meaningless; the capacity stage reports it
        for n, g in enumerate(sc.get("gates", [])):
            targets = g.get("targets", [])
            if not all(isinstance(t, int) and 0 <= t < nq for t in targets):
                out.append(f"gates[{n}]: targets out of range")
                continue
            if len(set(targets)) != len(targets):
                out.append(f"gates[{n}]: repeated target")
                continue
            mat = gate_from_literal(g)
            if mat.shape[0] != ld ** len(targets):
                out.append(f"gates[{n}]: matrix does not match its targets")
            if g.get("cut") and len(targets) != 2:
                out.append(f"gates[{n}]: cut gates must touch exactly two qudits")
        obs = matrix_from_json(sc["observable"])
        if obs.shape[0] != dim:
            out.append("observable does not match the circuit width")
        if "input_state" in sc:
            if len(state_from_literal(sc["input_state"], "input_state")) != dim:
                out.append("input_state does not match the circuit width")
    elif kind == "channel_composition":
        c1 = channel_from_literal(sc["channels"][0], "channels[0]")
        c2 = channel_from_literal(sc["channels"][1], "channels[1]")
        if c1.out_dim != c2.in_dim:
            out.append("channels cannot be chained: dimensions mismatch")
    elif kind == "script":
        out.extend(_script_semantic_violations(sc))
    return out


def _capacity_violations(sc: dict) -> list[str]:
    kind = sc.get("kind")
    if kind == "knitting":
        dim = sc.get("local_dim", 2) ** sc.get("num_qudits", 1)
        if dim > MAX_STATE_DIM:
            return [f"circuit dimension {dim} exceeds the cap {MAX_STATE_DIM}"]
    return []


def validate_scenario(path: str | Path) -> dict:
    """Parse and fully validate a scenario file; raises staged errors."""
    sc = load_scenario(path)
    schema = _schema_violations(sc)
    if schema:
        raise ScenarioSchemaError("; ".join(schema))
    semantic = _semantic_violations(sc)
    if semantic:
        raise ScenarioSemanticError("; ".join(semantic))
    capacity = _capacity_violations(sc)
    if capacity:
        raise CapacityError("; ".join(capacity))
    return sc


# --- runners ---


def _state(obj, label: str = "s") -> PureState:
    vec = state_from_literal(obj, label)
    return PureState(RegisterLayout.of((label, vec.shape[0])), vec)


def _programs(literals) -> list[ChoiProgram]:
    return [choi_of(gate_from_literal(g)) for g in literals]


def _run_dbqc(sc: dict, rng: np.random.Generator):
    alice = Party("alice", programs=_programs(sc["alice_programs"]), states=[_state(sc["input_state"])])
    bob = Party("bob", programs=_programs(sc["bob_programs"]), states=[_state(sc["readout_state"])])
    res = run_dbqc(alice, bob, sc["shots"], rng)
    records = [
        {
            "shot": i,
            "isi_bit": int(res.isi_bits[i]),
            "parity_bits": [int(b) for b in res.parity_bits[i]],
            "readout": int(res.readout_bits[i]),
            "estimate": float(res.per_shot[i]),
        }
        for i in range(sc["shots"])
    ]
    return res.estimate, res.stderr, res.ledger, records


def _run_triparty(sc: dict, rng: np.random.Generator):
    a = Party("a", programs=_programs([sc["a_program"]]), states=[_state(sc["psi_a"])])
    b = Party("b", programs=_programs([sc["b_program"]]), states=[_state(sc["psi_b"])])
    c = Party("c", programs=_programs([sc["nonlocal_program"]]), states=[_state(sc["readout_state"])])
    res = run_triparty(sc["scheme"], a, b, c, sc["shots"], rng)
    records = []
    for i in range(sc["shots"]):
        rec = {"shot": i}
        for key, arr in res.bits.items():
            rec[key] = int(arr[i])
        if res.scheme == "I":
            rec["kept"] = bool(rec["k"] == 0)
        records.append(rec)
    return res.estimate, res.stderr, res.ledger, records


def _run_pingpong(sc: dict, rng: np.random.Generator):
    programs = _programs(sc["programs"])
    psi_in = _state(sc["input_state"])
    psi_o = state_from_literal(sc["readout_state"], "readout_state")
    d = psi_in.dim
    n = len(programs)
    shots = sc["shots"]

    patterns = list(range(2**n))
    qvals = np.empty(len(patterns))
    probs = np.empty(len(patterns))
    ledger = None
    svals = np.empty(len(patterns), dtype=int)
    for code in patterns:
        bits = [(code >> (n - 1 - k)) & 1 for k in range(n)]
        record, led = pingpong_run(programs, psi_in, forced_bits=bits)
        qvals[code] = float(
            np.real(np.conj(psi_o) @ record.final_state.matrix @ psi_o)
        )
        p = 1.0
        for bit in bits:
            p *= (1.0 / d**2) if bit == 0 else (1.0 - 1.0 / d**2)
        probs[code] = p
        svals[code] = record.s
        if ledger is None:
            ledger = led
    probs = probs / probs.sum()

    idx = rng.choice(len(patterns), size=shots, p=probs)
    y = (rng.random(shots) >= qvals[idx]).astype(np.int8)
    s = svals[idx]
    base = ((-1.0) ** s) * float(d * d - 1) ** s
    alpha = np.array([parity_mix_alpha(int(v), d) for v in s])
    t_hat = base * ((y == 0) - alpha)
    estimate = float(t_hat.mean())
    stderr = float(t_hat.std(ddof=1) / np.sqrt(shots)) if shots > 1 else 0.0
    records = [
        {
            "shot": i,
            "parity_bits": [(int(idx[i]) >> (n - 1 - k)) & 1 for k in range(n)],
            "s": int(s[i]),
            "readout": int(y[i]),
            "estimate": float(t_hat[i]),
        }
        for i in range(shots)
    ]
    return estimate, stderr, ledger, records


def _run_knitting(sc: dict, rng: np.random.Generator):
    ld = sc.get("local_dim", 2)
    gates = tuple(
        KnitGate(
            matrix=gate_from_literal(g),
            targets=tuple(g["targets"]),
            cut=bool(g.get("cut", False)),
        )
        for g in sc["gates"]
    )
    input_state = (
        state_from_literal(sc["input_state"], "input_state") if "input_state" in sc else None
    )
    circuit = KnitCircuit(
        num_qudits=sc["num_qudits"], gates=gates, local_dim=ld, input_state=input_state
    )
    observable = matrix_from_json(sc["observable"])
    mode = sc.get("mode", "exact_sum")
    shots = sc["shots"]
    if mode == "sampled":
        res = knit_estimate(circuit, observable, mode="sampled", shots=shots, rng=rng)
        records = [
            {
                "shot": i,
                "knit_term_index": int(res.term_indices[i]),
                "value": float(res.per_shot[i]),
            }
            for i in range(shots)
        ]
    else:
        res = knit_estimate(circuit, observable, mode="exact_sum")
        records = [
            {"shot": i, "mode": "exact_sum", "estimate": res.estimate}
            for i in range(shots)
        ]
    ledger = ResourceLedger(knit_overhead=res.overhead, max_live_registers=sc["num_qudits"], depth=1)
    return res.estimate, res.stderr, ledger, records


def _run_channel_composition(sc: dict, rng: np.random.Generator):
    e1 = channel_from_literal(sc["channels"][0], "channels[0]")
    e2 = channel_from_literal(sc["channels"][1], "channels[1]")
    p1, p2 = choi_of(e1), choi_of(e2)
    branch0, _ = oqt_compose_choi(p1, p2)
    composed = KrausChannel([b @ a for b in e2.kraus for a in e1.kraus])
    direct = choi_of(composed)
    distance = float(np.linalg.norm(branch0.post_state.matrix - direct.density()))
    tol = float(sc.get("tolerance", 1e-9))
    ledger = ResourceLedger(oqt_ops=1, max_live_registers=4, depth=1)
    records = [
        {
            "shot": i,
            "branch": 0,
            "branch_probability": float(branch0.probability),
            "frobenius_distance": distance,
            "within_tolerance": bool(distance <= tol),
        }
        for i in range(sc["shots"])
    ]
    return distance, 0.0, ledger, records


def _run_script(sc: dict, rng: np.random.Generator):
    shots = sc["shots"]
    records = []
    ledger = None
    estimates = []
    for shot in range(shots):
        bits, final_bit, led = _execute_script_once(sc, rng)
        ledger = led if ledger is None else ledger
        rec = {"shot": shot, "bits": bits}
        if final_bit is not None:
            rec["readout"] = final_bit
            estimates.append(1.0 if final_bit == 0 else 0.0)
        records.append(rec)
    if estimates:
        arr = np.array(estimates)
        estimate = float(arr.mean())
        stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
    else:
        estimate, stderr = math.nan, 0.0
    return estimate, stderr, ledger, records


def _execute_script_once(sc: dict, rng: np.random.Generator):
    eng = ProtocolEngine(*sc["parties"])
    ebit_ids: dict = {}
    bits: dict[str, int] = {}
    final_bit = None
    for n, step in enumerate(sc["steps"]):
        op = step["op"]
        if op == "prepare_state":
            eng.alloc(step["party"], step["label"], state_from_literal(step["state"], f"step {n}"))
        elif op == "prepare_program":
            eng.alloc_program(
                step["party"],
                choi_of(gate_from_literal(step["gate"])),
                step["out_label"],
                step["in_label"],
            )
        elif op == "distribute_ebit":
            ebit_ids[step["resource"]] = eng.distribute_ebit(
                step["party_a"], step["party_b"], step["label_a"], step["label_b"], step.get("dim", 2)
            )
        elif op == "local_gate":
            eng.apply_local(step["party"], gate_from_literal(step["gate"]), step["labels"])
        elif op == "isi_inject":
            vec = state_from_literal(step["state"], f"step {n}")
            bit, _ = eng.measure_binary(
                step["party"], projector(np.conj(vec)), [step["in_label"]], rng=rng
            )
            bits[step.get("record", f"isi_{n}")] = int(bit)
            eng.broadcast(1)
            eng.discard([step["in_label"]])
        elif op == "oqt_link":
            d = eng.layout.dim(step["labels"][0])
            bit, _ = eng.measure_binary(
                step["party"], bell_projector(d), step["labels"], rng=rng
            )
            bits[step.get("record", f"parity_{n}")] = int(bit)
            eng.broadcast(1)
            eng.record_oqt()
            if step.get("resource") is not None:
                eng.consume_ebit(ebit_ids[step["resource"]])
            eng.discard(step["labels"])
        elif op == "bell_measure_qt":
            _, byproduct = teleport_state(eng, step["state_label"], ebit_ids[step["resource"]], rng=rng)
            bits[step.get("record", f"teleport_{n}")] = int(byproduct)
        elif op == "remote_cnot":
            m1, m2 = remote_cnot(eng, step["control"], step["target"], ebit_ids[step["resource"]], rng=rng)
            bits[step.get("record", f"cnot_{n}")] = int(2 * m1 + m2)
        elif op == "broadcast":
            eng.broadcast(step["bits"])
        elif op == "final_measure":
            vec = state_from_literal(step["state"], f"step {n}")
            bit, _ = eng.measure_binary(step["party"], projector(vec), step["labels"], rng=rng)
            eng.broadcast(1)
            final_bit = int(bit)
    return bits, final_bit, eng.ledger


_RUNNERS = {
    "dbqc": _run_dbqc,
    "triparty": _run_triparty,
    "pingpong": _run_pingpong,
    "knitting": _run_knitting,
    "channel_composition": _run_channel_composition,
    "script": _run_script,
}


# --- artifact writing ---


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def run_scenario(path: str | Path, overrides: dict | None = None) -> Path:
    """Validate, run, and write artifacts; returns the output directory."""
    sc = validate_scenario(path)
    overrides = overrides or {}
    for key in ("seed", "shots", "tolerance"):
        if overrides.get(key) is not None:
            sc[key] = overrides[key]
    schema = _schema_violations(sc)
    if schema:
        raise ScenarioSchemaError("; ".join(schema))

    out_dir = overrides.get("out") or sc.get("out") or f"runs/{Path(path).stem}"
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(sc["seed"])
    estimate, stderr, ledger, records = _RUNNERS[sc["kind"]](sc, rng)
    if len(records) != sc["shots"]:
        raise ObliqError("internal: record count does not equal shots")

    resolved = dict(sc)
    (out_path / "resolved-scenario").write_text(
        json.dumps(resolved, sort_keys=True, indent=2) + "\n"
    )

    with open(out_path / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(_canonical_json(rec) + "\n")

    ledger = ledger or ResourceLedger()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["kind", "seed", "shots", "estimate", "stderr"] + list(ledger.as_dict())
    row = [
        sc["kind"],
        sc["seed"],
        sc["shots"],
        repr(float(estimate)),
        repr(float(stderr)),
    ] + [repr(v) if isinstance(v, float) else v for v in ledger.as_dict().values()]
    writer.writerow(header)
    writer.writerow(row)
    (out_path / "summary.csv").write_text(buf.getvalue())
    return out_path


# --- entry point ---


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obliq", description="validate and run protocol scenarios"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    val = sub.add_parser("validate", help="validate a scenario file")
    val.add_argument("file")

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("file")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--shots", type=int, default=None)
    run.add_argument("--out", type=str, default=None)
    run.add_argument("--tolerance", type=float, default=None)
    run.add_argument(
        "--validate-only",
        action="store_true",
        help="validate (with overrides applied) and exit without running",
    )
    return parser


_EXIT_CODES = (
    (ScenarioParseError, 2),
    (ScenarioSchemaError, 3),
    (ScenarioSemanticError, 4),
    (CapacityError, 5),
)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            validate_scenario(args.file)
            print(f"{args.file}: valid")
            return 0
        overrides = {
            "seed": args.seed,
            "shots": args.shots,
            "out": args.out,
            "tolerance": args.tolerance,
        }
        if args.validate_only:
            sc = validate_scenario(args.file)
            for key in ("seed", "shots", "tolerance"):
                if overrides.get(key) is not None:
                    sc[key] = overrides[key]
            schema = _schema_violations(sc)
            if schema:
                raise ScenarioSchemaError("; ".join(schema))
            print(f"{args.file}: valid")
            return 0
        out = run_scenario(args.file, overrides)
        print(f"wrote {out}/records.jsonl, {out}/summary.csv, {out}/resolved-scenario")
        return 0
    except ObliqError as exc:
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"runtime error: {exc}", file=sys.stderr)
        return 6
    except Exception as exc:  # I/O failures and unexpected faults
        print(f"runtime error: {exc}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
