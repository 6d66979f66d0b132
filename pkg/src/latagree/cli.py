"""Command-line front end: run scenarios, fuzz seeds, verify proofs, export graphs.

Exit codes are the contract: 0 all selected checks pass, 1 a property or proof
violation, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .accountability import bundle_from_json, bundle_to_json, verify_proof, violations_for
from .checks import build_gs, check_properties
from .sim import Scenario, ScenarioError, run

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


def _load_scenario(path: str, protocol: str | None, seed: int | None) -> Scenario:
    if not os.path.exists(path):
        raise ScenarioError(f"scenario file not found: {path}")
    scenario = Scenario.load(path)
    if protocol is not None and protocol != scenario.protocol:
        raise ScenarioError(f"--protocol {protocol} does not match scenario protocol {scenario.protocol}")
    if seed is not None:
        scenario.seed = seed
    return scenario


def _report_to_json(report: dict) -> dict:
    checks = {
        name: {"ok": r["ok"], "witness": r["witness"] if isinstance(r["witness"], (str, int, type(None))) else str(r["witness"])}
        for name, r in report["checks"].items()
    }
    return {**report, "checks": checks}


def _write_outputs(trace, report, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trace.jsonl"), "w") as f:
        f.write(trace.to_jsonl())
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(_report_to_json(report), f, sort_keys=True, indent=2)
        f.write("\n")
    for pid, node in sorted(trace.nodes.items()):
        if node.is_client and node.correct and hasattr(node, "impl"):
            acc = node.impl.accusation
            if acc.accused:
                with open(os.path.join(out_dir, f"accusation-{pid}.json"), "w") as f:
                    f.write(bundle_to_json(acc, trace.oracle))
    if trace.scenario.protocol == "rala" and trace.decided:
        with open(os.path.join(out_dir, "gs.dot"), "w") as f:
            f.write(build_gs(trace).to_dot())


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario, args.protocol, args.seed)
    trace = run(scenario)
    checks = args.checks.split(",") if args.checks else None
    report = check_properties(trace, checks)
    if args.out:
        _write_outputs(trace, report, args.out)
    for name, r in report["checks"].items():
        print(f"{name}: {'pass' if r['ok'] else 'fail'}" + (f" ({r['witness']})" if not r["ok"] else ""))
    return EXIT_OK if report["ok"] else EXIT_VIOLATION


def cmd_fuzz(args) -> int:
    if args.seeds < 1:
        print("fuzz: --seeds must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    scenario = _load_scenario(args.scenario, args.protocol, None)
    checks = args.checks.split(",") if args.checks else None
    base = args.seed if args.seed is not None else scenario.seed
    failures = []
    for seed in range(base, base + args.seeds):
        trace = run(scenario, seed=seed)
        report = check_properties(trace, checks)
        if args.invert_check:
            r = report["checks"].get(args.invert_check)
            if r is not None:
                r["ok"] = not r["ok"]
                report["ok"] = all(c["ok"] for c in report["checks"].values())
        if not report["ok"]:
            bad = [n for n, r in report["checks"].items() if not r["ok"]]
            failures.append((seed, bad))
    print(f"fuzz: {args.seeds} seeds, {len(failures)} failing")
    for seed, bad in failures:
        print(f"  seed {seed}: {','.join(bad)}")
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_verify_proof(args) -> int:
    try:
        with open(args.bundle) as f:
            text = f.read()
        accusation, verifier = bundle_from_json(text)
    except (OSError, ValueError, KeyError) as e:
        print(f"verify-proof: cannot decode bundle: {e}", file=sys.stderr)
        return EXIT_USAGE
    all_ok = True
    for accused in sorted(accusation.accused):
        ok = bool(violations_for(accused, accusation.items_for(accused), verifier))
        all_ok = all_ok and ok
        print(f"{accused}: {'true' if ok else 'false'}")
    if not accusation.accused:
        print("accusation is empty: vacuously true")
    all_ok = all_ok and verify_proof(accusation, verifier)
    return EXIT_OK if all_ok else EXIT_VIOLATION


def cmd_export_gs(args) -> int:
    scenario = _load_scenario(args.scenario, args.protocol, args.seed)
    if scenario.protocol != "rala":
        print("export-gs: the decided-state graph exists for protocol 'rala' only", file=sys.stderr)
        return EXIT_USAGE
    trace = run(scenario)
    dot = build_gs(trace).to_dot()
    if args.out:
        with open(args.out, "w") as f:
            f.write(dot)
    else:
        sys.stdout.write(dot)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latagree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_checks=True):
        p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="seed override (64-bit integer)")
        p.add_argument("--protocol", choices=["rala", "a1la"], default=None, help="assert the scenario protocol")
        if with_checks:
            p.add_argument("--checks", default=None, help="comma-separated check names (default: all applicable)")

    p_run = sub.add_parser("run", help="run one scenario and check its trace")
    common(p_run)
    p_run.add_argument("--out", default=None, help="output directory for trace/report/proof bundles")
    p_run.set_defaults(func=cmd_run)

    p_fuzz = sub.add_parser("fuzz", help="run one scenario under many seeds")
    common(p_fuzz)
    p_fuzz.add_argument("--seeds", type=int, default=100, help="number of consecutive seeds")
    p_fuzz.add_argument("--invert-check", default=None, help=argparse.SUPPRESS)  # negative-control self test
    p_fuzz.set_defaults(func=cmd_fuzz)

    p_vp = sub.add_parser("verify-proof", help="verify a serialized evidence bundle")
    p_vp.add_argument("bundle", help="path to an accusation bundle JSON file")
    p_vp.set_defaults(func=cmd_verify_proof)

    p_gs = sub.add_parser("export-gs", help="run a scenario and export its decided-state graph as DOT")
    common(p_gs, with_checks=False)
    p_gs.add_argument("--out", default=None, help="output DOT path (default: stdout)")
    p_gs.set_defaults(func=cmd_export_gs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ScenarioError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
