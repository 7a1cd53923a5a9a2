"""Command-line front end: run the protocols and verification suites, write data-only reports.

Every subcommand writes one report ``{schema_version, command, config,
results, verdict}`` as JSON (default) or CSV. The exit status is 0 when every
check passes, 1 when any check fails and 2 on a usage error. Trials run on a
thread pool capped by ``FERMODE_THREADS``; trial ``i`` uses seed ``seed ^ i``,
so reports do not depend on the number of workers.

Dense coding encodes the bit pairs 00, 01, 10, 11 as psi+, psi-, phi+, phi-.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import FermodeError
from .fock import SystemLayout, dump_state, fermion, load_state, reduced_density_matrix, trace_distance, von_neumann_entropy
from .harness import monotone_fuzz
from .locc import dump_script
from .protocols import concentration as conc
from .protocols import conversion, dense, nogo, teleport
from .protocols.emode import EModeParams, emode_state
from .resources import is_perfect_emode, siv_monotone
from .ssr import ParitySector, parity_sector

SCHEMA_VERSION = 1
FIDELITY_TOL = 1e-9
PROBABILITY_TOL = 1e-9
COMMANDS = (
    "teleport",
    "dense-code",
    "convert",
    "concentrate",
    "bootstrap",
    "verify-monotone",
    "verify-no-conversion",
    "show-state",
)


@dataclass
class Report:
    command: str
    config: dict
    results: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    def check(self, name: str, passed: bool, value=None):
        self.checks[name] = {"passed": bool(passed), "value": _plain(value)}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "results": [_plain(r) for r in self.results],
            "verdict": {"passed": self.passed, "checks": self.checks},
        }


def _plain(value):
    """JSON-safe copy with numpy scalars and complex numbers unpacked."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


def render_json(report: Report) -> str:
    return json.dumps(report.document(), indent=2, sort_keys=True) + "\n"


def render_csv(report: Report) -> str:
    """Result rows followed by one row per verdict check; nested values are JSON-encoded."""
    rows = [{"record": "result", **r} for r in report.document()["results"]]
    for name, c in report.checks.items():
        rows.append({"record": "check", "check": name, "passed": c["passed"], "value": c["value"]})
    rows.append({"record": "verdict", "passed": report.passed})
    columns = sorted({k for row in rows for k in row} - {"record"})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["record", *columns], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v for k, v in row.items()})
    return buf.getvalue()


def failure_transcript(report: Report) -> str:
    """Failed checks and every recorded counterexample, for stderr."""
    failed = {n: c["value"] for n, c in report.checks.items() if not c["passed"]}
    examples = [c for r in report.document()["results"] for c in r.get("counterexamples", [])]
    lines = [f"fermode {report.command}: FAILED {', '.join(failed)}"]
    lines.append(json.dumps({"failed_checks": failed, "counterexamples": examples}, indent=2, sort_keys=True))
    return "\n".join(lines)


def workers(trials: int) -> int:
    cap = os.environ.get("FERMODE_THREADS")
    limit = int(cap) if cap and cap.isdigit() and int(cap) > 0 else (os.cpu_count() or 1)
    return max(1, min(limit, trials))


def map_trials(fn, args, n: int) -> list:
    """fn(i, seed ^ i) for i in range(n), in trial order."""
    seeds = [(i, args.seed ^ i) for i in range(n)]
    w = workers(n)
    if w == 1:
        return [fn(i, s) for i, s in seeds]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(lambda p: fn(*p), seeds))


def _params(args) -> EModeParams:
    return EModeParams.from_alpha2(args.alpha2, args.phase)


def _export(args, script, layout):
    if getattr(args, "export_script", None):
        with open(args.export_script, "w") as fh:
            fh.write(dump_script(script, layout))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_teleport(args, report: Report):
    params = _params(args)
    branches = teleport.teleport_branches(params)
    for b in branches:
        report.results.append(
            {"kind": "branch", "branch": b.kind.value, "probability": b.probability, "fidelity": b.fidelity, "corrections": list(b.corrections)}
        )

    def one(i, seed):
        r = teleport.teleport(params, seed)
        trace = [rec.monotone_after for rec in r.trial.records]
        return {"kind": "trial", "trial": i, "seed": seed, "branch": r.kind.value, "probability": r.probability, "fidelity": r.fidelity, "monotone_trace": trace}

    trials = map_trials(one, args, args.trials)
    report.results.extend(trials)
    fids = [b.fidelity for b in branches] + [t["fidelity"] for t in trials]
    report.check("min_fidelity", min(fids) >= 1 - FIDELITY_TOL, min(fids))
    worst = max(abs(b.probability - 0.25) for b in branches)
    report.check("branch_probabilities_quarter", len(branches) == 4 and worst <= PROBABILITY_TOL, worst)
    _export(args, teleport.teleport_script(), teleport.teleport_layout())


def _bits(text: str) -> tuple[int, int]:
    if len(text) != 2 or set(text) - {"0", "1"}:
        raise argparse.ArgumentTypeError(f"bits must be two characters from 0/1, got {text!r}")
    return int(text[0]), int(text[1])


def cmd_dense_code(args, report: Report):
    messages = [args.bits] if args.bits else list(dense.ENCODING)
    ok = True
    for bits in messages:
        branches = dense.dense_coding_branches(bits)
        decoded = [dense.decoded_bits(t) for t in branches]
        deterministic = len(branches) == 1 and abs(branches[0].probability - 1.0) <= PROBABILITY_TOL
        good = deterministic and decoded == [bits]
        ok &= good
        report.results.append(
            {"kind": "message", "bits": "".join(map(str, bits)), "decoded": ["".join(map(str, d)) for d in decoded], "probability": branches[0].probability, "passed": good}
        )

    def one(i, seed):
        bits = messages[i % len(messages)]
        got, trial = dense.run_dense_coding(bits, seed)
        return {"kind": "trial", "trial": i, "seed": seed, "bits": "".join(map(str, bits)), "decoded": "".join(map(str, got))}

    trials = map_trials(one, args, args.trials)
    report.results.extend(trials)
    report.check("decode_encode_identity", ok and all(t["bits"] == t["decoded"] for t in trials))
    _export(args, dense.dense_coding_script(messages[0]), dense.dense_layout())


def cmd_convert(args, report: Report):
    refs = list(conversion.ReferenceKind) if args.reference == "all" else [conversion.ReferenceKind(args.reference)]
    ok = True
    for ref in refs:
        layout, slots = conversion.conversion_layout(args.rounds)
        state = conversion.boson_input(layout, ref, slots)
        start = state
        for r, slot in enumerate(slots):
            out = conversion.convert_boson_fermion(state, "boson->fermion", slot)
            check = conversion.check_conversion(state, out, ref, slot) if args.rounds == 1 else None
            refs_pair = (slot.ref_a, slot.ref_b)
            dist = trace_distance(
                reduced_density_matrix(state, refs_pair, order=refs_pair), reduced_density_matrix(out, refs_pair, order=refs_pair)
            )
            emode = is_perfect_emode(out, slot.ancilla_a, slot.ancilla_b)
            fid = check.fidelity if check else None
            good = dist <= FIDELITY_TOL and emode and (fid is None or fid >= 1 - FIDELITY_TOL)
            ok &= good
            report.results.append(
                {"kind": "round", "reference": ref.value, "round": r, "fidelity": fid, "reference_distance": dist, "fermion_emode": emode, "passed": good}
            )
            state = out
        back = state
        for slot in reversed(slots):
            back = conversion.convert_boson_fermion(back, "fermion->boson", slot)
        rev = conversion.state_fidelity(start, back)
        ok &= rev >= 1 - FIDELITY_TOL
        report.results.append({"kind": "reverse", "reference": ref.value, "fidelity": rev})
    report.check("conversion", ok)


def cmd_concentrate(args, report: Report):
    params = _params(args)
    N = args.N
    branches = conc.concentration_branches(N, params)
    dist = conc.measured_distribution(branches, N)
    law = conc.number_distribution(N, params)
    for b in branches:
        report.results.append({"kind": "branch", **b.to_dict(), "extracted_count": len(b.extracted)})

    def one(i, seed):
        r = conc.concentrate(N, params, seed)
        return {"kind": "trial", "trial": i, "seed": seed, **r.to_dict()}

    trials = map_trials(one, args, args.trials)
    report.results.extend(trials)
    report.check("binomial_law", float(np.abs(dist - law).max()) <= 1e-12, float(np.abs(dist - law).max()))
    report.check("extracted_perfect", all(len(b.extracted) == b.k for b in branches if b.success))
    report.check("ancilla_intact", all(b.ancilla_intact for b in branches))
    report.check("yield", True, {"expected_yield": conc.expected_yield(N, params), "entropy": params.entropy()})
    _export(args, conc.concentration_script(N), conc.concentration_layout(N))


def cmd_bootstrap(args, report: Report):
    params = _params(args)
    exact = conc.bootstrap_success_probability(2, params)
    expected = 2 * params.alpha2 * params.beta2
    report.results.append({"kind": "exact", "pairs": 2, "success_probability": exact, "expected": expected})

    def one(i, seed):
        r = conc.bootstrap_emode(args.pairs, params, seed)
        return {"kind": "trial", "trial": i, "seed": seed, "success": r.success, "attempt": r.attempt, "probability": r.probability}

    trials = map_trials(one, args, args.trials)
    report.results.extend(trials)
    report.check("attempt_probability", abs(exact - expected) <= PROBABILITY_TOL, exact)


def cmd_verify_monotone(args, report: Report):
    r = monotone_fuzz(args.trials, args.povms, args.seed)
    report.results.append({"kind": "summary", **r.to_dict()})
    report.check("no_counterexamples", r.passed, r.worst_margin)


def cmd_verify_no_conversion(args, report: Report):
    r = nogo.no_conversion_experiment(args.start, args.trials, args.seed, workers=workers(args.trials))
    report.results.append({"kind": "summary", **r.to_dict()})
    if r.start is nogo.Start.BOSON:
        report.check("max_extraction_probability_zero", r.max_extraction_probability == 0.0, r.max_extraction_probability)
        report.check("monotone_stays_one", r.min_monotone >= 1 - 1e-9, r.min_monotone)
    else:
        report.check("boson_entanglement_zero", r.max_boson_entanglement <= 1e-9, r.max_boson_entanglement)
    report.check("no_counterexamples", not r.counterexamples, len(r.counterexamples))


def cmd_show_state(args, report: Report):
    if args.input:
        with open(args.input) as fh:
            state = load_state(fh.read())
    else:
        layout = SystemLayout([fermion("a", "A"), fermion("b", "B")])
        state = emode_state(_params(args), layout.spec("a"), layout.spec("b"))
    layout = state.layout
    members = state.ensemble if hasattr(state, "ensemble") else ((1.0, state),)
    for w, s in members:
        for bits, amp in s.items():
            report.results.append({"kind": "amplitude", "weight": w, "occupation": bits, "amplitude": amp})
    sector = parity_sector(state)
    report.results.append({"kind": "parity", "sector": sector.name})
    for party in layout.parties:
        modes = layout.party_modes(party)
        entropy = von_neumann_entropy(reduced_density_matrix(state, modes))
        a = siv_monotone(state, party) if sector is not ParitySector.INDEFINITE and len(members) == 1 else None
        report.results.append({"kind": "party", "party": party, "modes": list(modes), "entropy_bits": entropy, "monotone_A": a})
    report.check("definite_parity", sector is not ParitySector.INDEFINITE, sector.name)
    if args.save_state:
        with open(args.save_state, "w") as fh:
            fh.write(dump_state(state))


HANDLERS = {
    "teleport": cmd_teleport,
    "dense-code": cmd_dense_code,
    "convert": cmd_convert,
    "concentrate": cmd_concentrate,
    "bootstrap": cmd_bootstrap,
    "verify-monotone": cmd_verify_monotone,
    "verify-no-conversion": cmd_verify_no_conversion,
    "show-state": cmd_show_state,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise argparse.ArgumentTypeError(f"|alpha|^2 must lie in [0, 1], got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha2", type=_probability, default=0.8, help="|alpha|^2 of the pair state (default 0.8)")
    common.add_argument("--phase", type=float, default=0.0, help="relative phase of beta in radians")
    common.add_argument("--trials", type=_positive, default=1, help="number of sampled trials")
    common.add_argument("--seed", type=_seed, default=0, help="base seed; trial i uses seed ^ i")
    common.add_argument("--output", help="report path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = argparse.ArgumentParser(prog="fermode", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"fermode {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("teleport", parents=[common], help="teleport one fermionic mode")
    p.add_argument("--export-script", help="write the protocol script as JSON")
    p = sub.add_parser("dense-code", parents=[common], help="send two bits through one mode")
    p.add_argument("--bits", type=_bits, help="message such as 10 (default: all four)")
    p.add_argument("--export-script", help="write the protocol script as JSON")
    p = sub.add_parser("convert", parents=[common], help="boson to fermion e-mode conversion")
    p.add_argument("--reference", choices=("x0", "x1", "mixed", "all"), default="all")
    p.add_argument("--rounds", type=int, choices=(1, 2), default=1, help="2 reuses the reference (catalysis)")
    p = sub.add_parser("concentrate", parents=[common], help="concentrate N pairs into perfect e-modes")
    p.add_argument("--N", type=int, default=4, choices=range(conc.MIN_COPIES, conc.MAX_COPIES + 1), metavar="N")
    p.add_argument("--export-script", help="write the protocol script as JSON")
    p = sub.add_parser("bootstrap", parents=[common], help="produce the ancillary resource from pairs")
    p.add_argument("--pairs", type=int, default=2, help="pairs available (attempts use two each)")
    p = sub.add_parser("verify-monotone", parents=[common], help="fuzz the monotone; --trials counts states")
    p.add_argument("--povms", type=_positive, default=1000, help="random POVMs per state")
    p = sub.add_parser("verify-no-conversion", parents=[common], help="random LOCC scripts without a reference")
    p.add_argument("--start", choices=("boson", "fermion"), default="boson")
    p = sub.add_parser("show-state", parents=[common], help="summarize a saved state (or the pair state)")
    p.add_argument("--input", help="state JSON file")
    p.add_argument("--save-state", help="write the state as JSON")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bootstrap" and args.pairs < 2:
        parser.error("--pairs must be at least 2")
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("output", "format") and v is not None}
    config = _plain(config)
    report = Report(args.command, config)
    try:
        HANDLERS[args.command](args, report)
    except (FermodeError, ValueError, OSError) as exc:
        report.check("completed", False, f"{type(exc).__name__}: {exc}")
    text = render_csv(report) if args.format == "csv" else render_json(report)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not report.passed:
        print(failure_transcript(report), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
