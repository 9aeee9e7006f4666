"""Command-line entry point: ``gatetele <subcommand>``.

Exit codes: 0 success, 1 validation error, 2 simulation error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .netsim import build_network
from .noise import DeviceNoise, NoiseError
from .pauli import PauliError, correction_circuits, correction_table
from .protocols import InputSpec, UnsupportedGateError, default_config, input_count, teleport
from .qmath import GateError, gate_by_name

log = logging.getLogger("gatetele")

EXIT_OK, EXIT_VALIDATION, EXIT_SIMULATION = 0, 1, 2


def _resolve_protocol(name: str, nodes: int | None) -> str:
    if name in ("clifford", "gate"):
        if nodes not in (2, 3):
            raise ex.SpecError("protocol 'clifford' needs --nodes 2 or 3")
        return "two_node" if nodes == 2 else "three_node"
    expected = {"state": 2, "single": 2, "two_node": 2, "three_node": 3, "toffoli": 4}
    if name not in expected:
        raise ex.SpecError(f"unknown protocol {name!r}")
    if nodes is not None and nodes != expected[name]:
        raise ex.SpecError(f"protocol {name!r} runs on {expected[name]} nodes, not {nodes}")
    return name


def cmd_corrections(args) -> int:
    u = gate_by_name(args.gate)
    table = correction_table(u)
    print(table.to_text())
    if args.circuits:
        for basis, circuit in correction_circuits(table, u):
            ops = " ".join(n if a is None else f"{n}({a:.6g})" for n, _, a in circuit.gates)
            targets = " ".join(",".join(map(str, t)) for _, t, _ in circuit.gates)
            print(f"  {basis}: {len(circuit)} gates: {ops}  on [{targets}]")
    return EXIT_OK


def cmd_teleport(args) -> int:
    protocol = _resolve_protocol(args.protocol, args.nodes)
    cfg = default_config(protocol).with_link_fidelity(args.link_fidelity)
    cfg = cfg.with_device_noise(DeviceNoise(args.depol, args.depol, args.measurement_flip))
    n = input_count(protocol)
    inp = InputSpec(tuple(tuple(g for g in q.split("+") if g) for q in args.inputs.split(","))) \
        if args.inputs else InputSpec.hadamard(n)
    sim = build_network(cfg)
    res = teleport(protocol, sim, args.gate, inp, args.mode, args.seed)
    print(f"protocol={protocol} gate={res.gate_label} mode={res.mode} branches={len(res.branches)}")
    if args.verbose:
        for b in res.branches:
            bits = "".join(map(str, b.outcomes))
            print(f"  outcome={bits} p={b.probability:.6f} fidelity={b.fidelity:.12g}")
    print(f"fidelity={res.fidelity:.12g}")
    return EXIT_OK


def _emit(records, out: Path, stem: str, title: str) -> None:
    ex.emit_csv(records, out / f"{stem}.csv")
    names = sorted({k for r in records for k, _ in r.params})
    if len(names) == 1:
        ex.emit_plot(records, out / f"{stem}.svg", title)
    elif len(names) == 2:
        outer, inner = names
        for v in sorted({r.param_dict[outer] for r in records}):
            part = [ex.SweepRecord(tuple((k, x) for k, x in r.params if k == inner), r.run, r.seed,
                                   r.fidelity, r.branches)
                    for r in records if r.param_dict[outer] == v]
            ex.emit_plot(part, out / f"{stem}_{outer}={v:g}.svg", f"{title}, {outer}={v:g}")


def cmd_sweep(args) -> int:
    spec = ex.load_spec(args.spec)
    records = ex.run_sweep(spec, workers=args.workers)
    ex.emit_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    if args.plot:
        ex.emit_plot(records, args.plot, f"{spec.protocol} {spec.gate or ''}".strip())
        print(f"wrote plot to {args.plot}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.figure == "discussion":
        comparisons = ex.link_vs_device()
        report = ex.comparison_report(comparisons)
        (out / "discussion.txt").write_text(report)
        with (out / "discussion.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "step", "link_fidelity", "depol", "fidelity_link", "fidelity_device"])
            for c in comparisons:
                for i, row in enumerate(zip(c.link_fidelity, c.depol, c.link_curve, c.device_curve)):
                    w.writerow([c.label, i] + [f"{x:.12g}" for x in row])
        print(report, end="")
        return EXIT_OK
    figs = ex.figures(args.mode, args.runs, args.seed)
    if args.figure not in figs:
        raise ex.SpecError(f"unknown figure {args.figure!r}; choose from {', '.join(figs)} or discussion")
    fig = figs[args.figure]
    log.info("%s: %s", fig.figure_id, fig.description)
    for label, spec in fig.specs:
        records = ex.run_sweep(spec, workers=args.workers)
        _emit(records, out, f"{fig.figure_id}_{label}", f"{fig.figure_id} {label}")
        print(f"{fig.figure_id} {label}: {len(records)} records")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gatetele", description="Gate teleportation in noisy quantum networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrections", help="print the correction table of a gate")
    p.add_argument("gate")
    p.add_argument("--circuits", action="store_true", help="also print the correction circuits")
    p.set_defaults(func=cmd_corrections)

    p = sub.add_parser("teleport", help="run one teleportation")
    p.add_argument("protocol", help="state, single, clifford, two_node, three_node or toffoli")
    p.add_argument("--gate")
    p.add_argument("--nodes", type=int, choices=(2, 3, 4))
    p.add_argument("--mode", choices=ex.MODES, default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--link-fidelity", type=float, default=1.0)
    p.add_argument("--depol", type=float, default=0.0, help="depolarizing probability on every device")
    p.add_argument("--measurement-flip", type=float, default=0.0)
    p.add_argument("--inputs", help="per-qubit preparations, e.g. 'H,X+H' (comma between qubits)")
    p.set_defaults(func=cmd_teleport)

    p = sub.add_parser("sweep", help="run a parameter sweep from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--plot")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="run a built-in figure spec (fig8..fig12) or the discussion report")
    p.add_argument("figure", help="fig8 .. fig12, or discussion")
    p.add_argument("--out", default="results")
    p.add_argument("--mode", choices=ex.MODES, default="sampled")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)
    return parser


VALIDATION_ERRORS = (ex.SpecError, GateError, PauliError, NoiseError, UnsupportedGateError, ValueError,
                     OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ex.SweepError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
