"""Experiment specs, parameter sweeps, CSV and SVG output.

A spec file is YAML::

    protocol: three_node        # state | single | two_node | three_node | toffoli
    gate: CNOT                  # ignored by state and toffoli
    mode: sampled               # or exact
    runs: 100                   # sampled runs per sweep point
    base_seed: 0                # run i uses seed base_seed + i
    inputs: [[H], [H]]          # per-qubit preparation, default H on each
    noise:                      # baseline parameters
      nodes.*.depol: 0.0
    sweep:                      # several entries form a grid
      - parameter: links.*.fidelity
        start: 0.5
        stop: 1.0
        step: 0.05
      - parameter: nodes.gate.depol
        values: [0.0, 0.1]

Parameter paths are ``links.<a>-<b>.fidelity`` and ``nodes.<name>.<field>``
with ``field`` one of ``depol`` (both gate arities), ``single_qubit_depol``,
``two_qubit_depol`` or ``measurement_flip``.  ``*`` selects every link or node.
"""
from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import yaml

from .netsim import NetworkConfig, build_network
from .protocols import PROTOCOLS, InputSpec, default_config, input_count, teleport

MODES = ("exact", "sampled")
NODE_FIELDS = ("depol", "single_qubit_depol", "two_qubit_depol", "measurement_flip")
LINK_FIDELITY_GRID = tuple(round(0.5 + 0.05 * i, 12) for i in range(11))
DEPOL_GRID = tuple(round(0.02 * i, 12) for i in range(11))
_PROTOCOL_ALIASES = {"two-node": "two_node", "three-node": "three_node", "single_gate": "single",
                     "state_teleport": "state"}


class SpecError(ValueError):
    """Invalid experiment specification."""


class SweepError(RuntimeError):
    pass


# --- parameters -------------------------------------------------------------

def _split_path(path: str) -> tuple[str, str, str]:
    parts = path.split(".")
    if len(parts) != 3 or parts[0] not in ("links", "nodes"):
        raise SpecError(f"bad parameter path {path!r}; expected links.<a>-<b>.fidelity or nodes.<name>.<field>")
    return parts[0], parts[1], parts[2]


def parameter_range(path: str) -> tuple[float, float]:
    kind, _, attr = _split_path(path)
    if kind == "links":
        if attr != "fidelity":
            raise SpecError(f"links only have a 'fidelity' parameter, got {path!r}")
        return 0.25, 1.0
    if attr not in NODE_FIELDS:
        raise SpecError(f"unknown node parameter {attr!r} in {path!r}; expected one of {NODE_FIELDS}")
    return 0.0, 1.0


def check_value(path: str, value: float, where: str) -> float:
    lo, hi = parameter_range(path)
    value = float(value)
    if not lo <= value <= hi:
        raise SpecError(f"{where}: {path} = {value} outside [{lo}, {hi}]")
    return value


def set_parameter(cfg: NetworkConfig, path: str, value: float) -> NetworkConfig:
    kind, target, attr = _split_path(path)
    if kind == "links":
        if target == "*":
            return cfg.with_link_fidelity(value)
        a, _, b = target.partition("-")
        cfg.quantum_link(a, b)
        return cfg.with_link_fidelity(value, [(a, b)])
    names = cfg.node_names if target == "*" else [cfg.node(target).name]
    for name in names:
        noise = cfg.node(name).noise
        if attr == "depol":
            noise = replace(noise, single_qubit_depol=value, two_qubit_depol=value)
        else:
            noise = replace(noise, **{attr: value})
        cfg = cfg.with_device_noise(noise, [name])
    return cfg


# --- spec -------------------------------------------------------------------

@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str
    gate: Optional[str] = None
    topology: Optional[NetworkConfig] = None
    mode: str = "sampled"
    runs: int = 100
    base_seed: int = 0
    sweep: tuple[Sweep, ...] = ()
    inputs: Optional[InputSpec] = None

    def __post_init__(self):
        protocol = _PROTOCOL_ALIASES.get(self.protocol, self.protocol)
        if protocol not in PROTOCOLS:
            raise SpecError(f"protocol: unknown {self.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        object.__setattr__(self, "protocol", protocol)
        if protocol not in ("state", "toffoli") and not self.gate:
            raise SpecError(f"gate: protocol {protocol!r} needs a gate")
        if self.mode not in MODES:
            raise SpecError(f"mode: must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.runs, int) or self.runs < 1:
            raise SpecError(f"runs: must be an integer >= 1, got {self.runs!r}")
        if self.topology is None:
            object.__setattr__(self, "topology", default_config(protocol))
        if self.inputs is None:
            object.__setattr__(self, "inputs", InputSpec.hadamard(input_count(protocol)))
        elif self.inputs.n_qubits != input_count(protocol):
            raise SpecError(f"inputs: protocol {protocol!r} needs {input_count(protocol)} input qubits")
        names = [s.parameter for s in self.sweep]
        if len(set(names)) != len(names):
            raise SpecError("sweep: a parameter is listed twice")
        for i, s in enumerate(self.sweep):
            if not s.values:
                raise SpecError(f"sweep[{i}].values: empty")
            for v in s.values:
                check_value(s.parameter, v, f"sweep[{i}]")

    def points(self) -> list[dict[str, float]]:
        if not self.sweep:
            return [{}]
        names = [s.parameter for s in self.sweep]
        return [dict(zip(names, combo)) for combo in itertools.product(*(s.values for s in self.sweep))]


def grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive arithmetic grid, rounded to 12 decimals."""
    if step <= 0:
        raise SpecError("step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    if count < 1:
        raise SpecError(f"empty grid from {start} to {stop}")
    return tuple(round(start + i * step, 12) for i in range(count))


_TOP_KEYS = {"protocol", "gate", "mode", "runs", "base_seed", "inputs", "noise", "sweep"}


def spec_from_mapping(data: Mapping[str, Any]) -> ExperimentSpec:
    if not isinstance(data, Mapping):
        raise SpecError("spec must be a mapping at top level")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise SpecError(f"unknown keys: {', '.join(unknown)}")
    if "protocol" not in data:
        raise SpecError("protocol: missing")
    protocol = _PROTOCOL_ALIASES.get(str(data["protocol"]), str(data["protocol"]))
    if protocol not in PROTOCOLS:
        raise SpecError(f"protocol: unknown {protocol!r}; choose from {', '.join(PROTOCOLS)}")
    cfg = default_config(protocol)
    for path, value in (data.get("noise") or {}).items():
        try:
            cfg = set_parameter(cfg, path, check_value(path, value, "noise"))
        except (ValueError, TypeError) as exc:
            raise SpecError(f"noise.{path}: {exc}") from exc
    sweeps = []
    for i, entry in enumerate(data.get("sweep") or []):
        if not isinstance(entry, Mapping) or "parameter" not in entry:
            raise SpecError(f"sweep[{i}]: needs a 'parameter' key")
        path = str(entry["parameter"])
        try:
            # dry run so unknown node or link names fail at load time
            set_parameter(cfg, path, parameter_range(path)[1])
        except ValueError as exc:
            raise SpecError(f"sweep[{i}].parameter: {exc}") from exc
        if "values" in entry:
            values = tuple(float(v) for v in entry["values"])
        elif {"start", "stop", "step"} <= set(entry):
            values = grid(float(entry["start"]), float(entry["stop"]), float(entry["step"]))
        else:
            raise SpecError(f"sweep[{i}]: give either 'values' or 'start', 'stop' and 'step'")
        sweeps.append(Sweep(path, values))
    inputs = None
    if data.get("inputs") is not None:
        try:
            inputs = InputSpec(tuple(tuple(q) for q in data["inputs"]))
        except (ValueError, TypeError) as exc:
            raise SpecError(f"inputs: {exc}") from exc
    runs = data.get("runs", 100)
    seed = data.get("base_seed", 0)
    if not isinstance(seed, int):
        raise SpecError(f"base_seed: must be an integer, got {seed!r}")
    return ExperimentSpec(protocol, data.get("gate"), cfg, str(data.get("mode", "sampled")),
                          runs, seed, tuple(sweeps), inputs)


def load_spec(path) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "unknown line"
        raise SpecError(f"{path}: parse error at {where}: {getattr(exc, 'problem', exc)}") from exc
    return spec_from_mapping(data or {})


# --- running ----------------------------------------------------------------

@dataclass(frozen=True)
class SweepRecord:
    params: tuple[tuple[str, float], ...]
    run: int
    seed: int
    fidelity: float
    branches: int

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)


def _run_point(spec: ExperimentSpec, point: dict[str, float]) -> list[SweepRecord]:
    cfg = spec.topology
    for path, value in point.items():
        cfg = set_parameter(cfg, path, value)
    sim = build_network(cfg)
    params = tuple(sorted(point.items()))
    try:
        if spec.mode == "exact":
            res = teleport(spec.protocol, sim, spec.gate, spec.inputs, "exact")
            return [SweepRecord(params, 0, spec.base_seed, res.fidelity, len(res.branches))]
        records = []
        for i in range(spec.runs):
            seed = spec.base_seed + i
            res = teleport(spec.protocol, sim, spec.gate, spec.inputs, "sampled", seed)
            records.append(SweepRecord(params, i, seed, res.fidelity, len(res.branches)))
        return records
    except ValueError as exc:
        raise SpecError(f"sweep point {dict(params)}: {exc}") from exc
    except Exception as exc:
        raise SweepError(f"sweep point {dict(params)}: {exc}") from exc


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> list[SweepRecord]:
    """Records ordered by (sweep point, run) regardless of ``workers``."""
    points = spec.points()
    if workers <= 1 or len(points) == 1:
        chunks = [_run_point(spec, p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_point, [spec] * len(points), points))
    return [r for chunk in chunks for r in chunk]


# --- output -----------------------------------------------------------------

def _num(x: float) -> str:
    return f"{x:.12g}"


def emit_csv(records: Sequence[SweepRecord], path) -> Path:
    if not records:
        raise ValueError("no records to write")
    names = sorted({k for r in records for k, _ in r.params})
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["run", "seed", "fidelity", "branches"])
        for r in records:
            d = r.param_dict
            w.writerow([_num(d[n]) for n in names] + [r.run, r.seed, _num(r.fidelity), r.branches])
    return path


def read_csv(path) -> list[SweepRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    fixed = {"run", "seed", "fidelity", "branches"}
    out = []
    for row in rows:
        params = tuple(sorted((k, float(v)) for k, v in row.items() if k not in fixed))
        out.append(SweepRecord(params, int(row["run"]), int(row["seed"]), float(row["fidelity"]),
                               int(row["branches"])))
    return out


@dataclass(frozen=True)
class CurvePoint:
    x: float
    mean: float
    std: float
    n: int


def summarize(records: Sequence[SweepRecord], parameter: Optional[str] = None) -> list[CurvePoint]:
    """Mean and sample standard deviation of fidelity per value of one parameter."""
    names = sorted({k for r in records for k, _ in r.params})
    if parameter is None:
        if len(names) != 1:
            raise ValueError(f"plotting needs exactly one swept parameter, got {names or 'none'}; "
                             "filter the records and plot one parameter per invocation")
        parameter = names[0]
    groups: dict[float, list[float]] = {}
    for r in records:
        groups.setdefault(r.param_dict[parameter], []).append(r.fidelity)
    pts = []
    for x in sorted(groups):
        ys = np.array(groups[x])
        std = float(np.std(ys, ddof=1)) if len(ys) > 1 else 0.0
        pts.append(CurvePoint(x, float(np.mean(ys)), std, len(ys)))
    return pts


def emit_plot(records: Sequence[SweepRecord], path, title: str = "") -> Path:
    """Write mean fidelity against the swept parameter as a standalone SVG."""
    pts = summarize(records)
    parameter = sorted({k for r in records for k, _ in r.params})[0]
    Path(path).write_text(_svg(pts, parameter, title))
    return Path(path)


_W, _H, _PAD = 480, 320, 50


def _svg(pts: Sequence[CurvePoint], xlabel: str, title: str) -> str:
    xs = [p.x for p in pts]
    lo = min([p.mean - p.std for p in pts] + [0.0])
    hi = max([p.mean + p.std for p in pts] + [1.0])
    x0, x1 = min(xs), max(xs)
    span = (x1 - x0) or 1.0

    def sx(x):
        return _PAD + (x - x0) / span * (_W - 2 * _PAD) if len(pts) > 1 else _W / 2

    def sy(y):
        return _H - _PAD - (y - lo) / (hi - lo) * (_H - 2 * _PAD)

    def xy(x, y):
        return f"{sx(x):.2f},{sy(y):.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{_H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {_H / 2})">fidelity</text>',
    ]
    for y in np.linspace(lo, hi, 5):
        out.append(f'<text x="{_PAD - 6}" y="{sy(y) + 4:.2f}" text-anchor="end" font-size="10">{y:.2f}</text>')
    for x in sorted(set(xs)):
        out.append(f'<text x="{sx(x):.2f}" y="{_H - _PAD + 14}" text-anchor="middle" font-size="10">{x:g}</text>')
    if len(pts) > 1 and any(p.std > 0 for p in pts):
        upper = [xy(p.x, p.mean + p.std) for p in pts]
        lower = [xy(p.x, p.mean - p.std) for p in reversed(pts)]
        out.append(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="steelblue" opacity="0.25"/>')
    if len(pts) > 1:
        line = " ".join(xy(p.x, p.mean) for p in pts)
        out.append(f'<polyline class="mean" points="{line}" fill="none" stroke="steelblue" stroke-width="2"/>')
    for p in pts:
        out.append(f'<circle class="marker" cx="{sx(p.x):.2f}" cy="{sy(p.mean):.2f}" r="3" fill="steelblue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- built-in figures ----------------------------------------------------------

CLIFFORD_GATES = ("CNOT", "DCNOT", "CZ", "SWAP")


@dataclass(frozen=True)
class Figure:
    figure_id: str
    description: str
    specs: tuple[tuple[str, ExperimentSpec], ...]


def _spec(protocol, gate, sweeps, mode, runs, seed, noise=None) -> ExperimentSpec:
    cfg = default_config(protocol)
    for path, value in (noise or {}).items():
        cfg = set_parameter(cfg, path, value)
    return ExperimentSpec(protocol, gate, cfg, mode, runs, seed,
                          tuple(Sweep(p, tuple(v)) for p, v in sweeps))


def figures(mode: str = "sampled", runs: int = 100, seed: int = 0,
            link_grid: Sequence[float] = LINK_FIDELITY_GRID,
            depol_grid: Sequence[float] = DEPOL_GRID) -> dict[str, Figure]:
    """Built-in sweep specs, one per published result figure."""
    def per_gate(protocol, sweeps):
        return tuple((g, _spec(protocol, g, sweeps, mode, runs, seed)) for g in CLIFFORD_GATES)

    return {
        "fig8": Figure("fig8", "two-node, noisy link, perfect devices",
                       per_gate("two_node", [("links.*.fidelity", link_grid)])),
        "fig9": Figure("fig9", "two-node, noisy devices, perfect link",
                       per_gate("two_node", [("nodes.*.depol", depol_grid)])),
        "fig10": Figure("fig10", "three-node, both links varied",
                        per_gate("three_node", [("links.input0-gate.fidelity", link_grid),
                                                ("links.input1-gate.fidelity", link_grid)])),
        "fig11": Figure("fig11", "three-node, input0 and gate devices varied",
                        per_gate("three_node", [("nodes.input0.depol", depol_grid),
                                                ("nodes.gate.depol", depol_grid)])),
        "fig12": Figure("fig12", "Toffoli, all links and gate device varied",
                        (("TOFF", _spec("toffoli", None, [("links.*.fidelity", link_grid),
                                                          ("nodes.gate.depol", depol_grid)],
                                        mode, runs, seed)),)),
    }


@dataclass(frozen=True)
class Comparison:
    label: str
    link_fidelity: tuple[float, ...]
    depol: tuple[float, ...]
    link_curve: tuple[float, ...]
    device_curve: tuple[float, ...]
    asserted: bool = True

    @property
    def ordered(self) -> bool:
        return all(d <= l + 1e-9 for l, d in zip(self.link_curve, self.device_curve))

    @property
    def violations(self) -> list[int]:
        return [i for i, (l, d) in enumerate(zip(self.link_curve, self.device_curve)) if d > l + 1e-9]


def _exact_curve(protocol, gate, path, values, noise=None) -> tuple[float, ...]:
    spec = _spec(protocol, gate, [(path, values)], "exact", 1, 0, noise)
    return tuple(r.fidelity for r in run_sweep(spec))


def link_vs_device(link_grid: Sequence[float] = LINK_FIDELITY_GRID,
                   depol_grid: Sequence[float] = DEPOL_GRID) -> list[Comparison]:
    """Matched-step comparison of link noise against device noise.

    Step ``i`` pairs the i-th worst link fidelity with the i-th worst
    depolarizing probability.  The asserted comparisons put noise on every
    link or every device; two narrower device placements are reported too.
    """
    links = tuple(sorted(link_grid, reverse=True))
    depols = tuple(sorted(depol_grid))
    if len(links) != len(depols):
        raise ValueError("matched comparison needs grids of equal length")
    cases = [
        ("three_node CNOT, all devices", "three_node", "CNOT", "nodes.*.depol", True),
        ("toffoli, all devices", "toffoli", None, "nodes.*.depol", True),
        ("three_node CNOT, input0+gate devices", "three_node", "CNOT", None, False),
        ("toffoli, gate device only", "toffoli", None, "nodes.gate.depol", False),
    ]
    out = []
    for label, protocol, gate, device_path, asserted in cases:
        link_curve = _exact_curve(protocol, gate, "links.*.fidelity", links)
        if device_path is None:
            device_curve = tuple(
                run_sweep(_spec(protocol, gate, [], "exact", 1, 0,
                                {"nodes.input0.depol": p, "nodes.gate.depol": p}))[0].fidelity
                for p in depols)
        else:
            device_curve = _exact_curve(protocol, gate, device_path, depols)
        out.append(Comparison(label, links, depols, link_curve, device_curve, asserted))
    return out


def comparison_report(comparisons: Iterable[Comparison]) -> str:
    lines = []
    for c in comparisons:
        if c.ordered:
            verdict = "PASS device <= link at every step"
        elif c.asserted:
            verdict = f"FLAG parameterization-dependent: device > link at steps {c.violations}"
        else:
            verdict = f"INFO parameterization-dependent: device > link at steps {c.violations}"
        lines.append(f"[{c.label}] {verdict}")
        lines.append("  step  link_f  depol_p  F_link        F_device")
        for i, (f, p, fl, fd) in enumerate(zip(c.link_fidelity, c.depol, c.link_curve, c.device_curve)):
            lines.append(f"  {i:4d}  {f:6.3f}  {p:7.3f}  {_num(fl):12s}  {_num(fd)}")
    return "\n".join(lines) + "\n"
