"""``oamsim`` command line: gate verification and counting scenarios.

Exit codes: 0 success, 1 verification failure, 2 config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__, gates
from .circuit import (
    GATE_BUILDERS,
    GATE_POWERS,
    Circuit,
    compile,
    controlled_circuit,
    gate_basis,
    sorter_routing_error,
)
from .hilbert import LeakageError, embed_operator, fidelity_up_to_global_phase
from .photonsim import (
    REPORTED_AVERAGES,
    NoiseModel,
    SourceSpec,
    calibrate_noise,
    parse_seed,
    run_bases_scenario,
    run_controlled_scenario,
    run_table1_scenario,
    sample_counts,
)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SCENARIOS = ("verify-gates", "table1", "bases", "controlled", "custom-circuit")
FIDELITY_BOUND = 1 - 1e-9


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = "verify-gates"
    gate: str = "X"
    basis: int = 2
    control: str = "H"
    seed: int = 0
    format: str = "csv"
    out: str = "out"
    oam_window: tuple[int, int] = (-6, 5)
    dp_angle_deg: float = 45.0
    source: SourceSpec = field(default_factory=SourceSpec)
    noise: NoiseModel = field(default_factory=NoiseModel)
    calibrate_to: tuple[float, float, float] | None = None
    circuit: dict[str, Any] | None = None

    def validate(self) -> "RunConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.gate not in GATE_BUILDERS:
            raise ConfigError(f"unknown gate {self.gate!r}; choose from {', '.join(GATE_BUILDERS)}")
        if self.basis not in range(1, 8):
            raise ConfigError(f"basis must be 1..7, got {self.basis}")
        if self.control not in ("H", "V", "D"):
            raise ConfigError(f"control must be H, V or D, got {self.control!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.scenario == "custom-circuit" and not self.circuit:
            raise ConfigError("custom-circuit needs a 'circuit' section")
        return self

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["oam_window"] = list(self.oam_window)
        d["source"] = self.source.to_dict()
        d["noise"] = self.noise.to_dict()
        d["calibrate_to"] = list(self.calibrate_to) if self.calibrate_to is not None else None
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            if "seed" in data:
                data["seed"] = parse_seed(data["seed"])
            if "oam_window" in data:
                data["oam_window"] = tuple(int(x) for x in data["oam_window"])
            if "source" in data:
                data["source"] = SourceSpec(**(data["source"] or {}))
            if "noise" in data:
                data["noise"] = NoiseModel.from_dict(data["noise"] or {})
            if data.get("calibrate_to") is not None:
                data["calibrate_to"] = tuple(float(x) for x in data["calibrate_to"])
            return cls(**data).validate()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def load(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data or {})

    @property
    def dp_angle(self) -> float:
        return math.radians(self.dp_angle_deg)

    def resolved_noise(self) -> NoiseModel:
        if self.calibrate_to is None:
            return self.noise
        return calibrate_noise(self.calibrate_to, self.source, base=self.noise)


def cmd_verify_gates(config: RunConfig) -> tuple[int, str]:
    """Compile every gate and controlled gate and compare with its target."""
    lines = []
    failed = []
    window = config.oam_window

    def record(name: str, ok: bool, detail: str) -> None:
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failed.append(name)

    try:
        worst, bad = sorter_routing_error(gate_basis(window), config.dp_angle)
        record("parity_sorter", worst <= 1e-12, f"max misrouted probability {worst:.3e}" + (f" for l={bad}" if bad else ""))
    except (LeakageError, ValueError) as exc:
        record("parity_sorter", False, f"{type(exc).__name__}: {exc}")

    for name, builder in GATE_BUILDERS.items():
        target = gates.x_power(4, GATE_POWERS[name])
        try:
            basis = gate_basis(window)
            op = compile(builder(basis, config.dp_angle))
            f = fidelity_up_to_global_phase(op, target.embed(basis), basis.logical_modes())
            record(name, f >= FIDELITY_BOUND, f"fidelity {f:.15f}")
        except (LeakageError, ValueError) as exc:
            record(name, False, f"{type(exc).__name__}: {exc}")
        try:
            basis3 = gate_basis(window, paths=3)
            ctrl = controlled_circuit(builder(basis3, config.dp_angle), target=target.matrix)
            op = compile(ctrl)
            ct = gates.controlled_target(target)
            m = gates.controlled_modes(basis3)
            f = fidelity_up_to_global_phase(op, embed_operator(ct.matrix, basis3, m), m)
            record(f"C{name}", f >= FIDELITY_BOUND, f"fidelity {f:.15f}")
        except (LeakageError, ValueError) as exc:
            record(f"C{name}", False, f"{type(exc).__name__}: {exc}")

    lines.append("logical mapping: qudit index k = l + 2 (l = -2..1)")
    if failed:
        lines.append(f"verification failed: {', '.join(failed)}")
        return EXIT_VERIFY, "\n".join(lines)
    return EXIT_OK, "\n".join(lines)


def _table_text(table: gates.ConversionTable, fmt: str) -> str:
    return table.to_csv() if fmt == "csv" else table.to_json()


def _run_tables(config: RunConfig) -> dict[str, gates.ConversionTable]:
    noise = config.resolved_noise()
    src = config.source
    if config.scenario == "table1":
        x, x2, xdag = run_table1_scenario(noise, config.seed, src)
        return {"table1_X": x, "table1_X2": x2, "table1_Xdag": xdag}
    if config.scenario == "bases":
        circuit = GATE_BUILDERS[config.gate](gate_basis(config.oam_window), config.dp_angle)
        t = run_bases_scenario(circuit, config.basis, noise, config.seed, src)
        return {f"bases_B{config.basis}_{config.gate}": t}
    if config.scenario == "controlled":
        t = run_controlled_scenario(config.gate, config.control, noise, config.seed, src)
        return {f"controlled_{config.gate}_{config.control}": t}
    if config.scenario == "custom-circuit":
        circuit = Circuit.from_dict(config.circuit)
        b = gates.basis(config.basis)
        ct = sample_counts(circuit, b, b, src, noise, config.seed, stream=200)
        return {f"custom_{circuit.name}_B{config.basis}": gates.conversion_table(ct)}
    raise ConfigError(f"scenario {config.scenario!r} does not produce tables")


def cmd_run(config: RunConfig) -> list[Path]:
    """Run a counting scenario and write its tables plus a manifest."""
    tables = _run_tables(config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in tables.items():
        path = out / f"{name}.{config.format}"
        path.write_text(_table_text(table, config.format))
        written.append(path)
    manifest = {
        "schema": gates.SCHEMA,
        "config": config.to_dict(),
        "seed": hex(config.seed),
        "tables": [p.name for p in written],
        "logical_mapping": "k = l + 2",
        "versions": {"oamsim": __version__, "numpy": np.__version__},
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(mpath)
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oamsim", description="OAM qudit gate simulator")
    p.add_argument("--config", help="YAML run configuration; flags override its values")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--gate", choices=list(GATE_BUILDERS))
    p.add_argument("--basis", type=int)
    p.add_argument("--control", choices=["H", "V", "D"])
    p.add_argument("--seed", help="decimal or 0x-hex seed (default: $OAMSIM_SEED or 0)")
    p.add_argument("--noise-file", help="YAML/JSON noise model")
    p.add_argument("--calibrate", action="store_true", help="fit the noise model to the reported gate averages")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--window", type=int, nargs=2, metavar=("LMIN", "LMAX"))
    p.add_argument("--dp-angle", type=float, help="parity sorter Dove prism angle in degrees")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    return p


def resolve_config(args: argparse.Namespace, environ: dict[str, str] | None = None) -> RunConfig:
    environ = dict(os.environ if environ is None else environ)
    data: dict[str, Any] = {}
    if args.config:
        data = RunConfig.load(Path(args.config).read_text()).to_dict()
    if "seed" not in data and environ.get("OAMSIM_SEED"):
        data["seed"] = environ["OAMSIM_SEED"]
    if args.noise_file:
        noise = yaml.safe_load(Path(args.noise_file).read_text()) or {}
        if not isinstance(noise, dict):
            raise ConfigError("noise file must be a mapping")
        data["noise"] = noise
    overrides = {
        "scenario": args.scenario,
        "gate": args.gate,
        "basis": args.basis,
        "control": args.control,
        "seed": args.seed,
        "out": args.out,
        "format": args.format,
        "oam_window": args.window,
        "dp_angle_deg": args.dp_angle,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.calibrate:
        data["calibrate_to"] = list(REPORTED_AVERAGES)
    return RunConfig.from_dict(data)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except yaml.YAMLError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        print(config.dump(), end="")
        return EXIT_OK
    if config.scenario == "verify-gates":
        code, report = cmd_verify_gates(config)
        print(report)
        return code
    try:
        written = cmd_run(config)
    except (ConfigError, LeakageError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
