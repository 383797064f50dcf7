"""Command-line pipeline: collect -> train-fdm -> run-mpc -> gen-ilc-data -> train-ilc -> run-ilc / eval."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from fishmpc.fdm import FdmModel, FdmTrainConfig, read_transitions_csv, train_fdm, write_transitions_csv
from fishmpc.gmpc import GmpcConfig, fdm_plant
from fishmpc.ilc import DEFAULT_GRID, IlcModel, IlcTrainConfig, generate_ilc_dataset, read_ilc_csv, train_ilc, write_ilc_csv
from fishmpc.sim import (
    PathSpec,
    ScenarioConfig,
    SurrogateParams,
    collect_transitions,
    run_scenario,
    standard_starts,
    surrogate_from_dict,
    surrogate_plant,
    surrogate_to_dict,
)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "out"
    n_transitions: int = 300
    max_steps: int = 40
    plant: str = "surrogate"
    surrogate: SurrogateParams = field(default_factory=SurrogateParams)
    fdm_train: FdmTrainConfig = field(default_factory=FdmTrainConfig)
    ilc_train: IlcTrainConfig = field(default_factory=IlcTrainConfig)
    gmpc: GmpcConfig = field(default_factory=GmpcConfig)
    path: PathSpec = field(default_factory=PathSpec)
    ilc_grid: list = field(default_factory=lambda: [list(g) for g in DEFAULT_GRID])
    ilc_eval_start: list = field(default_factory=lambda: [75.0, 425.0, math.pi / 36])

    def __post_init__(self):
        for name in ("seed", "n_transitions", "max_steps"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        if self.plant not in ("surrogate", "fdm"):
            raise ConfigError(f"plant must be 'surrogate' or 'fdm', got {self.plant!r}")
        if len(self.ilc_eval_start) != 3 or any(len(g) != 3 for g in self.ilc_grid):
            raise ConfigError("start poses must have three components")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out": self.out,
            "n_transitions": self.n_transitions,
            "max_steps": self.max_steps,
            "plant": self.plant,
            "surrogate": surrogate_to_dict(self.surrogate),
            "fdm_train": asdict(self.fdm_train),
            "ilc_train": asdict(self.ilc_train),
            "gmpc": self.gmpc.to_dict(),
            "path": asdict(self.path),
            "ilc_grid": [list(g) for g in self.ilc_grid],
            "ilc_eval_start": list(self.ilc_eval_start),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if "surrogate" in d:
                d["surrogate"] = surrogate_from_dict(d["surrogate"])
            if "fdm_train" in d:
                d["fdm_train"] = FdmTrainConfig(**{**d["fdm_train"], "hidden": tuple(d["fdm_train"].get("hidden", (8, 8)))})
            if "ilc_train" in d:
                d["ilc_train"] = IlcTrainConfig(**{**d["ilc_train"], "hidden": tuple(d["ilc_train"].get("hidden", (8,)))})
            if "gmpc" in d:
                d["gmpc"] = GmpcConfig.from_dict(d["gmpc"])
            if "path" in d:
                d["path"] = PathSpec(**d["path"])
            return cls(**d)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        cfg = PipelineConfig.from_dict(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.iterations is not None:
        cfg.gmpc = replace(cfg.gmpc, iterations=args.iterations)
    if args.max_steps is not None:
        cfg.max_steps = args.max_steps
    return cfg


def _write_text(dest: Path, text: str) -> None:
    tmp = dest.with_name(dest.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, dest)


def _write_json(dest: Path, obj) -> None:
    _write_text(dest, json.dumps(obj, indent=2) + "\n")


def _write_with(dest: Path, writer, obj) -> None:
    tmp = dest.with_name(dest.name + ".tmp")
    writer(obj, tmp)
    os.replace(tmp, dest)


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _parse_start(text: str) -> tuple[float, float, float]:
    try:
        x, y, th = (float(v) for v in text.split(","))
    except ValueError as e:
        raise ConfigError(f"--start expects x,y,theta; got {text!r}") from e
    return x, y, th


def _scenario(cfg: PipelineConfig, name, start, controller) -> ScenarioConfig:
    return ScenarioConfig(name=name, start=tuple(start), controller=controller, plant=cfg.plant,
                          max_steps=cfg.max_steps, seed=cfg.seed, path=cfg.path, gmpc=cfg.gmpc,
                          surrogate=cfg.surrogate)


def _load_fdm(args, out: Path) -> FdmModel:
    return FdmModel.load(_require(Path(args.fdm) if args.fdm else out / "fdm.json", "FDM model"))


def _load_ilc(args, out: Path) -> IlcModel:
    return IlcModel.load(_require(Path(args.ilc) if args.ilc else out / "ilc.json", "ILC model"))


def cmd_collect(cfg, args, out):
    samples = collect_transitions(cfg.surrogate, cfg.n_transitions, cfg.seed)
    _write_with(out / "transitions.csv", write_transitions_csv, samples)
    print(f"wrote {len(samples)} transitions to {out / 'transitions.csv'}")


def cmd_train_fdm(cfg, args, out):
    data = _require(Path(args.data) if args.data else out / "transitions.csv", "transition dataset")
    model, report = train_fdm(read_transitions_csv(data), cfg.fdm_train, cfg.seed, cfg.surrogate.bounds)
    _write_text(out / "fdm.json", json.dumps(model.to_dict()))
    _write_json(out / "fdm_training.json", asdict(report))
    print(f"FDM trained: epoch-1 loss {report.loss_history[0]:.4g}, final {report.loss_history[-1]:.4g}")


def _run_and_write(cfg, models, name, start, controller, out):
    rep = run_scenario(_scenario(cfg, name, start, controller), models)
    _write_with(out / f"{name}_trajectory.csv", lambda lg, p: lg.write_csv(p), rep.log)
    _write_json(out / f"{name}_report.json", rep.to_dict())
    return rep


def cmd_run_mpc(cfg, args, out):
    models = {"fdm": _load_fdm(args, out)}
    start = _parse_start(args.start) if args.start else standard_starts()[0][1]
    rep = _run_and_write(cfg, models, args.name or "mpc", start, "expert", out)
    print(f"{rep.config.name}: {len(rep.log.steps)} steps, RMSE {rep.rmse_mm:.3f} mm")


def cmd_gen_ilc_data(cfg, args, out):
    model = _load_fdm(args, out)
    plant = surrogate_plant(cfg.surrogate) if cfg.plant == "surrogate" else fdm_plant(model)
    samples = generate_ilc_dataset(model, cfg.gmpc, cfg.path.build(), plant,
                                   [tuple(g) for g in cfg.ilc_grid], cfg.max_steps)
    _write_with(out / "ilc_data.csv", write_ilc_csv, samples)
    print(f"wrote {len(samples)} expert samples from {len(cfg.ilc_grid)} scenarios")


def cmd_train_ilc(cfg, args, out):
    data = _require(Path(args.data) if args.data else out / "ilc_data.csv", "ILC dataset")
    model, history = train_ilc(read_ilc_csv(data), cfg.ilc_train, cfg.seed, cfg.surrogate.bounds)
    _write_text(out / "ilc.json", json.dumps(model.to_dict()))
    _write_json(out / "ilc_training.json", {"loss_history": history})
    print(f"ILC trained: epoch-1 loss {history[0]:.4g}, final {history[-1]:.4g}")


def cmd_run_ilc(cfg, args, out):
    models = {"ilc": _load_ilc(args, out)}
    if cfg.plant == "fdm":
        models["fdm"] = _load_fdm(args, out)
    start = _parse_start(args.start) if args.start else cfg.ilc_eval_start
    rep = _run_and_write(cfg, models, args.name or "ilc", start, "distilled", out)
    print(f"{rep.config.name}: {len(rep.log.steps)} steps, RMSE {rep.rmse_mm:.3f} mm")


def cmd_eval(cfg, args, out):
    models = {"fdm": _load_fdm(args, out)}
    jobs = [(f"mpc_{name}", start, "expert") for name, start in standard_starts()]
    if args.ilc or (out / "ilc.json").is_file():
        models["ilc"] = _load_ilc(args, out)
        jobs += [("mpc_ilc_start", cfg.ilc_eval_start, "expert"), ("ilc_ilc_start", cfg.ilc_eval_start, "distilled")]
    reports = [_run_and_write(cfg, models, name, start, ctl, out) for name, start, ctl in jobs]
    rows = [{"scenario": r.config.name, "controller": r.config.controller,
             "start_x": r.config.start[0], "start_y": r.config.start[1], "start_theta": r.config.start[2],
             "steps": len(r.log.steps), "rmse_mm": r.rmse_mm, "elapsed_s": r.elapsed_s} for r in reports]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write_text(out / "eval_summary.csv", buf.getvalue())
    _write_json(out / "eval_summary.json", {"rows": rows, "config": cfg.to_dict()})
    print(f"{'scenario':<16}{'controller':<12}{'steps':>6}{'RMSE mm':>10}")
    for row in rows:
        print(f"{row['scenario']:<16}{row['controller']:<12}{row['steps']:>6}{row['rmse_mm']:>10.3f}")


COMMANDS = {
    "collect": cmd_collect,
    "train-fdm": cmd_train_fdm,
    "run-mpc": cmd_run_mpc,
    "gen-ilc-data": cmd_gen_ilc_data,
    "train-ilc": cmd_train_ilc,
    "run-ilc": cmd_run_ilc,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline JSON config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory (default: config 'out')")
    common.add_argument("--iterations", type=int, help="override G-MPC optimization iterations")
    common.add_argument("--max-steps", type=int, dest="max_steps", help="override closed-loop step limit")
    common.add_argument("--data", help="input dataset CSV")
    common.add_argument("--fdm", help="FDM model JSON (default: <out>/fdm.json)")
    common.add_argument("--ilc", help="ILC model JSON (default: <out>/ilc.json)")
    common.add_argument("--start", help="start pose x,y,theta (mm, mm, rad)")
    common.add_argument("--name", help="scenario name used for output files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fishmpc", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    sub.add_parser("dump-config", parents=[common], help="print the effective config as JSON")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "dump-config":
            print(json.dumps(cfg.to_dict(), indent=2))
            return 0
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args, out)
    except (ConfigError, FileNotFoundError, ValueError, FloatingPointError) as e:
        print(f"fishmpc {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
