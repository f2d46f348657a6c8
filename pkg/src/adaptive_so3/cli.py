"""Command-line entry point: grid, diag, equivariance, train, bench.

Every command reads a JSON RunConfig (``--config``) with ``--set key=value``
overrides and writes CSV/JSON artifacts under the output directory only.
The ``ADAPTIVE_SO3_OUTPUT_DIR`` environment variable overrides that directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .adaptive import DegenerateRowError
from .bench import BENCH_FIELDS, bench, fit_records
from .data import gen_tetris
from .experiments import adaptive_layer_errors, fixed_layer_errors, grid_for, model_invariance, ortho_sweep, summarize
from .model import ModelConfig
from .reptypes import FieldType, Kind
from .rotations import min_pairwise_distance
from .training import save_checkpoint, train

ENV_OUTPUT = "ADAPTIVE_SO3_OUTPUT_DIR"
SUMMARY_FIELDS = ["model", "N", "metric", "mean", "std"]
log = logging.getLogger("adaptive_so3")


class ConfigError(ValueError):
    pass


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    output_dir: str = "out"
    seeds: list[int] = [0, 1, 2]
    Ns: list[int] = [1, 2, 4, 8, 16, 32, 64]
    grid: Literal["repulsion", "random", "cubic"] = "repulsion"
    kind: Literal["quotient", "regular"] = "quotient"
    L: int = Field(3, ge=0, le=8)
    sigma: Literal["elu", "relu", "identity", "sigmoid"] = "elu"
    normalized_delta: bool = True
    n_inputs: int = Field(50, ge=1)
    n_rotations: int = Field(20, ge=1)
    models: list[Literal["fourier_fixed", "adaptive", "norm", "gated"]] = ["fourier_fixed", "adaptive", "norm", "gated"]
    model: dict = {}
    epochs: int = Field(60, ge=1)
    lr: float = Field(3e-3, gt=0)
    batch_size: int = Field(32, ge=1)
    n_per_class: int = Field(25, ge=1)
    data_seed: int = 0
    bench_c: int = Field(16, ge=1)
    bench_m: int = Field(2048, ge=1)

    @field_validator("seeds")
    @classmethod
    def _three_seeds(cls, v):
        if len(v) != 3:
            raise ValueError("exactly three seeds are expected")
        return v

    @field_validator("Ns")
    @classmethod
    def _positive_ns(cls, v):
        if not v or any(n < 1 for n in v):
            raise ValueError("N values must be >= 1")
        return v

    def field_type(self) -> FieldType:
        return FieldType(Kind(self.kind), self.L)

    def model_config_for(self, nonlinearity: str, N: int, seed: int) -> ModelConfig:
        return ModelConfig(**{"L": self.L, "sigma": self.sigma, **self.model,
                              "nonlinearity": nonlinearity, "N": N, "seed": seed})


# ---------------------------------------------------------------- config plumbing


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_run_config(path: str | None, overrides: list[str]) -> RunConfig:
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        node = doc
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}: {p} is not an object")
        node[leaf] = _parse_value(raw)
    env = os.environ.get(ENV_OUTPUT)
    if env:
        doc["output_dir"] = env
    try:
        cfg = RunConfig(**doc)
        if cfg.model:
            ModelConfig(**cfg.model)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    return cfg


class Output:
    """Writes files strictly inside one root directory."""

    def __init__(self, root: str):
        self.root = Path(root).resolve()

    def path(self, rel: str) -> Path:
        p = (self.root / rel).resolve()
        if p != self.root and self.root not in p.parents:
            raise ConfigError(f"refusing to write outside {self.root}: {rel}")
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        p.write_text(text)
        return p

    def csv(self, rel: str, header: list[str], rows: list[list]) -> Path:
        lines = [",".join(header)] + [",".join(_cell(v) for v in r) for r in rows]
        return self.write(rel, "\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _map(fn, cells, parallel: int):
    if parallel > 1 and len(cells) > 1:
        with ProcessPoolExecutor(parallel) as ex:
            return list(ex.map(fn, cells))
    return [fn(c) for c in cells]


# ---------------------------------------------------------------- commands


def cmd_grid(cfg: RunConfig, out: Output, parallel: int) -> None:
    t = cfg.field_type()
    rows = []
    for N in cfg.Ns if cfg.grid != "cubic" else [24]:
        g = grid_for(t, cfg.grid, N, cfg.seeds[0])
        out.write(f"grid_{cfg.grid}_{g.space.value}_N{N}.json", g.to_json())
        rows.append([cfg.grid, g.space.value, N, min_pairwise_distance(g) if N > 1 else 0.0])
    out.csv("grid_spacing.csv", ["grid", "space", "N", "min_distance"], rows)


def _diag_cell(args):
    cfg, N, seed = args
    return ortho_sweep(cfg.field_type(), cfg.grid, [N], seed, cfg.normalized_delta)[N]


def cmd_diag(cfg: RunConfig, out: Output, parallel: int) -> None:
    Ns = [24] if cfg.grid == "cubic" else cfg.Ns
    cells = [(cfg, N, s) for N in Ns for s in cfg.seeds]
    res = _map(_diag_cell, cells, parallel)
    name = f"{cfg.grid}_{cfg.kind}{cfg.L}"
    rows = []
    for N in Ns:
        per_seed = [r for (c, n, s), r in zip(cells, res) if n == N]
        for metric in ("eps1", "eps2_normalized", "eps2_unnormalized"):
            rows.append([name, N, metric, *summarize([r[metric] for r in per_seed])])
    out.csv("diag.csv", SUMMARY_FIELDS, rows)


def _equiv_cell(args):
    cfg, what, N, seed = args
    t = cfg.field_type()
    if what == "fixed_layer":
        return float(np.median(fixed_layer_errors(t, N, cfg.n_inputs, cfg.sigma, seed, cfg.grid)))
    if what == "adaptive_layer":
        return float(adaptive_layer_errors(t, N, cfg.n_rotations, cfg.sigma, seed).max())
    nl = what.removeprefix("model_")
    return float(model_invariance(cfg.model_config_for(nl, N, seed), cfg.n_rotations, seed=seed).max())


def cmd_equivariance(cfg: RunConfig, out: Output, parallel: int) -> None:
    whats = ["fixed_layer", "adaptive_layer"] + [f"model_{m}" for m in cfg.models]
    cells = [(cfg, w, N, s) for w in whats for N in cfg.Ns for s in cfg.seeds]
    res = _map(_equiv_cell, cells, parallel)
    rows = []
    for w in whats:
        for N in cfg.Ns:
            vals = [r for (c, ww, n, s), r in zip(cells, res) if ww == w and n == N]
            rows.append([w, N, "equivariance_error", *summarize(vals)])
    out.csv("equivariance.csv", SUMMARY_FIELDS, rows)


def _train_cell(args):
    cfg, nl, N, seed = args
    mc = cfg.model_config_for(nl, N, seed)
    ds = gen_tetris(cfg.n_per_class, seed=cfg.data_seed)
    model, hist = train(mc, ds, cfg.epochs, cfg.lr, cfg.batch_size)
    return model, hist


def cmd_train(cfg: RunConfig, out: Output, parallel: int) -> None:
    cells = []
    for nl in cfg.models:
        for N in cfg.Ns if nl in ("fourier_fixed", "adaptive") else [0]:
            cells += [(cfg, nl, max(N, 1), s) for s in cfg.seeds]
    res = _map(_train_cell, cells, parallel)
    rows: dict[tuple, list] = {}
    for (c, nl, N, s), (model, hist) in zip(cells, res):
        tag = f"{nl}_N{N}_seed{s}"
        save_checkpoint(model, out.path(f"train/{tag}/checkpoint.json"))
        out.write(f"train/{tag}/metrics.csv", hist.to_csv())
        fin = hist.final("test")
        for metric in ("accuracy", "invariance_error"):
            rows.setdefault((nl, N, metric), []).append(fin[metric])
    out.csv("train_summary.csv", SUMMARY_FIELDS, [[nl, N, m, *summarize(v)] for (nl, N, m), v in rows.items()])


def cmd_bench(cfg: RunConfig, out: Output, parallel: int) -> None:
    records = bench(cfg.Ns, cfg.bench_c, cfg.bench_m, cfg.L)
    out.write("bench.csv", ",".join(BENCH_FIELDS) + "\n" + "".join(r.row() + "\n" for r in records))
    fits = fit_records(records)
    out.csv("bench_fit.csv", ["layer", "slope_ms_per_N", "intercept_ms", "r2"],
            [[k, *v] for k, v in fits.items()])
    for k, (slope, _, r2) in fits.items():
        print(f"{k}: slope {slope:.4g} ms/N, R^2 {r2:.3f}")


COMMANDS = {"grid": cmd_grid, "diag": cmd_diag, "equivariance": cmd_equivariance, "train": cmd_train,
            "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptive-so3", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted keys reach into 'model'); value parsed as JSON when possible")
    p.add_argument("--parallel", type=int, default=1, metavar="K", help="run independent sweep cells in K processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        cfg = load_run_config(args.config, args.overrides)
        out = Output(cfg.output_dir)
        COMMANDS[args.command](cfg, out, args.parallel)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (FloatingPointError, DegenerateRowError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    log.info("wrote artifacts to %s", out.root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
