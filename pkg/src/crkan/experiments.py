"""Experiment runners behind the CLI subcommands.

Every runner is deterministic given its arguments, writes its artifacts into
an output directory named by a hash of its effective configuration, and
drops a manifest listing the configuration and the files produced.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import (AnalyticField, EscapeMask, ModelField, build_eval_grid,
                       escape_mask, boundary_agreement, evaluate_field, lyapunov_grid)
from .io import ResultTable, load_checkpoint, save_checkpoint, write_pgm
from .model import KanNetwork, MlpNetwork, Network
from .symbolic import extract_family
from .systems import PURE_SYSTEMS, SystemId, SystemSpec, make_system
from .training import TrainConfig, TrainHistory, fine_tune, train

EVAL_RESOLUTION = 100    # lattice for velocity-accuracy metrics
CR_RESOLUTION = 200      # denser test grid for CR residuals

CR_WEIGHT_SWEEP = (0.0, 0.01, 0.1, 0.5, 1.0)
GRID_SWEEP = (3, 5, 7, 10)
WIDTH_SWEEP = (3, 5, 8, 10)
NOISE_LEVELS = (0.0, 0.01, 0.05, 0.10)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _run_dir(out: str | Path, command: str, config: dict) -> Path:
    d = Path(out) / f"{command}-{config_hash(config)}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_manifest(directory: Path, command: str, config: dict, outputs: list[str]) -> None:
    doc = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "outputs": sorted(outputs),
    }
    (directory / "manifest.json").write_text(json.dumps(doc, indent=1, default=str))


def build_network(model: str, hidden: int = 5, grid_size: int = 5, order: int = 3,
                  seed: int = 42) -> Network:
    if model == "kan":
        return KanNetwork.create(hidden=hidden, grid_size=grid_size, order=order, seed=seed)
    if model == "mlp":
        return MlpNetwork.create(seed=seed)
    raise ValueError(f"unknown model kind '{model}'")


def write_history_csv(path: Path, history: TrainHistory) -> None:
    table = ResultTable(columns=list(TrainHistory.CSV_COLUMNS))
    for row in history.rows():
        table.add(*row)
    table.write(path)


def field_metrics(net: Network, spec: SystemSpec):
    """Velocity metrics on the evaluation lattice, CR on the denser test grid."""
    m = evaluate_field(ModelField(net), AnalyticField(spec),
                       build_eval_grid(spec, EVAL_RESOLUTION, EVAL_RESOLUTION))
    cr = evaluate_field(ModelField(net), AnalyticField(spec),
                        build_eval_grid(spec, CR_RESOLUTION, CR_RESOLUTION)).cr_residual
    return m.mse, m.r_squared, cr


@dataclass
class TrainRun:
    directory: Path
    checkpoint: Path
    history_csv: Path
    net: Network
    history: TrainHistory


def run_train(system: str, model: str, config: TrainConfig, out: str | Path,
              c: complex | None = None, hidden: int = 5, grid_size: int = 5,
              order: int = 3) -> TrainRun:
    spec = make_system(system, c=c)
    cfg_doc = {"command": "train", "system": SystemId(system).value, "model": model,
               "c": str(spec.c), "hidden": hidden, "grid_size": grid_size, "order": order,
               **asdict(config)}
    directory = _run_dir(out, "train", cfg_doc)
    net = build_network(model, hidden=hidden, grid_size=grid_size, order=order,
                        seed=config.seed)
    net, history = train(spec, net, config)
    checkpoint = directory / "checkpoint.json"
    meta = {
        "system": spec.id.value, "c": str(spec.c), "seed": config.seed,
        "steps_completed": len(history.reports), "stopped_early": history.stopped_early,
        "final_mse": history.reports[-1].mse if history.reports else None,
        "final_cr": history.reports[-1].cr if history.reports else None,
    }
    save_checkpoint(checkpoint, net, meta)
    history_csv = directory / "history.csv"
    write_history_csv(history_csv, history)
    _write_manifest(directory, "train", cfg_doc, ["checkpoint.json", "history.csv"])
    return TrainRun(directory, checkpoint, history_csv, net, history)


def run_evaluate(checkpoint: str | Path | None, system: str | None, out: str | Path,
                 self_check: bool = False) -> ResultTable:
    if self_check:
        if system is None:
            raise ValueError("--self-check needs --system")
        spec = make_system(system)
        grid = build_eval_grid(spec, EVAL_RESOLUTION, EVAL_RESOLUTION)
        m = evaluate_field(AnalyticField(spec), AnalyticField(spec), grid)
        rows = [(spec.id.value, "analytic", m.mse, m.r_squared, m.cr_residual)]
        cfg_doc = {"command": "evaluate", "self_check": True, "system": spec.id.value}
    else:
        net, meta = load_checkpoint(checkpoint)
        system = system or meta.get("system")
        if system is None:
            raise ValueError("system not recorded in checkpoint; pass --system")
        spec = make_system(system)
        mse, r2, cr = field_metrics(net, spec)
        rows = [(spec.id.value, net.kind, mse, r2, cr)]
        cfg_doc = {"command": "evaluate", "checkpoint": str(checkpoint),
                   "system": spec.id.value}
    table = ResultTable(columns=["system", "model", "mse", "r_squared", "cr_residual"])
    for row in rows:
        table.add(*row)
    directory = _run_dir(out, "evaluate", cfg_doc)
    table.write(directory / "metrics.csv")
    _write_manifest(directory, "evaluate", cfg_doc, ["metrics.csv"])
    return table


def run_fractal(checkpoint: str | Path | None, system: str, out: str | Path,
                extent: float = 1.5, resolution: int = 200, max_iter: int = 50,
                bailout: float = 2.0, mode: str = "direct",
                analytic: bool = False) -> float:
    """Escape masks for the learned and true fields plus their agreement."""
    spec = make_system(system)
    truth = AnalyticField(spec)
    if analytic:
        candidate = truth
        kind = "analytic"
    else:
        net, _ = load_checkpoint(checkpoint)
        candidate = ModelField(net)
        kind = net.kind
    cfg_doc = {"command": "fractal", "system": spec.id.value, "candidate": kind,
               "checkpoint": str(checkpoint) if checkpoint else None,
               "extent": extent, "resolution": resolution, "max_iter": max_iter,
               "bailout": bailout, "mode": mode}
    directory = _run_dir(out, "fractal", cfg_doc)
    common = dict(lo=-extent, hi=extent, nx=resolution, ny=resolution,
                  max_iter=max_iter, bailout=bailout, mode=mode)
    learned = escape_mask(candidate.as_map(), **common)
    true = escape_mask(truth.as_map(), **common)
    agreement = boundary_agreement(learned, true)
    write_pgm(directory / "learned.pgm", learned)
    write_pgm(directory / "true.pgm", true)
    table = ResultTable(columns=["system", "candidate", "mode", "agreement_percent"])
    table.add(spec.id.value, kind, mode, agreement)
    table.write(directory / "agreement.csv")
    _write_manifest(directory, "fractal", cfg_doc,
                    ["learned.pgm", "true.pgm", "agreement.csv"])
    return agreement


def run_lyapunov(checkpoint: str | Path | None, system: str | None, out: str | Path,
                 extent: float = 1.5, resolution: int = 200, iterations: int = 50,
                 delta0: float = 1e-8, dt: float = 1.0, bailout: float = 10.0,
                 analytic: bool = False) -> ResultTable:
    if analytic:
        spec = make_system(system)
        fmap = AnalyticField(spec).as_map()
        label, kind = spec.id.value, "analytic"
    else:
        net, meta = load_checkpoint(checkpoint)
        label = system or meta.get("system", "unknown")
        fmap = ModelField(net).as_map()
        kind = net.kind
    cfg_doc = {"command": "lyapunov", "system": label, "candidate": kind,
               "checkpoint": str(checkpoint) if checkpoint else None,
               "extent": extent, "resolution": resolution, "iterations": iterations,
               "delta0": delta0, "dt": dt, "bailout": bailout}
    report = lyapunov_grid(fmap, lo=-extent, hi=extent, nx=resolution, ny=resolution,
                           n_iter=iterations, delta0=delta0, dt=dt, bailout=bailout)
    table = ResultTable(columns=["system", "candidate", "mean_lambda", "classification"])
    table.add(label, kind, report.mean_lambda, report.classification.value)
    directory = _run_dir(out, "lyapunov", cfg_doc)
    table.write(directory / "lyapunov.csv")
    _write_manifest(directory, "lyapunov", cfg_doc, ["lyapunov.csv"])
    return table


def run_symbolic(checkpoint: str | Path, out: str | Path,
                 system: str | None = None) -> ResultTable:
    net, meta = load_checkpoint(checkpoint, expect_model="kan")
    system = system or meta.get("system")
    if system is None:
        raise ValueError("system not recorded in checkpoint; pass --system")
    spec = make_system(system)
    cfg_doc = {"command": "symbolic", "checkpoint": str(checkpoint),
               "system": spec.id.value}
    report, fits = extract_family(net, spec)
    directory = _run_dir(out, "symbolic", cfg_doc)
    table = ResultTable(columns=["system", "true_family", "detected_family", "mean_r2"])
    table.add(spec.id.value, spec.family_label.value, report.detected_family.value,
              report.mean_r2)
    table.write(directory / "families.csv")
    edges = ResultTable(columns=["layer", "from_node", "to_node", "candidate", "scale",
                                 "offset", "r_squared", "range_lo", "range_hi",
                                 "importance"])
    for f in sorted(fits, key=lambda f: -f.importance):
        edges.add(f.layer, f.from_node, f.to_node, f.candidate.value, f.scale, f.offset,
                  f.r_squared, f.active_range[0], f.active_range[1], f.importance)
    edges.write(directory / "edge_fits.csv")
    _write_manifest(directory, "symbolic", cfg_doc, ["families.csv", "edge_fits.csv"])
    return table


def _trained_kan(spec: SystemSpec, config: TrainConfig, hidden: int = 5,
                 grid_size: int = 5) -> Network:
    net = KanNetwork.create(hidden=hidden, grid_size=grid_size, seed=config.seed)
    net, _ = train(spec, net, config)
    return net


def run_ablate(kind: str, out: str | Path, config: TrainConfig | None = None,
               system: str = "quadratic") -> ResultTable:
    """Hyperparameter sweeps on the quadratic system, one row per setting."""
    config = config or TrainConfig()
    spec = make_system(system)
    cfg_doc = {"command": "ablate", "kind": kind, "system": spec.id.value,
               **asdict(config)}
    if kind == "cr":
        table = ResultTable(columns=["lambda_max", "mse", "cr_residual", "parameters",
                                     "boundary_agreement"])
        for lam in CR_WEIGHT_SWEEP:
            cfg = replace(config, lambda_max=lam)
            net = KanNetwork.create(seed=cfg.seed)
            net, _ = train(spec, net, cfg, use_cr=lam > 0)
            mse, _, cr = field_metrics(net, spec)
            agree = boundary_agreement(escape_mask(ModelField(net).as_map()),
                                       escape_mask(AnalyticField(spec).as_map()))
            table.add(lam, mse, cr, net.parameter_count, agree)
    elif kind == "grid":
        table = ResultTable(columns=["grid_size", "parameters", "mse", "cr_residual"])
        for g in GRID_SWEEP:
            net = _trained_kan(spec, config, grid_size=g)
            mse, _, cr = field_metrics(net, spec)
            table.add(g, net.parameter_count, mse, cr)
    elif kind == "width":
        table = ResultTable(columns=["hidden", "parameters", "mse", "cr_residual"])
        for h in WIDTH_SWEEP:
            net = _trained_kan(spec, config, hidden=h)
            mse, _, cr = field_metrics(net, spec)
            table.add(h, net.parameter_count, mse, cr)
    else:
        raise ValueError(f"unknown ablation kind '{kind}' (want cr|grid|width)")
    directory = _run_dir(out, f"ablate-{kind}", cfg_doc)
    table.write(directory / "sweep.csv")
    _write_manifest(directory, f"ablate-{kind}", cfg_doc, ["sweep.csv"])
    return table


def run_noise(out: str | Path, config: TrainConfig | None = None,
              system: str = "quadratic") -> ResultTable:
    """KAN and MLP under target noise; degradations from unrounded MSEs."""
    config = config or TrainConfig()
    spec = make_system(system)
    cfg_doc = {"command": "noise", "system": spec.id.value, **asdict(config)}
    mses: dict[tuple[str, float], float] = {}
    for model in ("kan", "mlp"):
        for level in NOISE_LEVELS:
            cfg = replace(config, noise_level=level)
            net = build_network(model, seed=cfg.seed)
            net, _ = train(spec, net, cfg)
            mses[(model, level)], _, _ = field_metrics(net, spec)
    table = ResultTable(columns=["level", "kan_mse", "kan_degradation",
                                 "mlp_mse", "mlp_degradation"])
    for level in NOISE_LEVELS:
        table.add(level,
                  mses[("kan", level)], mses[("kan", level)] / mses[("kan", 0.0)],
                  mses[("mlp", level)], mses[("mlp", level)] / mses[("mlp", 0.0)])
    directory = _run_dir(out, "noise", cfg_doc)
    table.write(directory / "noise.csv")
    _write_manifest(directory, "noise", cfg_doc, ["noise.csv"])
    return table


def run_transfer(out: str | Path, config: TrainConfig | None = None,
                 source: str = "quadratic", target: str = "cubic",
                 steps: int = 100) -> ResultTable:
    """Fine-tune a source-trained network on the target vs training from scratch."""
    config = config or TrainConfig()
    src, tgt = make_system(source), make_system(target)
    cfg_doc = {"command": "transfer", "source": src.id.value, "target": tgt.id.value,
               "steps": steps, **asdict(config)}

    pre = KanNetwork.create(seed=config.seed)
    pre, _ = train(src, pre, config)
    pre, _ = fine_tune(pre, tgt, config, steps=steps)
    transfer_mse, _, _ = field_metrics(pre, tgt)

    scratch = KanNetwork.create(seed=config.seed)
    scratch_cfg = replace(config, steps=steps, patience=min(config.patience, steps))
    scratch, _ = train(tgt, scratch, scratch_cfg)
    scratch_mse, _, _ = field_metrics(scratch, tgt)

    mlp = MlpNetwork.create(seed=config.seed)
    mlp, _ = train(tgt, mlp, config)
    mlp_mse, _, _ = field_metrics(mlp, tgt)

    improvement = 100.0 * (1.0 - transfer_mse / scratch_mse)
    table = ResultTable(columns=["method", "final_mse", "parameters",
                                 "improvement_vs_scratch_percent"])
    table.add(f"kan_scratch_{steps}", scratch_mse, scratch.parameter_count, "")
    table.add(f"kan_transfer_{steps}", transfer_mse, pre.parameter_count, improvement)
    table.add("mlp_scratch_full", mlp_mse, mlp.parameter_count, "")
    directory = _run_dir(out, "transfer", cfg_doc)
    table.write(directory / "transfer.csv")
    _write_manifest(directory, "transfer", cfg_doc, ["transfer.csv"])
    return table


def run_reproduce_all(out: str | Path, seed: int = 42) -> Path:
    """Every report at desk scale into one directory with a manifest."""
    config = TrainConfig(seed=seed)
    cfg_doc = {"command": "reproduce-all", "seed": seed, **asdict(config)}
    directory = _run_dir(out, "reproduce-all", cfg_doc)
    outputs: list[str] = []

    velocity = ResultTable(columns=["system", "model", "mse", "r_squared"])
    cr_table = ResultTable(columns=["system", "cr_residual"])
    families = ResultTable(columns=["system", "true_family", "detected_family", "mean_r2"])
    fractal = ResultTable(columns=["system", "agreement_percent"])
    lyap = ResultTable(columns=["system", "mean_lambda", "classification"])

    kan_nets: dict[str, Network] = {}
    for sid in PURE_SYSTEMS:
        spec = make_system(sid)
        net = _trained_kan(spec, config)
        kan_nets[sid.value] = net
        mse, r2, cr = field_metrics(net, spec)
        velocity.add(spec.id.value, "kan", mse, r2)
        cr_table.add(spec.id.value, cr)

        mlp = MlpNetwork.create(seed=seed)
        mlp, _ = train(spec, mlp, config)
        mmse, mr2, _ = field_metrics(mlp, spec)
        velocity.add(spec.id.value, "mlp", mmse, mr2)

        report, _ = extract_family(net, spec)
        families.add(spec.id.value, spec.family_label.value,
                     report.detected_family.value, report.mean_r2)

        learned = escape_mask(ModelField(net).as_map())
        true = escape_mask(AnalyticField(spec).as_map())
        fractal.add(spec.id.value, boundary_agreement(learned, true))
        write_pgm(directory / f"fractal_{spec.id.value}_learned.pgm", learned)
        write_pgm(directory / f"fractal_{spec.id.value}_true.pgm", true)
        outputs += [f"fractal_{spec.id.value}_learned.pgm",
                    f"fractal_{spec.id.value}_true.pgm"]

        ly = lyapunov_grid(ModelField(net).as_map())
        lyap.add(spec.id.value, ly.mean_lambda, ly.classification.value)

    for name, table in [("velocity_accuracy.csv", velocity),
                        ("cr_residuals.csv", cr_table),
                        ("symbolic_families.csv", families),
                        ("fractal_agreement.csv", fractal),
                        ("lyapunov.csv", lyap)]:
        table.write(directory / name)
        outputs.append(name)

    subruns = directory / "runs"
    for kind, name in [("cr", "ablation_cr_weight.csv"),
                       ("grid", "ablation_grid_size.csv"),
                       ("width", "ablation_hidden_width.csv")]:
        table = run_ablate(kind, subruns, config)
        table.write(directory / name)
        outputs.append(name)

    run_noise(subruns, config).write(directory / "noise_robustness.csv")
    outputs.append("noise_robustness.csv")
    run_transfer(subruns, config).write(directory / "transfer.csv")
    outputs.append("transfer.csv")

    pf_spec = make_system("potential")
    pf_net = _trained_kan(pf_spec, config)
    pf = ResultTable(columns=["system", "mse", "r_squared", "cr_residual"])
    mse, r2, cr = field_metrics(pf_net, pf_spec)
    pf.add(pf_spec.id.value, mse, r2, cr)
    pf.write(directory / "potential_flow.csv")
    outputs.append("potential_flow.csv")

    _write_manifest(directory, "reproduce-all", cfg_doc, outputs)
    return directory
