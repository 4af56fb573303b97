"""Command line pipeline: ``synthesize``, ``simulate``, ``verify`` and ``oracle``.

Exit codes: 0 success, 1 oracle mismatch, 2 configuration error,
3 synthesis infeasible (initial-set cover check failed), 4 invalid simulation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .abstraction import SymbolicModel, check_asr_samples
from .config import ConfigError, RunConfig, load_config
from .plant import VehicleParams, elevation, estimate_lipschitz
from .simulation import check_validity, run_closed_loop
from .synthesis import (
    RefinedController,
    abstract_controller,
    abstract_initial_cover,
    brute_force_solve,
    solve,
    verify_initial_cover,
)

log = logging.getLogger("selftrig")

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INVALID = 0, 1, 2, 3, 4


def build_model(cfg: RunConfig, m_max: int | None = None) -> SymbolicModel:
    params = cfg.abstraction
    if m_max is not None:
        params = type(params)(params.eta_x, params.eta_u, params.eps, m_max)
    return SymbolicModel.from_regions(cfg.plant, cfg.safe, cfg.target, cfg.initial, cfg.inputs, params)


def synthesize(cfg: RunConfig, m_max: int | None = None, workers: int = 1):
    """Abstraction, game solution and refinement for a config; returns a summary dict too."""
    t0 = time.perf_counter()
    model = build_model(cfg, m_max)
    model.transition_table(workers)
    sol = solve(model, workers)
    ctrl = abstract_controller(sol, model, workers)
    rc = RefinedController.from_solution(model, sol, ctrl, cfg.tie_break, {"config_hash": cfg.problem_hash()})
    summary = {
        "states": model.n_states,
        "targets": int(model.target_mask.sum()),
        "initial_nodes": len(model.initials),
        "inputs": model.n_inputs,
        "m_max": model.params.m_max,
        "winning": int(sol.winning.sum()),
        "iterations": sol.iterations,
        "level_classes": len(set(sol.levels[sol.winning].tolist())),
        "history": sol.history,
        "abstract_initial_cover": abstract_initial_cover(model, sol),
        "seconds": round(time.perf_counter() - t0, 3),
    }
    return model, sol, rc, summary


def _artifact_path(out: Path, m_max: int | None = None) -> Path:
    return out / ("controller.json" if m_max is None else f"controller_m{m_max}.json")


def _print(obj):
    print(json.dumps(obj, indent=2, default=str))


def cmd_synthesize(cfg: RunConfig, out: Path, workers: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    _, _, rc, summary = synthesize(cfg, workers=workers)
    cover = verify_initial_cover(cfg.initial, rc, cfg.cover_delta)
    summary["initial_cover"] = cover.ok
    summary["initial_cover_witness"] = None if cover.ok else cover.witness.tolist()
    summary["artifact"] = str(rc.save(_artifact_path(out)))
    _print({"config": cfg.echo(), "summary": summary})
    return EXIT_OK if cover.ok else EXIT_INFEASIBLE


def _load_artifact(cfg: RunConfig, out: Path, path: Path | None) -> RefinedController:
    rc = RefinedController.load(path or _artifact_path(out))
    if rc.header.get("config_hash") != cfg.problem_hash():
        raise ConfigError("controller artifact was synthesized from a different configuration")
    return rc


def _plot_rows(cfg: RunConfig, trace) -> list[str]:
    rows = ["k,x1,elevation,comm"]
    vp = VehicleParams(**cfg.raw["plant"].get("params", {})) if cfg.plant.name == "vehicle" else None
    for k, x, c in zip(trace.k, trace.x, trace.comm):
        h = elevation(vp, float(np.clip(x[0], 0, vp.road_length))) if vp else float("nan")
        rows.append(f"{int(k)},{x[0]:.9g},{h:.9g},{int(c)}")
    return rows


def cmd_simulate(cfg: RunConfig, out: Path, artifact: Path | None, workers: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    rc = _load_artifact(cfg, out, artifact)
    starts = [np.asarray(x, dtype=float) for x in cfg.x0]
    if cfg.sweep:
        model = build_model(cfg)
        starts += [p for p in model.lattice.embed(model.initials)]
    baseline = None
    if cfg.baseline:
        _, _, baseline, _ = synthesize(cfg, m_max=1, workers=workers)
    results, all_valid = [], True
    for j, x0 in enumerate(starts):
        tr = run_closed_loop(cfg.plant, rc, x0, cfg.safe, cfg.target, cfg.step_cap)
        rep = check_validity(tr, cfg.safe, cfg.target)
        all_valid &= rep.valid
        tr.to_csv(out / f"trace_{j:04d}.csv", f"policy={rc.tie_break}")
        (out / f"plot_{j:04d}.csv").write_text("\n".join(_plot_rows(cfg, tr)) + "\n")
        entry = {"x0": x0.tolist(), "status": tr.status, "detail": tr.detail, "valid": rep.valid,
                 "reached": rep.reached, "safe": rep.safe_prefix, "k_N": rep.k_N,
                 "communications": rep.communications}
        if baseline is not None and j < len(cfg.x0):
            bt = run_closed_loop(cfg.plant, baseline, x0, cfg.safe, cfg.target, cfg.step_cap)
            brep = check_validity(bt, cfg.safe, cfg.target)
            bt.to_csv(out / f"baseline_{j:04d}.csv", "policy=periodic")
            entry["baseline"] = {"status": bt.status, "valid": brep.valid, "communications": brep.communications}
        results.append(entry)
    _print({"runs": results, "all_valid": all_valid})
    return EXIT_OK if all_valid else EXIT_INVALID


def cmd_verify(cfg: RunConfig, out: Path, artifact: Path | None, delta: float | None) -> int:
    rc = _load_artifact(cfg, out, artifact)
    delta = cfg.cover_delta if delta is None else delta
    cover = verify_initial_cover(cfg.initial, rc, delta)
    model = build_model(cfg)
    asr = check_asr_samples(model, cfg.initial, cfg.samples, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    lip = _lipschitz_samples(cfg, model, rng, cfg.samples)
    est = estimate_lipschitz(cfg.plant, cfg.safe, model.inputs, samples=cfg.samples, seed=cfg.seed)
    report = {
        "asr": {"passed": asr.passed, "samples": asr.samples, "violations": asr.violations,
                "counterexample": asr.counterexample},
        "initial_cover": {"passed": cover.ok, "delta": delta,
                          "witness": None if cover.ok else cover.witness.tolist()},
        "lipschitz": {"passed": lip == 0, "violations": lip, "configured": cfg.plant.lipschitz,
                      "sampled_estimate": est},
    }
    report["passed"] = all(v["passed"] for v in report.values() if isinstance(v, dict))
    _print(report)
    return EXIT_OK if report["passed"] else EXIT_INFEASIBLE


def _lipschitz_samples(cfg: RunConfig, model: SymbolicModel, rng, count: int, max_m: int = 5) -> int:
    bb = cfg.safe.bounding_box()
    L = cfg.plant.lipschitz
    bad = 0
    for _ in range(count):
        x1 = rng.uniform(bb.lo, bb.hi)
        x2 = rng.uniform(bb.lo, bb.hi)
        u = model.inputs[rng.integers(model.n_inputs)]
        m = int(rng.integers(1, max_m + 1))
        lhs = np.linalg.norm(cfg.plant.iterate(x1, u, m) - cfg.plant.iterate(x2, u, m))
        bad += lhs > L**m * np.linalg.norm(x1 - x2) * (1 + 1e-9)
    return int(bad)


def cmd_oracle(cfg: RunConfig) -> int:
    model = build_model(cfg)
    fast = solve(model)
    slow = brute_force_solve(model)
    same = np.array_equal(fast.levels, slow.levels) and fast.history == slow.history
    _print({"equal": same, "winning": int(fast.winning.sum()), "history": fast.history})
    return EXIT_OK if same else EXIT_MISMATCH


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="selftrig", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("synthesize", "simulate", "verify", "oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None, help="output directory (default: config output.dir)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("simulate", "verify"):
            sp.add_argument("--artifact", type=Path, default=None)
        if name == "verify":
            sp.add_argument("--delta", type=float, default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out = args.out or cfg.out_dir
        if args.cmd == "synthesize":
            return cmd_synthesize(cfg, out, args.threads)
        if args.cmd == "simulate":
            return cmd_simulate(cfg, out, args.artifact, args.threads)
        if args.cmd == "verify":
            return cmd_verify(cfg, out, args.artifact, args.delta)
        return cmd_oracle(cfg)
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        # precondition failures such as an empty abstract target or a bad delta
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
