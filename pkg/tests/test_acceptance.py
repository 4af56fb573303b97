"""End-to-end acceptance checks, one PASS/FAIL line per criterion.

Lines are printed as they are decided and repeated in the terminal summary.
A failing criterion is reported and then asserted, never softened.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, line_system, plane_system, synthesized
from selftrig.abstraction import check_asr_samples
from selftrig.cli import build_model, synthesize
from selftrig.config import bundled_config, load_config
from selftrig.geometry import LatticeSpec, lattice_in_ball, nearest_lattice
from selftrig.simulation import check_validity, periodic_baseline, run_closed_loop, sweep
from selftrig.synthesis import brute_force_solve, pre, solve, verify_initial_cover

SAMPLES = 1000


def report(tag, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def vehicle_run():
    cfg = load_config(bundled_config("vehicle"))
    t0 = time.perf_counter()
    model, sol, rc, summary = synthesize(cfg, workers=4)
    cover = verify_initial_cover(cfg.initial, rc, cfg.cover_delta)
    x0 = np.array(cfg.x0[0], dtype=float)
    trace = run_closed_loop(cfg.plant, rc, x0, cfg.safe, cfg.target, X_0=cfg.initial)
    _, _, rc1, _ = synthesize(cfg, m_max=1, workers=4)
    base = periodic_baseline(cfg.plant, rc1, x0, cfg.safe, cfg.target)
    seconds = time.perf_counter() - t0
    return dict(cfg=cfg, model=model, sol=sol, rc=rc, summary=summary, cover=cover, trace=trace,
                base=base, seconds=seconds)


@pytest.fixture(scope="module")
def coarse_vehicle():
    cfg = load_config(bundled_config("vehicle_coarse"))
    model, sol, rc, summary = synthesize(cfg, workers=4)
    return cfg, model, sol, rc


# -- 1 -----------------------------------------------------------------------


def test_criterion_1_oracle_equivalence():
    t0 = time.perf_counter()
    _, model, _ = line_system()
    fast = solve(model)
    slow = brute_force_solve(model)
    dt = time.perf_counter() - t0
    levels = fast.levels.tolist()
    ok = (np.array_equal(fast.levels, slow.levels) and fast.history == slow.history
          and fast.winning_ids() == set(range(10)) and levels == [2, 2, 2, 1, 1, 1, 0, 0, 0, 0] and dt < 1.0)
    assert report("1 oracle equivalence", ok, f"levels {levels}, history {fast.history}, {dt:.3f} s")


# -- 2 -----------------------------------------------------------------------


def test_criterion_2_runtime(vehicle_run):
    s = vehicle_run["summary"]
    ok = vehicle_run["seconds"] <= 7200
    assert report("2 runtime budget", ok,
                  f"{vehicle_run['seconds']:.1f} s for {s['states']} states, {s['inputs']} inputs, m_max {s['m_max']}"
                  " (coarse fallback not triggered)")


def test_criterion_2a_initial_cover(vehicle_run):
    s, cover = vehicle_run["summary"], vehicle_run["cover"]
    detail = (f"winning {s['winning']} of {s['states']} nodes (targets {s['targets']}, "
              f"iterations {s['iterations']}); {int(cover.certified.sum())}/{len(cover.samples)} cells certified")
    if not cover.ok:
        detail += f", first uncertified cell {cover.witness.tolist()}"
    assert report("2a vehicle initial cover", cover.ok, detail)


def test_criterion_2b_closed_loop(vehicle_run):
    cfg, tr = vehicle_run["cfg"], vehicle_run["trace"]
    rep = check_validity(tr, cfg.safe, cfg.target)
    assert report("2b vehicle closed loop from (25, 0)", rep.valid, f"status {tr.status}: {tr.detail}".rstrip(": "))


def test_criterion_2c_communications(vehicle_run):
    cfg, tr = vehicle_run["cfg"], vehicle_run["trace"]
    rep = check_validity(tr, cfg.safe, cfg.target)
    ok = rep.valid and rep.communications <= 12
    assert report("2c vehicle communications <= 12", ok,
                  f"{rep.communications} communications, status {tr.status}")


def test_criterion_2d_periodic_baseline(vehicle_run):
    cfg, bt = vehicle_run["cfg"], vehicle_run["base"]
    rep = check_validity(bt, cfg.safe, cfg.target)
    ok = rep.valid and rep.communications >= 80
    assert report("2d vehicle periodic baseline >= 80", ok,
                  f"{rep.communications} communications, status {bt.status}")


# -- 3 -----------------------------------------------------------------------


def lipschitz_violations(plant, region, inputs, rng, count=SAMPLES):
    bb = region.bounding_box()
    lo, hi = np.asarray(bb.lo, float), np.asarray(bb.hi, float)
    bad = 0
    for k in range(count):
        x1 = rng.uniform(lo, hi)
        # half the pairs are close together, where the local slope is sharpest
        x2 = rng.uniform(lo, hi) if k % 2 else x1 + 1e-3 * (hi - lo) * rng.normal(size=len(lo))
        u = inputs[rng.integers(len(inputs))]
        m = int(rng.integers(1, 6))
        lhs = np.linalg.norm(plant.iterate(x1, u, m) - plant.iterate(x2, u, m))
        bad += lhs > plant.lipschitz**m * np.linalg.norm(x1 - x2) * (1 + 1e-9)
    return int(bad)


def test_criterion_3_lipschitz():
    rng = np.random.default_rng(0)
    cfg = load_config(bundled_config("vehicle"))
    veh = build_model(cfg)
    lp, lm, ls = line_system()
    pp, pm, ps = plane_system()
    counts = {
        "vehicle": lipschitz_violations(cfg.plant, cfg.safe, veh.inputs, rng),
        "scalar_linear": lipschitz_violations(lp, ls["X_S"], lm.inputs, rng),
        "linear": lipschitz_violations(pp, ps["X_S"], pm.inputs, rng),
    }
    ok = all(v == 0 for v in counts.values())
    assert report("3 Lipschitz sampling", ok, f"violations per model {counts} over {SAMPLES} samples each")


# -- 4 -----------------------------------------------------------------------


def test_criterion_4_asr_sampling():
    cfg = load_config(bundled_config("vehicle"))
    models = {
        "vehicle": build_model(cfg),
        "scalar_linear": line_system()[1],
        "linear": plane_system()[1],
    }
    good = {k: check_asr_samples(m, None, SAMPLES, seed=1).violations for k, m in models.items()}
    neg = {k: check_asr_samples(m, None, SAMPLES, seed=1, lipschitz=m.lipschitz / 2).violations
           for k, m in models.items()}
    ok = all(v == 0 for v in good.values()) and all(v > 0 for v in neg.values())
    assert report("4 ASR sampling", ok, f"violations {good}; halved-L controls {neg}")


# -- 5 -----------------------------------------------------------------------


def reverify_pairs(model, sol, ctrl):
    """Re-check every controller pair with fresh ball enumeration; return failures."""
    safe = {model.node(s) for s in range(model.n_states)}
    level = {model.node(s): sol.levels[s] for s in range(model.n_states)}
    bad = 0
    for s, pairs in ctrl.pairs.items():
        x = model.embed(s)
        for i, m in pairs:
            balls = [lattice_in_ball(model.plant.iterate(x, model.inputs[i], p), model.radius(p), model.lattice)
                     for p in range(1, m + 1)]
            if not all(b <= safe for b in balls) or max(level[q] for q in balls[-1]) >= sol.levels[s]:
                bad += 1
    missing = sum(1 for s in np.flatnonzero(sol.winning & (sol.levels >= 1)) if not ctrl[s])
    return bad + missing


def test_criterion_5_fixed_point(coarse_vehicle, vehicle_run):
    systems = {
        "line m=2": line_system()[1],
        "line m=1": line_system(m_max=1)[1],
        "plane": plane_system()[1],
        "plane m=1": plane_system(m_max=1)[1],
        "coarse vehicle": coarse_vehicle[1],
        "vehicle": vehicle_run["model"],
    }
    parts, ok = [], True
    for name, model in systems.items():
        sol, ctrl, _ = synthesized(model)
        monotone = all(a <= b for a, b in zip(sol.history, sol.history[1:]))
        bounded = sol.iterations <= model.n_states
        fixed = pre(sol.winning, model) <= sol.winning_ids()
        bad = reverify_pairs(model, sol, ctrl)
        ok &= monotone and bounded and fixed and bad == 0
        parts.append(f"{name}: {sol.iterations} iterations, {sum(len(p) for p in ctrl.pairs.values())} pairs, "
                     f"{bad} bad")
    assert report("5 fixed-point structure", ok, "; ".join(parts))


# -- 6 -----------------------------------------------------------------------


def sweep_winning_initials(plant, model, sol, rc, X_S, X_F):
    ids = model.index(model.initials)
    win = ids[(ids >= 0)]
    win = win[sol.winning[win]]
    pts = model.embed(win)
    rep = sweep(plant, rc, pts, X_S, X_F)
    return rep, len(win)


def test_criterion_6_sweep(coarse_vehicle):
    plant, model, sets = line_system()
    sol, _, rc = synthesized(model)
    rep1, n1 = sweep_winning_initials(plant, model, sol, rc, sets["X_S"], sets["X_F"])
    cfg, vm, vsol, vrc = coarse_vehicle
    rep2, n2 = sweep_winning_initials(cfg.plant, vm, vsol, vrc, cfg.safe, cfg.target)
    ok = all(r.passed == r.total and r.level_matches == r.total for r in (rep1, rep2))
    detail = (f"1-D: {rep1.passed}/{n1} valid, {rep1.level_matches} with rounds = level; "
              f"coarse vehicle: {rep2.passed}/{n2} valid"
              f" of {len(vm.initials)} initial nodes winning"
              f" ({int(vsol.winning.sum())} winning nodes, {int(vm.target_mask.sum())} targets)")
    assert report("6 validity sweep", ok, detail)


# -- 7 -----------------------------------------------------------------------


def test_criterion_7_covering():
    rng = np.random.default_rng(7)
    worst = {}
    ok = True
    for n in (1, 2, 3):
        lat = LatticeSpec(n, 1.0)
        gap = -np.inf
        for x in rng.uniform(-50, 50, size=(10_000, n)):
            for p in nearest_lattice(x, lat):
                gap = max(gap, float(np.linalg.norm(lat.embed(p) - x)) - lat.eta)
        worst[n] = gap
        ok &= gap <= 1e-12
    assert report("7 lattice covering", ok, "max distance minus eta per dimension "
                  + ", ".join(f"n={n}: {g:.3g}" for n, g in worst.items()))
