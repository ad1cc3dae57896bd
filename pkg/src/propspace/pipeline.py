"""Run-directory orchestration: sample -> reduce -> validity -> optimize.

Every stage writes its artifacts atomically, records their SHA-256 hashes
and its parameters in manifest.json, and is skipped on rerun while the
recorded hashes still verify.  Changing parameters for a completed stage
requires --force.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, moments, sampling, subspace as sublib, surface
from .baseline import builtin_baseline, load_baseline
from .blade_moments import BladeMomentBatch
from .design_space import DesignSpace
from .hydro import OperatingPoint, SurrogateConfig, make_evaluator
from .meshes import close_blade_grid, write_grid_obj, write_trimesh_stl
from .moo import GaConfig, OptimizationProblem, optimize, population_size_for
from .quality import ValidityChecker, invalid_fraction, mse_curve, variance_curve
from .subspace import ModalSubspace, latent_bounds, load_subspace, save_subspace

#: third-order invariants published for the reference propeller (one blade),
#: kept for side-by-side reporting; agreement is sign + order of magnitude
REFERENCE_INVARIANTS = {"MI_0.0.3": 2.933e-01, "MI_2.0.1": -6.153e-02}


class PipelineError(RuntimeError):
    exit_code = 1


class UsageError(PipelineError):
    exit_code = 2


class MissingStageError(PipelineError):
    exit_code = 3


class NumericalError(PipelineError):
    exit_code = 4


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def format_csv(rows: list[list], header: list[str]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.12g}"
        return str(v)

    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


class RunDir:
    """A pipeline working directory with a stage manifest."""

    def __init__(self, root, config: dict):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
            if self.manifest.get("config") != config:
                raise UsageError(
                    f"run directory {self.root} was created with a different configuration; "
                    "use a fresh --run-dir or the original config"
                )
        else:
            self.manifest = {
                "run_id": hashlib.sha256(
                    json.dumps(config, sort_keys=True).encode()
                ).hexdigest()[:12],
                "created": _utcnow(),
                "tool_version": __version__,
                "config": config,
                "stages": {},
            }
            self._save_manifest()
        self.config = config

    def _save_manifest(self) -> None:
        atomic_write_text(self.manifest_path, json.dumps(self.manifest, indent=2, sort_keys=True))

    def path(self, rel: str) -> Path:
        return self.root / rel

    def stage_complete(self, stage: str, params: dict) -> bool:
        info = self.manifest["stages"].get(stage)
        if not info or info.get("params") != params:
            return False
        for rel, digest in info["artifacts"].items():
            p = self.path(rel)
            if not p.exists() or sha256_file(p) != digest:
                return False
        return True

    def stage_recorded(self, stage: str) -> bool:
        return stage in self.manifest["stages"]

    def record_stage(self, stage: str, params: dict, artifacts: list[str], extra: dict | None = None) -> None:
        self.manifest["stages"][stage] = {
            "completed_at": _utcnow(),
            "params": params,
            "artifacts": {rel: sha256_file(self.path(rel)) for rel in artifacts},
            **(extra or {}),
        }
        self._save_manifest()

    def require_stage(self, stage: str) -> dict:
        info = self.manifest["stages"].get(stage)
        if not info:
            raise MissingStageError(
                f"stage '{stage}' has not run in {self.root}; expected artifacts: "
                + ", ".join(self._expected_artifacts(stage))
            )
        for rel, digest in info["artifacts"].items():
            p = self.path(rel)
            if not p.exists() or sha256_file(p) != digest:
                raise MissingStageError(f"artifact {rel} of stage '{stage}' is missing or modified")
        return info

    @staticmethod
    def _expected_artifacts(stage: str) -> list[str]:
        return {
            "sample": ["samples/training.f64", "samples/training.f64.json"],
            "reduce:ssdr": ["subspaces/ssdr.sub"],
            "reduce:kle": ["subspaces/kle.sub"],
        }.get(stage, [])


# --- shared model construction ----------------------------------------


def build_problem_geometry(config: dict):
    """Baseline, design space and baseline surface from a resolved config."""
    source = config["baseline"]
    base = builtin_baseline() if source == "builtin:e779a" else load_baseline(source)
    if config["design_space"] == "default":
        space = DesignSpace.default_for(base)
    else:
        space = DesignSpace.load(config["design_space"], base)
    grid_cfg = config["grid"]
    bsurf = surface.baseline_surface(base, space, grid_cfg["chordwise"], grid_cfg["radial"])
    return base, space, bsurf


def operating_point(config: dict) -> OperatingPoint:
    h = config["hydro"]
    return OperatingPoint(
        advance_ratio=h["advance_ratio"],
        rps=h["rps"],
        cavitation_index=h["cavitation_index"],
        density=h["density"],
    )


def evaluator_from_config(config: dict):
    h = config["hydro"]
    surrogate = SurrogateConfig(**h.get("surrogate", {})) if h.get("surrogate") else None
    return make_evaluator(h["evaluator"], surrogate)


# --- stages ------------------------------------------------------------


def cmd_sample(run: RunDir, force: bool = False, count_override: int | None = None) -> Path:
    cfg = run.config
    s_cfg = dict(cfg["sampling"])
    if count_override is not None:
        s_cfg["count"] = count_override
    params = {"sampling": s_cfg, "design_space": cfg["design_space"]}
    out = run.path("samples/training.f64")
    if run.stage_complete("sample", params) and not force:
        return out
    if run.stage_recorded("sample") and not force:
        raise UsageError("sample stage already recorded with different inputs; use --force")

    if s_cfg["count"] < 1:
        raise UsageError("sample count must be at least 1")
    base, space, _ = build_problem_geometry(cfg)
    if s_cfg["scheme"] not in sampling.SCHEMES:
        raise UsageError(f"unknown sampling scheme {s_cfg['scheme']!r}; use one of {sampling.SCHEMES}")
    draw = (
        sampling.monte_carlo_uniform
        if s_cfg["scheme"] == "monte-carlo-uniform"
        else sampling.latin_hypercube
    )
    samples = draw(space.lower, space.upper, s_cfg["count"], s_cfg["seed"])
    out.parent.mkdir(parents=True, exist_ok=True)
    sampling.save_samples(samples, out)
    run.record_stage("sample", params, ["samples/training.f64", "samples/training.f64.json"])
    return out


def _training_grids(cfg: dict, space: DesignSpace, matrix: np.ndarray, chunk: int = 2000):
    base = builtin_baseline() if cfg["baseline"] == "builtin:e779a" else load_baseline(cfg["baseline"])
    grid_cfg = cfg["grid"]
    parts = [
        surface.build_grids(base, space, matrix[lo : lo + chunk], grid_cfg["chordwise"], grid_cfg["radial"])
        for lo in range(0, len(matrix), chunk)
    ]
    return np.concatenate(parts, axis=0)


def cmd_reduce(run: RunDir, mode: str, force: bool = False, threads: int = 1) -> Path:
    if mode not in ("ssdr", "kle"):
        raise UsageError(f"reduce mode must be ssdr or kle, got {mode!r}")
    cfg = run.config
    run.require_stage("sample")
    params = {
        "mode": mode,
        "subspace": cfg["subspace"],
        "grid": cfg["grid"],
        "samples": run.manifest["stages"]["sample"]["artifacts"]["samples/training.f64"],
    }
    stage = f"reduce:{mode}"
    sub_path = run.path(f"subspaces/{mode}.sub")
    if run.stage_complete(stage, params) and not force:
        return sub_path
    if run.stage_recorded(stage) and not force:
        raise UsageError(f"{stage} already recorded with different inputs; use --force")

    base, space, bsurf = build_problem_geometry(cfg)
    samples = sampling.load_samples(run.path("samples/training.f64"))
    grids = _training_grids(cfg, space, samples.matrix)

    invariants_fn = None
    if mode == "ssdr":
        batch = BladeMomentBatch(tuple(grids.shape[1:3]))

        def invariants_fn(gs):
            return _parallel_invariants(batch, gs, threads)

    try:
        snapshots = sublib.assemble_snapshots(
            samples.matrix, lambda m: grids, bsurf.node_weights, invariants_fn, mode=mode
        )
        sub = sublib.eigensolve(
            snapshots,
            epsilon=cfg["subspace"]["epsilon"],
            kappa=cfg["subspace"]["kappa"],
            provenance={
                "mode": mode,
                "samples_hash": params["samples"],
                "seed": samples.seed,
                "training_count": samples.count,
            },
        )
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc

    sub_path.parent.mkdir(parents=True, exist_ok=True)
    save_subspace(sub, sub_path)

    # quality curves: retained variance and reconstruction MSE vs dimension
    var = variance_curve(sub)
    m_grid = list(range(0, min(len(sub.values), 40) + 1)) + [sub.numerical_rank()]
    m_grid = sorted(set(m_grid))
    mse = mse_curve(sub, snapshots.snapshots, m_grid)
    rows = [
        [m, float(var[m - 1]) if m >= 1 else 0.0, float(e)]
        for m, e in zip(m_grid, mse)
    ]
    quality_rel = f"quality/{mode}_quality.csv"
    atomic_write_text(run.path(quality_rel), format_csv(rows, ["m", "variance_pct", "mse"]))

    # mode-shape OBJ exports for the first active modes
    mesh_rels = []
    bounds = latent_bounds(sub)
    for i in range(min(sub.m, 5)):
        v = np.zeros(sub.m)
        v[i] = bounds[i]
        grid, _ = sublib.decode(sub, v)
        rel = f"meshes/{mode}_mode{i + 1}.obj"
        run.path(rel).parent.mkdir(parents=True, exist_ok=True)
        write_grid_obj(run.path(rel), grid)
        mesh_rels.append(rel)

    run.record_stage(
        stage,
        params,
        [f"subspaces/{mode}.sub", quality_rel] + mesh_rels,
        extra={
            "snapshot_dim": snapshots.dim,
            "m": sub.m,
            "beta": sub.beta,
            "retained_pct": float(var[sub.m - 1]) if sub.m >= 1 else 0.0,
        },
    )
    return sub_path


def _parallel_invariants(batch: BladeMomentBatch, grids: np.ndarray, threads: int) -> np.ndarray:
    if threads <= 1 or len(grids) < 256:
        return batch.third_order_invariants(grids)
    from concurrent.futures import ProcessPoolExecutor

    chunks = np.array_split(np.arange(len(grids)), threads * 4)
    out = np.empty((len(grids), 10))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [(idx, pool.submit(batch.third_order_invariants, grids[idx])) for idx in chunks if len(idx)]
        for idx, fut in futures:
            out[idx] = fut.result()
    return out


def cmd_validity(run: RunDir, force: bool = False) -> dict:
    cfg = run.config
    run.require_stage("reduce:ssdr")
    run.require_stage("reduce:kle")
    v_cfg = cfg["validity"]
    params = {
        "validity": v_cfg,
        "kappa": cfg["subspace"]["kappa"],
        "ssdr": run.manifest["stages"]["reduce:ssdr"]["artifacts"]["subspaces/ssdr.sub"],
        "kle": run.manifest["stages"]["reduce:kle"]["artifacts"]["subspaces/kle.sub"],
    }
    if run.stage_complete("validity", params) and not force:
        return run.manifest["stages"]["validity"]["summary"]
    if run.stage_recorded("validity") and not force:
        raise UsageError("validity stage already recorded with different inputs; use --force")

    _, _, bsurf = build_problem_geometry(cfg)
    checker = ValidityChecker(bsurf)
    rows = []
    summary = {}
    for mode in ("ssdr", "kle"):
        sub = load_subspace(run.path(f"subspaces/{mode}.sub"))
        result = invalid_fraction(
            sub,
            checker,
            samples_per_run=v_cfg["samples"],
            runs=v_cfg["runs"],
            kappa=cfg["subspace"]["kappa"],
            seed=v_cfg["seed"],
        )
        summary[mode] = {"mean_pct": result.mean_pct, "std_pct": result.std_pct}
        for i, pct in enumerate(result.per_run_pct):
            rows.append([mode, i, v_cfg["seed"], float(pct)])
    summary["ssdr_not_worse"] = summary["ssdr"]["mean_pct"] <= summary["kle"]["mean_pct"]
    rel = "quality/validity.csv"
    atomic_write_text(run.path(rel), format_csv(rows, ["subspace", "run", "seed", "invalid_pct"]))
    run.record_stage("validity", params, [rel], extra={"summary": summary})
    return summary


def resolve_ga_config(cfg: dict, space_kind: str, m: int | None = None) -> GaConfig:
    """Population/generation protocol for a space: full 800x40, reduced
    10 x m x 3 for 30 generations (paper profile)."""
    o = cfg["optimize"]
    if space_kind == "full":
        population = o["full"]["population"]
        generations = o["full"]["generations"]
    else:
        if m is None:
            raise UsageError("reduced-space sizing needs the subspace dimension")
        population = o["reduced"]["population"] or population_size_for(m)
        generations = o["reduced"]["generations"]
    return GaConfig(
        population=population,
        generations=generations,
        crossover_rate=o["crossover_rate"],
        crossover_eta=o["crossover_eta"],
        mutation_eta=o["mutation_eta"],
        seed=o["seed"],
    )


class FullSpaceEvaluation:
    """Picklable design-vector evaluation: loft, validity gate, evaluator."""

    def __init__(self, base, space, checker, evaluator, op, chordwise, radial):
        self.base = base
        self.space = space
        self.checker = checker
        self.evaluator = evaluator
        self.op = op
        self.chordwise = chordwise
        self.radial = radial

    def __call__(self, t):
        grid = surface.build_grids(self.base, self.space, t, self.chordwise, self.radial)
        if not self.checker.check_batch(grid)[0]:
            return None, False
        surf = surface.BladeSurface(grid=grid, node_weights=surface.mesh_node_weights(grid))
        return self.evaluator.evaluate(surf, self.base, self.op), True


class LatentSpaceEvaluation:
    """Picklable latent-vector evaluation: decode, validity gate, evaluator."""

    def __init__(self, sub, base, checker, evaluator, op):
        self.sub = sub
        self.base = base
        self.checker = checker
        self.evaluator = evaluator
        self.op = op

    def __call__(self, v):
        grid, _ = sublib.decode(self.sub, v)
        if not self.checker.check_batch(grid)[0]:
            return None, False
        surf = surface.BladeSurface(grid=grid, node_weights=surface.mesh_node_weights(grid))
        return self.evaluator.evaluate(surf, self.base, self.op), True


def cmd_optimize(run: RunDir, space_kind: str, force: bool = False, plan_only: bool = False,
                 threads: int = 1) -> dict:
    """Run (or, with plan_only, just plan and manifest) the GA stage."""
    if space_kind not in ("full", "ssdr", "kle"):
        raise UsageError(f"space must be full, ssdr or kle, got {space_kind!r}")
    cfg = run.config
    stage = f"optimize:{space_kind}"
    params_base: dict = {"optimize": cfg["optimize"], "hydro": cfg["hydro"], "space": space_kind}

    base, space, bsurf = build_problem_geometry(cfg)
    checker = ValidityChecker(bsurf)
    evaluator = evaluator_from_config(cfg)
    op = operating_point(cfg)
    grid_cfg = cfg["grid"]

    reference = evaluator.evaluate(bsurf, base, op)
    if reference.kq <= 0 or not np.isfinite(reference.kt):
        raise NumericalError("baseline evaluation failed; cannot set the thrust constraint")

    sub: ModalSubspace | None = None
    if space_kind == "full":
        lower, upper = space.lower, space.upper
        evaluate_fn = FullSpaceEvaluation(
            base, space, checker, evaluator, op, grid_cfg["chordwise"], grid_cfg["radial"]
        )
        m = None
    else:
        run.require_stage(f"reduce:{space_kind}")
        sub = load_subspace(run.path(f"subspaces/{space_kind}.sub"))
        params_base["subspace"] = run.manifest["stages"][f"reduce:{space_kind}"]["artifacts"][
            f"subspaces/{space_kind}.sub"
        ]
        half = latent_bounds(sub)
        lower, upper = -half, half
        m = sub.m
        evaluate_fn = LatentSpaceEvaluation(sub, base, checker, evaluator, op)

    ga = resolve_ga_config(cfg, space_kind, m)
    params = {**params_base, "population": ga.population, "generations": ga.generations}
    if run.stage_complete(stage, params) and not force:
        return run.manifest["stages"][stage]["summary"]
    if run.stage_recorded(stage) and not force:
        raise UsageError(f"{stage} already recorded with different inputs; use --force")

    # the stage manifest is written before evolution so the resolved
    # protocol is inspectable even while a long run is in flight
    out_dir = run.path(f"optimize/{space_kind}")
    out_dir.mkdir(parents=True, exist_ok=True)
    run_manifest = {
        "space": space_kind,
        "population": ga.population,
        "generations": ga.generations,
        "seed": ga.seed,
        "evaluator": cfg["hydro"]["evaluator"],
        "kt_reference": reference.kt,
        "kt_band": cfg["optimize"]["kt_band"],
        "kt_limits": [
            reference.kt * (1 - cfg["optimize"]["kt_band"]),
            reference.kt * (1 + cfg["optimize"]["kt_band"]),
        ],
        "subspace_hash": params_base.get("subspace"),
        "planned_evaluations": {
            "including_initial_population": ga.population * (ga.generations + 1),
            "evolution_only": ga.population * ga.generations,
        },
    }
    atomic_write_text(out_dir / "run_manifest.json", json.dumps(run_manifest, indent=2, sort_keys=True))
    if plan_only:
        return run_manifest

    problem = OptimizationProblem(
        lower=np.asarray(lower, float),
        upper=np.asarray(upper, float),
        evaluate_fn=evaluate_fn,
        kt_reference=reference.kt,
        kt_band=cfg["optimize"]["kt_band"],
        label=space_kind,
    )
    archive = optimize(problem, ga, workers=threads)

    def rows_for(entries):
        rows = []
        for e in entries:
            res = e.result
            rows.append(
                [e.generation, e.index, int(e.feasible)]
                + [
                    float(res.kt) if res else float("nan"),
                    float(res.eta) if res else float("nan"),
                    float(res.a_cav_back) if res else float("nan"),
                    float(res.a_cav_face) if res else float("nan"),
                ]
                + [float(v) for v in e.x]
            )
        return rows

    dim = problem.dim
    header = ["gen", "id", "feasible", "K_T", "eta", "A_back", "A_face"] + [
        f"x{i}" for i in range(dim)
    ]
    atomic_write_text(out_dir / "archive.csv", format_csv(rows_for(archive.entries), header))
    front = archive.front()
    atomic_write_text(out_dir / "front.csv", format_csv(rows_for(front), header))

    # per-design JSON-lines audit stream
    lines = []
    for e in archive.entries:
        rec = {
            "id": e.index,
            "gen": e.generation,
            "valid": e.valid,
            "feasible": e.feasible,
            "x": [float(v) for v in e.x],
        }
        if e.result is not None:
            rec.update(
                kt=e.result.kt, kq=e.result.kq, eta=e.result.eta,
                a_cav_back=e.result.a_cav_back, a_cav_face=e.result.a_cav_face,
                converged=e.result.converged,
            )
        lines.append(json.dumps(rec, sort_keys=True))
    atomic_write_text(out_dir / "evaluations.jsonl", "\n".join(lines) + "\n")

    summary = {
        "front_size": len(front),
        "best_eta": max((e.objectives[0] for e in front), default=None),
        "min_a_back": min((e.objectives[1] for e in front), default=None),
        "baseline_eta": reference.eta,
        "baseline_a_back": reference.a_cav_back,
        "evaluations": len(archive.entries),
        "population": ga.population,
        "generations": ga.generations,
    }
    rels = [f"optimize/{space_kind}/archive.csv", f"optimize/{space_kind}/front.csv",
            f"optimize/{space_kind}/run_manifest.json", f"optimize/{space_kind}/evaluations.jsonl"]
    run.record_stage(stage, params, rels, extra={"summary": summary})
    return summary


def cmd_moments_report(config: dict, mesh_path: str | None, max_order: int = 3) -> str:
    """Moment vector (raw + invariants) of a mesh file or the baseline blade."""
    from .meshes import load_mesh

    if mesh_path:
        mesh = load_mesh(mesh_path)
    else:
        _, _, bsurf = build_problem_geometry(config)
        mesh = close_blade_grid(bsurf.grid)
    raw = moments.surface_moments(mesh, max_order)
    inv = moments.to_invariants(raw)
    payload = {
        "raw": json.loads(raw.to_json()),
        "invariant": json.loads(inv.to_json()),
        "published_reference": REFERENCE_INVARIANTS,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def cmd_reconstruct(run: RunDir, mode: str, latent: list[float] | None, out_name: str | None) -> Path:
    run.require_stage(f"reduce:{mode}")
    sub = load_subspace(run.path(f"subspaces/{mode}.sub"))
    v = np.zeros(sub.m) if latent is None else np.asarray(latent, dtype=float)
    if len(v) != sub.m:
        raise UsageError(f"latent vector needs {sub.m} entries, got {len(v)}")
    grid, moment_diag = sublib.decode(sub, v)
    rel = out_name or f"meshes/{mode}_reconstructed.obj"
    run.path(rel).parent.mkdir(parents=True, exist_ok=True)
    write_grid_obj(run.path(rel), grid)
    if moment_diag is not None:
        diag_rel = str(Path(rel).with_suffix(".moments.json"))
        atomic_write_text(
            run.path(diag_rel),
            json.dumps({"moment_block_prediction": list(map(float, moment_diag))}, indent=2),
        )
    return run.path(rel)


def cmd_export_mesh(config: dict, out_path: str, t: np.ndarray | None = None, fmt: str | None = None) -> Path:
    base, space, _ = build_problem_geometry(config)
    t = np.zeros(space.n) if t is None else np.asarray(t, dtype=float)
    if len(t) != space.n:
        raise UsageError(f"design vector needs {space.n} entries, got {len(t)}")
    grid_cfg = config["grid"]
    surf = surface.apply_design_vector(base, space, t, grid_cfg["chordwise"], grid_cfg["radial"])
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    suffix = (fmt or out.suffix.lstrip(".")).lower()
    if suffix == "obj":
        write_grid_obj(out, surf.grid)
    elif suffix == "stl":
        write_trimesh_stl(out, close_blade_grid(surf.grid))
    else:
        raise UsageError(f"unsupported mesh format {suffix!r} (use obj or stl)")
    return out


def cmd_report(run: RunDir) -> dict:
    """Aggregate manifest + artifacts into report.json and a text summary."""
    cfg = run.config
    stages = run.manifest["stages"]
    report: dict = {
        "run_id": run.manifest["run_id"],
        "profile": cfg.get("profile"),
        "stages_completed": sorted(stages),
    }
    if "reduce:ssdr" in stages or "reduce:kle" in stages:
        dims = {}
        for mode in ("ssdr", "kle"):
            if f"reduce:{mode}" in stages:
                info = stages[f"reduce:{mode}"]
                dims[mode] = {
                    "snapshot_dim": info["snapshot_dim"],
                    "m": info["m"],
                    "retained_pct": info["retained_pct"],
                    "reduction_pct": 100.0 * (1.0 - info["m"] / 40.0),
                }
        report["reduction"] = dims
        if "ssdr" in dims:
            report["reduction"]["ssdr"]["published_m"] = 5
            report["reduction"]["ssdr"]["matches_published_m"] = dims["ssdr"]["m"] == 5
    if "validity" in stages:
        report["validity"] = stages["validity"]["summary"]
    for space_kind in ("full", "ssdr", "kle"):
        if f"optimize:{space_kind}" in stages:
            report.setdefault("optimization", {})[space_kind] = stages[f"optimize:{space_kind}"]["summary"]
    try:
        report["baseline_invariants"] = json.loads(cmd_moments_report(cfg, None))["invariant"]["moments"]
        report["published_invariants"] = REFERENCE_INVARIANTS
    except Exception:
        pass

    atomic_write_text(run.path("report.json"), json.dumps(report, indent=2, sort_keys=True))

    lines = [f"run {report['run_id']} (profile {report.get('profile')})"]
    for mode, info in report.get("reduction", {}).items():
        lines.append(
            f"  {mode}: snapshot dim {info['snapshot_dim']}, m = {info['m']} "
            f"({info['retained_pct']:.2f}% variance, {info['reduction_pct']:.1f}% reduction)"
        )
        if "matches_published_m" in info:
            note = "matches" if info["matches_published_m"] else "differs from"
            lines.append(f"        {note} the published m = 5")
    if "validity" in report:
        v = report["validity"]
        verdict = "holds" if v["ssdr_not_worse"] else "VIOLATED (flagged, see quality/validity.csv)"
        lines.append(
            f"  validity: ssdr {v['ssdr']['mean_pct']:.3f}% vs kle {v['kle']['mean_pct']:.3f}% invalid; "
            f"ssdr <= kle {verdict}"
        )
    for space_kind, s in report.get("optimization", {}).items():
        lines.append(
            f"  optimize[{space_kind}]: front {s['front_size']}, best eta {s['best_eta']}, "
            f"min A_back {s['min_a_back']} ({s['evaluations']} evaluations, "
            f"{s['population']} x {s['generations']})"
        )
    text = "\n".join(lines) + "\n"
    atomic_write_text(run.path("report.txt"), text)
    print(text, end="")
    return report
