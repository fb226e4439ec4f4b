"""Command-line interface.

Verbs:

* certify: partition, bound, synthesize, check and (when the system has
  pointwise dynamics) cross-check by simulation; writes report.json plus
  barrier.csv and optional mc.json.
* bounds: compute transition bounds only and export bounds.csv.
* synth: synthesize from previously exported bounds.
* check: re-verify the certificate embedded in an existing report.json.
* simulate: Monte Carlo estimate of the true safety probability.
* bench: run the certify pipeline on a named built-in benchmark.

Problem specs are JSON files with a schema version field; matrices are
row-major nested lists.  Exit codes: 0 on success (and checker pass), 1 when
a certificate fails the independent checker, 2 on any structured error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .benchmarks import BENCHMARK_NAMES, Benchmark, benchmark
from .bounds import (
    Affine,
    BoundsError,
    IntervalMap,
    TransitionBounds,
    export_bounds,
    import_bounds,
)
from .geometry import Box, GeometryError, Partition, make_grid
from .lp import LPError, LPFailure
from .synth import (
    Certificate,
    GDConfig,
    SynthesisError,
    synth_cegs,
    synth_dual,
    synth_gd,
)
from .validate import NotSimulable, check_certificate, simulate

SCHEMA_VERSION = 1

_STRUCTURED_ERRORS = (
    GeometryError,
    BoundsError,
    LPError,
    LPFailure,
    SynthesisError,
    NotSimulable,
    ValueError,
    KeyError,
    OSError,
)


class SpecError(ValueError):
    """Problem-spec file is missing fields or malformed."""


@dataclass
class ProblemSpec:
    """A fully described certification problem loaded from JSON."""

    system: object  # Affine | IntervalMap | str (path to exported bounds)
    safe: Box
    initial: Box
    obstacles: tuple
    grid: tuple
    horizon: int
    solver: str = "cegs"
    solver_config: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def simulable(self) -> bool:
        return isinstance(self.system, Affine)

    def partition(self) -> Partition:
        return make_grid(self.safe, self.grid, self.initial, self.obstacles)

    def transition_bounds(self, partition: Partition) -> TransitionBounds:
        from .bounds import affine_bounds, interval_map_bounds

        if isinstance(self.system, Affine):
            return affine_bounds(self.system, partition)
        if isinstance(self.system, IntervalMap):
            return interval_map_bounds(self.system, partition)
        return import_bounds(self.system)

    def describe_system(self) -> dict:
        if isinstance(self.system, Affine):
            return {
                "type": "affine",
                "A": self.system.A.tolist(),
                "c": self.system.c.tolist(),
                "sigma": self.system.sigma.tolist(),
            }
        if isinstance(self.system, IntervalMap):
            return {"type": "interval_map", "regions": len(self.system.images)}
        return {"type": "bounds", "path": str(self.system)}


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise SpecError(f"{where} is missing required field {key!r}")
    return doc[key]


def _box_from(doc: dict, where: str) -> Box:
    return Box(_require(doc, "lo", where), _require(doc, "hi", where))


def _system_from(doc: dict) -> object:
    kind = _require(doc, "type", "system")
    if kind == "affine":
        return Affine(
            A=_require(doc, "A", "affine system"),
            c=_require(doc, "c", "affine system"),
            sigma=_require(doc, "sigma", "affine system"),
        )
    if kind == "interval_map":
        images = {
            int(cell): _box_from(img, "interval_map image")
            for cell, img in _require(doc, "images", "interval_map system").items()
        }
        return IntervalMap(images=images, sigma=_require(doc, "sigma", "interval_map system"))
    if kind == "bounds":
        return str(_require(doc, "path", "bounds system"))
    raise SpecError(f"unknown system type {kind!r}")


def load_problem_spec(path) -> ProblemSpec:
    """Parse and validate a problem-spec JSON file."""
    try:
        with open(str(path)) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path} is not valid JSON: {exc}") from exc
    schema = doc.get("schema")
    if schema != SCHEMA_VERSION:
        raise SpecError(f"unsupported spec schema {schema!r}; expected {SCHEMA_VERSION}")
    spec = ProblemSpec(
        system=_system_from(_require(doc, "system", "spec")),
        safe=_box_from(_require(doc, "safe", "spec"), "safe box"),
        initial=_box_from(_require(doc, "initial", "spec"), "initial box"),
        obstacles=tuple(_box_from(o, "obstacle") for o in doc.get("obstacles", [])),
        grid=tuple(int(c) for c in _require(doc, "grid", "spec")),
        horizon=int(_require(doc, "horizon", "spec")),
        solver=str(doc.get("solver", "cegs")),
        solver_config=dict(doc.get("solver_config", {})),
        seed=int(doc.get("seed", 0)),
    )
    if spec.solver not in ("dual", "cegs", "gd"):
        raise SpecError(f"unknown solver {spec.solver!r}")
    if spec.horizon < 0:
        raise SpecError("horizon must be >= 0")
    spec.partition()  # fail fast on geometry invariants
    return spec


def _spec_from_benchmark(bm: Benchmark, args) -> ProblemSpec:
    system = bm.model
    if system is None:
        part = bm.partition(args.grid)
        system = IntervalMap.from_function(part, bm.image_fn, bm.sigma)
    return ProblemSpec(
        system=system,
        safe=bm.safe,
        initial=bm.initial,
        obstacles=bm.obstacles,
        grid=tuple(args.grid) if args.grid else bm.default_counts,
        horizon=bm.horizon,
        solver="cegs",
        seed=0,
    )


def _apply_overrides(spec: ProblemSpec, args) -> ProblemSpec:
    if getattr(args, "grid", None):
        spec.grid = tuple(args.grid)
    if getattr(args, "horizon", None) is not None:
        spec.horizon = int(args.horizon)
    if getattr(args, "solver", None):
        spec.solver = args.solver
    if getattr(args, "seed", None) is not None:
        spec.seed = int(args.seed)
    for flag, key in (
        ("norm_p", "norm_order"),
        ("step0", "step0"),
        ("decay", "decay"),
        ("stall_tol", "stall_tol"),
        ("stall_window", "stall_window"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            spec.solver_config[key] = value
    return spec


def _gd_config(spec: ProblemSpec) -> GDConfig:
    cfg = {
        k: v
        for k, v in spec.solver_config.items()
        if k in ("norm_order", "step0", "decay", "max_iters", "stall_window", "stall_tol")
    }
    if "norm_order" in cfg:
        cfg["norm_order"] = float(cfg["norm_order"])
    if "stall_window" in cfg:
        cfg["stall_window"] = int(cfg["stall_window"])
    if "max_iters" in cfg:
        cfg["max_iters"] = int(cfg["max_iters"])
    return GDConfig(**cfg)


def _synthesize(spec: ProblemSpec, bounds: TransitionBounds, partition: Partition):
    if spec.solver == "dual":
        backend = spec.solver_config.get("lp_backend", "auto")
        cert, _ = synth_dual(bounds, partition, spec.horizon, lp_backend=backend)
        return cert
    if spec.solver == "cegs":
        kwargs = {}
        if "tol" in spec.solver_config:
            kwargs["tol"] = float(spec.solver_config["tol"])
        if "max_outer" in spec.solver_config:
            kwargs["max_outer"] = int(spec.solver_config["max_outer"])
        if "lp_backend" in spec.solver_config:
            kwargs["lp_backend"] = spec.solver_config["lp_backend"]
        return synth_cegs(bounds, partition, spec.horizon, **kwargs)
    return synth_gd(bounds, partition, spec.horizon, config=_gd_config(spec))


def _resolved_config(spec: ProblemSpec, args) -> dict:
    solver_config = dict(spec.solver_config)
    if spec.solver == "gd":
        gd = _gd_config(spec)
        solver_config = {
            "norm_order": gd.norm_order,
            "step0": gd.step0 if gd.step0 is not None else 0.1 / max(spec.horizon, 1),
            "decay": gd.decay,
            "max_iters": gd.max_iters,
            "stall_window": gd.stall_window,
            "stall_tol": gd.stall_tol,
        }
    elif spec.solver == "cegs":
        solver_config = {
            "tol": float(spec.solver_config.get("tol", 1e-9)),
            "max_outer": int(spec.solver_config.get("max_outer", 100)),
            "lp_backend": spec.solver_config.get("lp_backend", "auto"),
        }
    else:
        solver_config = {"lp_backend": spec.solver_config.get("lp_backend", "auto")}
    return {
        "system": spec.describe_system(),
        "safe": {"lo": spec.safe.lo.tolist(), "hi": spec.safe.hi.tolist()},
        "initial": {"lo": spec.initial.lo.tolist(), "hi": spec.initial.hi.tolist()},
        "obstacles": [
            {"lo": box.lo.tolist(), "hi": box.hi.tolist()} for box in spec.obstacles
        ],
        "grid": list(spec.grid),
        "horizon": spec.horizon,
        "solver": spec.solver,
        "solver_config": solver_config,
        "seed": spec.seed,
        "trials": int(getattr(args, "trials", None) or 100_000),
    }


def _partition_summary(part: Partition) -> dict:
    return {
        "counts": list(part.counts),
        "K": part.K,
        "initial_regions": int(part.initial_decision_positions.shape[0]),
        "unsafe_cells": len(part.unsafe_indices),
    }


def _write_barrier_csv(path, part: Partition, cert: Certificate) -> None:
    """All grid cells with box corners; unsafe cells carry the pinned value 1."""
    dim = part.dim
    b_full = np.ones(part.n_cells)
    b_full[part.decision_indices] = cert.b
    lo, hi = part.cell_corners(np.arange(part.n_cells))
    header = (
        ["cell"]
        + [f"lo{d}" for d in range(dim)]
        + [f"hi{d}" for d in range(dim)]
        + ["b"]
    )
    with open(str(path), "w") as fh:
        fh.write(",".join(header) + "\n")
        for idx in range(part.n_cells):
            cells = [str(idx)]
            cells += [format(v, ".17g") for v in lo[idx]]
            cells += [format(v, ".17g") for v in hi[idx]]
            cells.append(format(b_full[idx], ".17g"))
            fh.write(",".join(cells) + "\n")


def _write_json(path, doc: dict) -> None:
    with open(str(path), "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _certify_pipeline(spec: ProblemSpec, args, out, extra: dict) -> int:
    t0 = time.perf_counter()
    part = spec.partition()
    bounds = spec.transition_bounds(part)
    cert = _synthesize(spec, bounds, part)
    report = check_certificate(cert, bounds, part)
    mc = None
    if spec.simulable:
        trials = int(getattr(args, "trials", None) or 100_000)
        mc = simulate(spec.system, spec, spec.horizon, trials=trials, seed=spec.seed)
    doc = {
        "schema": SCHEMA_VERSION,
        "command": extra.get("command", "certify"),
        "config": _resolved_config(spec, args),
        "partition": _partition_summary(part),
        "certificate": cert.as_dict(),
        "check": report.to_json(),
        "mc": mc.to_json() if mc is not None else None,
        "runtime_s": time.perf_counter() - t0,
    }
    doc.update({k: v for k, v in extra.items() if k != "command"})
    _write_json(out / "report.json", doc)
    _write_barrier_csv(out / "barrier.csv", part, cert)
    if mc is not None:
        _write_json(out / "mc.json", mc.to_json())
    print(
        f"{cert.solver}: K={cert.K} eta={cert.eta:.6g} beta={cert.beta:.6g} "
        f"safety_lower_bound={cert.safety_lower_bound:.6g} "
        f"check={'pass' if report.passed else 'FAIL'}"
    )
    return 0 if report.passed else 1


def cmd_certify(args) -> int:
    spec = _apply_overrides(load_problem_spec(args.spec), args)
    out = _out_dir(args)
    return _certify_pipeline(spec, args, out, {"command": "certify"})


def cmd_bounds(args) -> int:
    spec = _apply_overrides(load_problem_spec(args.spec), args)
    out = _out_dir(args)
    part = spec.partition()
    bounds = spec.transition_bounds(part)
    export_bounds(bounds, out / "bounds.csv")
    _write_json(
        out / "report.json",
        {
            "schema": SCHEMA_VERSION,
            "command": "bounds",
            "config": _resolved_config(spec, args),
            "partition": _partition_summary(part),
            "nnz": int(bounds.indices.shape[0]),
        },
    )
    print(f"bounds: K={part.K} nnz={bounds.indices.shape[0]} -> {out / 'bounds.csv'}")
    return 0


def cmd_synth(args) -> int:
    spec = _apply_overrides(load_problem_spec(args.spec), args)
    out = _out_dir(args)
    part = spec.partition()
    if isinstance(spec.system, str):
        bounds = import_bounds(spec.system)
    else:
        source = out / "bounds.csv"
        if not source.exists():
            raise SpecError(
                f"{source} not found; run the bounds command first or point the "
                "spec's system at an exported bounds file"
            )
        bounds = import_bounds(source)
    if bounds.K != part.K:
        raise SpecError(
            f"imported bounds have K={bounds.K} but the grid yields K={part.K}"
        )
    cert = _synthesize(spec, bounds, part)
    report = check_certificate(cert, bounds, part)
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "synth",
        "config": _resolved_config(spec, args),
        "partition": _partition_summary(part),
        "certificate": cert.as_dict(),
        "check": report.to_json(),
        "mc": None,
    }
    _write_json(out / "report.json", doc)
    _write_barrier_csv(out / "barrier.csv", part, cert)
    print(
        f"{cert.solver}: K={cert.K} safety_lower_bound={cert.safety_lower_bound:.6g} "
        f"check={'pass' if report.passed else 'FAIL'}"
    )
    return 0 if report.passed else 1


def cmd_check(args) -> int:
    spec = _apply_overrides(load_problem_spec(args.spec), args)
    out = _out_dir(args)
    report_path = out / "report.json"
    cert_path = out / "certificate.json"
    if report_path.exists():
        with open(report_path) as fh:
            doc = json.load(fh)
        cert_doc = doc.get("certificate")
        if not cert_doc:
            raise SpecError(f"{report_path} does not embed a certificate")
        cert = Certificate(
            solver=str(cert_doc["solver"]),
            K=int(cert_doc["K"]),
            N=int(cert_doc["N"]),
            eta=float(cert_doc["eta"]),
            beta=float(cert_doc["beta"]),
            beta_per_region=np.asarray(cert_doc["beta_per_region"], dtype=float),
            b=np.asarray(cert_doc["b"], dtype=float),
            safety_lower_bound=float(cert_doc["safety_lower_bound"]),
            diagnostics=dict(cert_doc.get("diagnostics", {})),
        )
    elif cert_path.exists():
        cert = Certificate.from_json(cert_path)
    else:
        raise SpecError(
            f"neither {report_path} nor {cert_path} found; nothing to check"
        )
    part = spec.partition()
    bounds = spec.transition_bounds(part)
    report = check_certificate(cert, bounds, part)
    print(json.dumps(report.to_json(), indent=1))
    return 0 if report.passed else 1


def cmd_simulate(args) -> int:
    spec = _apply_overrides(load_problem_spec(args.spec), args)
    out = _out_dir(args)
    if not spec.simulable:
        raise NotSimulable(
            "spec system has no pointwise dynamics; only affine systems simulate"
        )
    trials = int(args.trials or 100_000)
    mc = simulate(spec.system, spec, spec.horizon, trials=trials, seed=spec.seed)
    _write_json(out / "mc.json", mc.to_json())
    print(
        f"simulate: {mc.safe_count}/{mc.trajectories} safe, estimate {mc.estimate:.6f}, "
        f"99% Wilson [{mc.wilson_lo:.6f}, {mc.wilson_hi:.6f}]"
    )
    return 0


def cmd_bench(args) -> int:
    bm = benchmark(args.name)
    spec = _apply_overrides(_spec_from_benchmark(bm, args), args)
    out = _out_dir(args)
    return _certify_pipeline(
        spec, args, out, {"command": "bench", "benchmark": bm.to_json()}
    )


def _out_dir(args):
    from pathlib import Path

    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_grid(text: str) -> tuple:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwcbarrier",
        description="Certify probabilistic safety with piecewise-constant barrier functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: current)")
    common.add_argument("--solver", choices=("dual", "cegs", "gd"))
    common.add_argument("--grid", type=_parse_grid, help='grid counts, e.g. "30,20"')
    common.add_argument("--horizon", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int, help="Monte Carlo trajectories")
    common.add_argument("--norm-p", dest="norm_p", type=float, help="GD smoothing norm order")
    common.add_argument("--step0", type=float, help="GD initial step size")
    common.add_argument("--decay", type=float, help="GD step decay rate")
    common.add_argument("--stall-tol", dest="stall_tol", type=float)
    common.add_argument("--stall-window", dest="stall_window", type=int)

    spec_arg = argparse.ArgumentParser(add_help=False)
    spec_arg.add_argument("--spec", required=True, help="problem spec JSON file")

    sub.add_parser("certify", parents=[spec_arg, common]).set_defaults(fn=cmd_certify)
    sub.add_parser("bounds", parents=[spec_arg, common]).set_defaults(fn=cmd_bounds)
    sub.add_parser("synth", parents=[spec_arg, common]).set_defaults(fn=cmd_synth)
    sub.add_parser("check", parents=[spec_arg, common]).set_defaults(fn=cmd_check)
    sub.add_parser("simulate", parents=[spec_arg, common]).set_defaults(fn=cmd_simulate)
    bench = sub.add_parser("bench", parents=[common])
    bench.add_argument("name", choices=BENCHMARK_NAMES)
    bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _STRUCTURED_ERRORS as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
