"""Batch command line: eval, run, render, stars.

Exit codes: 0 success, 1 scene or structural error, 2 formula error,
3 runtime numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import stars
from .dynamics import DynamicsError, Trajectory
from .formula import Env, FormulaError, evaluate, format_value, parse
from .graph import GraphError, Simulation, StepError, ValidationError, _SolverBehavior
from .render import RenderError, render
from .scene import Scene, SceneError, load_scene

EXIT_OK, EXIT_SCENE, EXIT_FORMULA, EXIT_RUNTIME = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _binding(text: str) -> tuple[str, object]:
    name, sep, raw = text.partition("=")
    if not sep or not name.strip():
        raise CliError(EXIT_FORMULA, f"binding {text!r} is not name=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_FORMULA, f"binding {name}: cannot parse {raw!r} as a literal") from exc
    return name.strip(), value


def cmd_eval(args) -> int:
    bindings = dict(_binding(b) for b in args.bindings)
    try:
        value = evaluate(parse(args.expr), Env(bindings))
    except FormulaError as exc:
        raise CliError(EXIT_FORMULA, f"{type(exc).__name__}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_FORMULA, str(exc)) from exc
    print(format_value(value))
    return EXIT_OK


def _inside(out: Path, rel: str) -> Path:
    path = (out / rel).resolve()
    if out.resolve() not in (path, *path.parents):
        raise CliError(EXIT_SCENE, f"output path {rel!r} escapes the output directory")
    return path


def _load(args) -> Scene:
    try:
        scene = load_scene(args.scene)
    except SceneError as exc:
        raise CliError(EXIT_SCENE, str(exc)) from exc
    for key in ("t0", "t1", "dt"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(scene, key, value)
    if not scene.dt > 0:
        raise CliError(EXIT_SCENE, "dt must be positive")
    if not scene.t1 > scene.t0:
        raise CliError(EXIT_SCENE, "t1 must be greater than t0")
    return scene


def _simulation(scene: Scene) -> Simulation:
    try:
        return Simulation(scene.graph)
    except ValidationError as exc:
        raise CliError(EXIT_SCENE, str(exc)) from exc


def _runtime(exc: StepError) -> CliError:
    return CliError(EXIT_RUNTIME, f"runtime failure at t={exc.t:.17g} in component {exc.component!r}: {exc.cause}")


class _Rows:
    """Per-step rows of a non-solver component's scalar and vector outputs."""

    def __init__(self, sim: Simulation, cid: str):
        self.cid = cid
        self.names = None
        self.traj = None

    def record(self, t, sim):
        flat = {}
        for name, value in sim.table[self.cid].items():
            if isinstance(value, (bool, int, float)):
                flat[name] = float(value)
            elif getattr(value, "ndim", 0) == 1:
                flat.update({f"{name}_{i}": float(v) for i, v in enumerate(value)})
        if self.traj is None:
            self.traj = Trajectory(tuple(flat))
        self.traj.append(t, [flat[n] for n in self.traj.names])


def cmd_run(args) -> int:
    scene = _load(args)
    out = Path(args.out)
    sim = _simulation(scene)
    traj_sinks, frame_sinks = [], []
    for sink in scene.outputs:
        if sink["type"] == "trajectory":
            cid = sink.get("component")
            if cid not in sim.behaviors:
                raise CliError(EXIT_SCENE, f"trajectory sink refers to unknown component {cid!r}")
            traj_sinks.append((sink, _inside(out, sink.get("path", f"{cid}.csv"))))
        else:
            try:
                sim.camera(sink.get("camera"))
            except GraphError as exc:
                raise CliError(EXIT_SCENE, str(exc)) from exc
            stride = sink.get("stride", 1)
            if not isinstance(stride, int) or stride < 1:
                raise CliError(EXIT_SCENE, "frame stride must be a positive integer")
            frame_sinks.append((sink["camera"], stride, _inside(out, sink.get("dir", "."))))
    rows = {sink["component"]: _Rows(sim, sink["component"]) for sink, _ in traj_sinks
            if not isinstance(sim.behaviors[sink["component"]], _SolverBehavior)}
    frames = [0]

    def on_step(k, t, sim):
        for r in rows.values():
            r.record(t, sim)
        for camera, stride, folder in frame_sinks:
            if k % stride == 0:
                folder.mkdir(parents=True, exist_ok=True)
                frames[0] += 1
                index = k // stride + 1
                render(sim, camera).save(folder / f"frame_{index:06d}.ppm")

    try:
        steps = sim.run(scene.t0, scene.t1, scene.dt, on_step)
    except StepError as exc:
        raise _runtime(exc) from exc
    except (GraphError, RenderError) as exc:
        raise CliError(EXIT_SCENE, str(exc)) from exc
    for sink, path in traj_sinks:
        cid = sink["component"]
        b = sim.behaviors[cid]
        traj = b.trajectory if isinstance(b, _SolverBehavior) else rows[cid].traj
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(traj.to_csv())
    if not args.quiet:
        print(f"steps={steps} components={len(sim.order)} frames={frames[0]}")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = _load(args)
    sim = _simulation(scene)
    try:
        sim.camera(args.camera)
    except GraphError as exc:
        raise CliError(EXIT_SCENE, str(exc)) from exc
    t = scene.t0 if args.time is None else args.time
    if t < scene.t0:
        raise CliError(EXIT_SCENE, "render time precedes t0")
    try:
        if t == scene.t0:
            sim.initialize(t)
        else:
            sim.run(scene.t0, t, scene.dt)
        image = render(sim, args.camera)
    except StepError as exc:
        raise _runtime(exc) from exc
    except (GraphError, RenderError) as exc:
        raise CliError(EXIT_SCENE, str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    image.save(out)
    if not args.quiet:
        print(f"wrote {out} ({image.width}x{image.height})")
    return EXIT_OK


def cmd_stars(args) -> int:
    try:
        columns = stars.ColumnMap.parse(args.map) if args.map else stars.ColumnMap()
        text = Path(args.catalog).read_text()
    except OSError as exc:
        raise CliError(EXIT_SCENE, f"cannot read catalogue: {exc}") from exc
    except stars.StarError as exc:
        raise CliError(EXIT_SCENE, str(exc)) from exc
    try:
        predicate = stars.check_predicate(args.filter) if args.filter else None
    except FormulaError as exc:
        raise CliError(EXIT_FORMULA, f"{type(exc).__name__}: {exc}") from exc
    try:
        records, skipped = stars.read_catalog(text, columns)
    except stars.StarError as exc:
        raise CliError(EXIT_SCENE, str(exc)) from exc
    read = len(records) + len(skipped)
    try:
        kept = stars.filter_records(records, predicate) if predicate is not None else records
    except FormulaError as exc:
        raise CliError(EXIT_FORMULA, f"{type(exc).__name__}: {exc}") from exc
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(stars.export_csv(kept))
    if not args.quiet:
        for line, reason in skipped:
            print(f"WARNING line {line}: {reason}", file=sys.stderr)
        print(f"read={read} kept={len(kept)} skipped={len(skipped)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress summaries")
    parser = argparse.ArgumentParser(prog="vrframe", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate a formula")
    p.add_argument("expr")
    p.add_argument("bindings", nargs="*", metavar="name=value")
    p.set_defaults(func=cmd_eval)

    def window(p):
        p.add_argument("scene")
        p.add_argument("--t0", type=float)
        p.add_argument("--t1", type=float)
        p.add_argument("--dt", type=float)

    p = sub.add_parser("run", parents=[common], help="run a scene and write its outputs")
    window(p)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", parents=[common], help="render one frame of a scene")
    window(p)
    p.add_argument("--time", type=float)
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True, help="output PPM file")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("stars", parents=[common], help="filter and convert a star catalogue")
    p.add_argument("catalog")
    p.add_argument("--filter")
    p.add_argument("--map", help="column map, e.g. ra=ra_deg,dec=dec_deg,angle_unit=deg")
    p.add_argument("--out", help="output CSV")
    p.set_defaults(func=cmd_stars)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    args.quiet = getattr(args, "quiet", False)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DynamicsError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENE


if __name__ == "__main__":
    sys.exit(main())
