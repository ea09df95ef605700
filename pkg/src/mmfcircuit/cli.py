"""Command line front end: ``python -m mmfcircuit``.

Every command reads a TOML experiment file. Keys live in free-form sections
(``[bench]``, ``[source]``, ``[array]``, ``[acquisition]``, ``[calibration]``)
and map onto :class:`PipelineConfig` fields; ``[seeds] bench`` is mandatory.
Optional tables: ``preset = "paper-grade" | "noiseless" | "default"`` at top
level, ``[operator]`` (``kind``, ``n_det``, ``seed``, ``path``) and
``[output] dir``.

Exit codes: 0 success, 2 configuration error, 3 runtime or fit failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bench import write_pgm
from .calibration import CrosstalkModel, localize_detectors
from .errors import CalibrationRequired, InvalidConfig, MMFCircuitError
from .linalg import TargetOperator, random_operator, sylvester_operator
from .metrics import random_circuit_study, reports_to_csv, reports_to_json, similarity
from .pipeline import (
    _TRIAL,
    Experiment,
    PipelineConfig,
    child_rng,
    hom_scan_measure,
    noiseless,
    paper_grade,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PRESETS = {"default": PipelineConfig, "paper-grade": paper_grade, "noiseless": noiseless}
SECTIONS = ("bench", "source", "array", "acquisition", "calibration")
MODEL_FILE = "crosstalk_model.json"


@dataclass(frozen=True)
class OperatorSpec:
    kind: str = "sylvester"
    n_det: int = 4
    seed: int | None = None
    path: str | None = None

    def build(self, base_dir: Path) -> TargetOperator:
        if self.kind == "sylvester":
            return sylvester_operator(self.n_det)
        if self.kind == "random":
            return random_operator(self.n_det, self.seed)
        return TargetOperator.from_json((base_dir / self.path).read_text())


@dataclass(frozen=True)
class ExperimentConfig:
    pipeline: PipelineConfig
    operator: OperatorSpec = field(default_factory=OperatorSpec)
    output_dir: Path = Path("out")
    model_path: Path | None = None
    preset: str = "default"
    source_dir: Path = Path(".")

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "pipeline": self.pipeline.to_dict(),
            "operator": vars(self.operator),
            "model": None if self.model_path is None else str(self.model_path),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment file; raises :class:`InvalidConfig`."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"malformed config: {exc}") from exc
    return config_from_dict(raw, path.parent)


def config_from_dict(raw: dict, base_dir=Path(".")) -> ExperimentConfig:
    raw = dict(raw)
    base_dir = Path(base_dir)
    preset = raw.pop("preset", "default")
    if preset not in PRESETS:
        raise InvalidConfig(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    seeds = raw.pop("seeds", {})
    if "bench" not in seeds:
        raise InvalidConfig("[seeds] bench is required: runs must be explicitly seeded")
    params = {"seed": int(seeds["bench"])}
    for sec in SECTIONS:
        table = raw.pop(sec, {})
        clash = set(table) & set(params)
        if clash:
            raise InvalidConfig(f"keys given twice: {sorted(clash)}")
        params.update(table)
    model = params.pop("model", None)

    op_raw = dict(raw.pop("operator", {}))
    kind = op_raw.get("kind", "sylvester")
    if kind not in ("sylvester", "random", "file"):
        raise InvalidConfig(f"operator kind must be sylvester, random or file, not {kind!r}")
    if kind == "random" and "seed" not in op_raw:
        op_raw["seed"] = seeds.get("operator")
        if op_raw["seed"] is None:
            raise InvalidConfig("random operators need [operator] seed or [seeds] operator")
    if kind == "file":
        if "path" not in op_raw or not (base_dir / op_raw["path"]).is_file():
            raise InvalidConfig("operator file missing")
    unknown_op = set(op_raw) - {"kind", "n_det", "seed", "path"}
    if unknown_op:
        raise InvalidConfig(f"unknown operator keys: {sorted(unknown_op)}")
    operator = OperatorSpec(**op_raw)

    out_dir = Path(raw.pop("output", {}).get("dir", "out"))
    if raw:
        raise InvalidConfig(f"unknown config sections: {sorted(raw)}")
    if model is not None and not (base_dir / model).is_file():
        raise InvalidConfig(f"cross-talk model file not found: {model}")
    try:
        factory = PRESETS[preset]
        known = PipelineConfig.__dataclass_fields__
        unknown = set(params) - set(known)
        if unknown:
            raise InvalidConfig(f"unknown configuration keys: {sorted(unknown)}")
        if "disabled_pixels" in params:
            params["disabled_pixels"] = tuple(params["disabled_pixels"])
        pipeline = factory(**params)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc
    return ExperimentConfig(
        pipeline,
        operator,
        out_dir if out_dir.is_absolute() else base_dir / out_dir,
        None if model is None else base_dir / model,
        preset,
        base_dir,
    )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, cfg: ExperimentConfig, command: str, args: dict, outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "arguments": args,
        "version": __version__,
        "config_hash": cfg.digest(),
        "seeds": {"bench": cfg.pipeline.seed, "operator": cfg.operator.seed},
        "config": cfg.to_dict(),
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = out / f"manifest_{command.replace(' ', '_')}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _load_model(cfg: ExperimentConfig, cli_model: str | None) -> CrosstalkModel | None:
    if not cfg.pipeline.correct:
        return None
    candidates = [Path(cli_model)] if cli_model else []
    if cfg.model_path is not None:
        candidates.append(cfg.model_path)
    candidates.append(cfg.output_dir / MODEL_FILE)
    for path in candidates:
        if path.is_file():
            return CrosstalkModel.from_json(path.read_text())
    raise CalibrationRequired("correction requested but no cross-talk model found; run calibrate-crosstalk first")


def _matrix_csv(path: Path, m: np.ndarray) -> None:
    i, j = np.triu_indices(m.shape[0], 1)
    lines = ["i,j,value"] + [f"{a},{b},{float(m[a, b])!r}" for a, b in zip(i, j)]
    path.write_text("\n".join(lines) + "\n")


def cmd_measure_tm(cfg: ExperimentConfig, args) -> list[Path]:
    exp = Experiment(cfg.pipeline)
    out = cfg.output_dir
    tp = exp.two_photon
    files = []
    rows = ["polarization,mean_row_fidelity,min_row_fidelity"]
    for tm in (tp.tm_H, tp.tm_V):
        p = out / f"tm_{tm.polarization}.json"
        p.write_text(tm.to_json() + "\n")
        files.append(p)
        truth = exp.bench.transmission(tm.polarization)
        cos = np.abs(np.sum(tm.t * truth.conj(), axis=1)) / (
            np.linalg.norm(tm.t, axis=1) * np.linalg.norm(truth, axis=1)
        )
        rows.append(f"{tm.polarization},{float(cos.mean())!r},{float(cos.min())!r}")
        print(f"TM {tm.polarization}: reconstruction fidelity mean {cos.mean():.6f} min {cos.min():.6f}")
    report = out / "tm_fidelity.csv"
    report.write_text("\n".join(rows) + "\n")
    return files + [report]


def cmd_calibrate(cfg: ExperimentConfig, args) -> list[Path]:
    exp = Experiment(cfg.pipeline)
    model = exp.calibrate(args.patterns)
    p = cfg.output_dir / MODEL_FILE
    p.write_text(model.to_json() + "\n")
    print(f"cross-talk model from {args.patterns or cfg.pipeline.calib_patterns} patterns -> {p}")
    return [p]


def _target(cfg: ExperimentConfig, n_det: int | None, default_kind: str | None = None) -> TargetOperator:
    op = cfg.operator
    if default_kind is not None:
        op = OperatorSpec(default_kind, op.n_det, op.seed, op.path)
    if n_det is not None:
        op = OperatorSpec(op.kind, n_det, op.seed, op.path)
    return op.build(cfg.source_dir)


def cmd_sylvester(cfg: ExperimentConfig, args) -> list[Path]:
    c = cfg.pipeline
    model = _load_model(cfg, args.model)
    exp = Experiment(c)
    target = _target(cfg, args.n_det, "sylvester")
    L = exp.realize(target, child_rng(c.seed, _TRIAL, target.n_det, 0, 1))
    rec = exp.analyse(exp.acquire(L, c.gamma0, child_rng(c.seed, _TRIAL, target.n_det, 0, 2)), target.n_det, model)
    theory = exp.theory(target, L, 1.0)
    out = cfg.output_dir
    p_exp, p_th = out / "coincidences_experimental.csv", out / "coincidences_theory.csv"
    _matrix_csv(p_exp, rec.C)
    _matrix_csv(p_th, theory.probs)
    print(f"{target.n_det}x{target.n_det} Sylvester: similarity {similarity(rec, theory):.4f}")
    return [p_exp, p_th]


def cmd_hom(cfg: ExperimentConfig, args) -> list[Path]:
    c = cfg.pipeline
    model = _load_model(cfg, args.model)
    target = _target(cfg, args.n_det)
    delays = np.asarray(args.delays, dtype=float) * 1e-15
    scan = hom_scan_measure(c, target, delays, model=model)
    out = cfg.output_dir
    n = target.n_det
    i, j = np.triu_indices(n, 1)
    lines = ["delay_fs,i,j,raw,corrected,expected"]
    for k, tau in enumerate(scan.delays):
        for a, b in zip(i, j):
            corr = repr(float(scan.corrected[k].C[a, b])) if scan.corrected is not None else ""
            lines.append(
                f"{tau * 1e15!r},{a},{b},{float(scan.raw[k].C[a, b])!r},{corr},{float(scan.expected[k][a, b])!r}"
            )
    curves = out / "hom_curves.csv"
    curves.write_text("\n".join(lines) + "\n")
    files = [curves]
    if np.any(np.abs(scan.delays) >= 3 * c.coherence_delay):
        v_raw = scan.visibilities(False, coherence_delay=c.coherence_delay)
        v_cor = scan.visibilities(True, coherence_delay=c.coherence_delay) if model is not None else None
        vis = ["i,j,visibility_raw,visibility_corrected"]
        for a, b in zip(i, j):
            vc = "" if v_cor is None else repr(float(v_cor[a, b]))
            vis.append(f"{a},{b},{float(v_raw[a, b])!r},{vc}")
        p = out / "visibilities.csv"
        p.write_text("\n".join(vis) + "\n")
        files.append(p)
        print(f"HOM scan over {len(delays)} delays; raw visibilities {np.nanmin(v_raw):.3f}..{np.nanmax(v_raw):.3f}")
    return files


def cmd_random_study(cfg: ExperimentConfig, args) -> list[Path]:
    model = _load_model(cfg, args.model)
    reports = random_circuit_study(cfg.pipeline, args.detectors, args.trials, model=model)
    out = cfg.output_dir
    p_csv, p_json = out / "similarity_trend.csv", out / "similarity_reports.json"
    reports_to_csv(reports, p_csv)
    reports_to_json(reports, p_json)
    for r in reports:
        print(f"n_det={r.n_det:2d} {r.photon_class:17s} S = {r.mean:.3f} +- {r.std:.3f}")
    return [p_csv, p_json]


def cmd_localize(cfg: ExperimentConfig, args) -> list[Path]:
    exp = Experiment(cfg.pipeline)
    images, truth = exp.focus_images(args.psf_sigma, args.snr)
    res = localize_detectors(images, len(images))
    out = cfg.output_dir
    p = out / "detector_positions.csv"
    res.to_csv(p)
    files = [p]
    if args.save_images:
        for k, img in enumerate(images):
            q = out / f"focus_{k:02d}.pgm"
            write_pgm(np.clip(img, 0, None), q)
            files.append(q)
    err = np.hypot(*(res.positions - truth).T)
    print(f"localized {len(images) - len(res.flagged)}/{len(images)} detectors; "
          f"max error {np.nanmax(err):.3f} px; spacing CV {res.spacing_cv:.4f}")
    return files


RUNNERS = {
    "hom": cmd_hom,
    "sylvester": cmd_sylvester,
    "random-study": cmd_random_study,
    "calibrate-crosstalk": cmd_calibrate,
    "localize": cmd_localize,
}


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmfcircuit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    tm = sub.add_parser("measure-tm", help="phase-stepping TM measurement of both SLM halves")
    tm.add_argument("config")
    tm.add_argument("-o", "--output", help="output directory (overrides [output] dir)")

    run = sub.add_parser("run", help="run one experiment flow")
    flows = run.add_subparsers(dest="flow", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config")
    common.add_argument("-o", "--output", help="output directory (overrides [output] dir)")
    common.add_argument("--model", help="cross-talk model JSON used for correction")

    p = flows.add_parser("hom", parents=[common], help="HOM delay scan, per-pair dip curves")
    p.add_argument("--n-det", type=int)
    p.add_argument(
        "--delays",
        type=_float_list,
        default=list(np.linspace(-600.0, 600.0, 25)),
        help="comma-separated delays in femtoseconds",
    )
    p = flows.add_parser("sylvester", parents=[common], help="Sylvester operator coincidence matrices")
    p.add_argument("--n-det", type=int)
    p = flows.add_parser("random-study", parents=[common], help="similarity versus detector count")
    p.add_argument("--detectors", type=_int_list, default=[4, 7, 10, 16, 22])
    p.add_argument("--trials", type=int, default=100)
    p = flows.add_parser("calibrate-crosstalk", parents=[common], help="fit accidental and cross-talk model")
    p.add_argument("--patterns", type=int)
    p = flows.add_parser("localize", parents=[common], help="detector localization from focus images")
    p.add_argument("--psf-sigma", type=float, default=3.0)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--save-images", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.output:
            cfg = ExperimentConfig(
                cfg.pipeline, cfg.operator, Path(args.output), cfg.model_path, cfg.preset, cfg.source_dir
            )
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "measure-tm":
            name, files = "measure-tm", cmd_measure_tm(cfg, args)
        else:
            name, files = f"run {args.flow}", RUNNERS[args.flow](cfg, args)
        skip = {"config", "output", "command", "flow"}
        _write_manifest(cfg.output_dir, cfg, name, {k: v for k, v in vars(args).items() if k not in skip}, files)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MMFCircuitError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0
