"""Command-line front end: ``binaural-tse {hrtf,dataset,extract,eval}``.

Exit codes: 0 ok, 1 partial failure, 2 bad input or format, 3 integrity
violation, 4 missing artifacts.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import logging
import math
import os
import shlex
import subprocess
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import __version__
from .dsp import BinauralClip, StftConfig, stft
from .errors import BinauralTseError, ConfigError, FormatError, MissingArtifactError
from .extract import DEFAULT_LOADING, ExtractionClue, matched_filter_extract, mvdr_extract, oracle_mask_extract
from .hrtf import Direction, HrtfSet, grid_resolution, load_hrtf_set, nearest_direction, save_hrtf_set, synthetic_hrtf_set
from .metrics import evaluate
from .scene import DatasetProtocol, angular_sweep_protocol, mix_scene, sample_dataset

log = logging.getLogger("binaural_tse")

HRTF_DIR_ENV = "BINAURAL_TSE_HRTF_DIR"
MANIFEST_NAME = "manifest.jsonl"
CONFIG_NAME = "config.resolved.json"
METHODS = ("matched", "mvdr", "oracle", "extern")
CLUE_FFT = 512
METRIC_FIELDS = ("si_sdr_db", "si_sdri_db", "mae_stft", "delta_itd_ms", "delta_ild_db")


# ---------------------------------------------------------------- helpers


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def write_wav(path: Path, clip: BinauralClip, pcm16: bool = False):
    path.parent.mkdir(parents=True, exist_ok=True)
    data = clip.data.T
    wavfile.write(path, clip.sample_rate, data.astype(np.float32))
    if pcm16:
        peak = max(1.0, float(np.max(np.abs(data))))
        pcm = np.round(data / peak * 32767).astype(np.int16)
        wavfile.write(path.with_name(path.stem + ".pcm16.wav"), clip.sample_rate, pcm)


def read_wav(path: Path) -> BinauralClip:
    rate, raw = wavfile.read(path)
    data = np.asarray(raw, dtype=np.float64)
    if np.issubdtype(raw.dtype, np.integer):
        data = data / 32768.0
    if data.ndim != 2 or data.shape[1] != 2:
        raise FormatError(f"{path} is not a two-channel WAV")
    return BinauralClip.from_array(data.T, rate)


def resolve_hrtf_dir(explicit=None):
    value = explicit or os.environ.get(HRTF_DIR_ENV)
    return str(Path(value).resolve()) if value else None


@functools.lru_cache(maxsize=8)
def load_subject(subject: str, hrtf_dir: str | None) -> HrtfSet:
    """``synthetic`` is generated on the fly; other subjects are read from ``hrtf_dir``."""
    if hrtf_dir is not None:
        candidate = Path(hrtf_dir) / f"{subject}.hrtfset.json"
        if candidate.exists():
            return load_hrtf_set(candidate)
    if subject == "synthetic":
        return synthetic_hrtf_set()
    raise ConfigError(f"HRTF subject {subject!r} not found (set --hrtf-dir or {HRTF_DIR_ENV})")


def read_manifest(path: Path):
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    rows = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {n}: {exc}") from exc
    return path.parent, rows


def _manifest_config(root: Path) -> dict:
    cfg = root / CONFIG_NAME
    return json.loads(cfg.read_text()) if cfg.exists() else {}


def _map(fn, items, workers: int):
    """Ordered map; results do not depend on the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=1))


# ------------------------------------------------------------------- hrtf


def cmd_hrtf(args) -> int:
    if args.action == "synth":
        hrtf = synthetic_hrtf_set(azimuth_step=args.azimuth_step, elevation_step=args.elevation_step,
                                  sample_rate=args.sample_rate, ir_length=args.ir_length,
                                  subject_id=args.subject_id)
        path = save_hrtf_set(hrtf, args.path)
        print(f"wrote {len(hrtf)} entries to {path}")
        return 0
    hrtf = load_hrtf_set(args.path)
    if args.action == "validate":
        print(f"ok: {len(hrtf)} entries")
        return 0
    az_step, el_step = grid_resolution(hrtf)
    report = {
        "subject_id": hrtf.subject_id,
        "entries": len(hrtf),
        "sample_rate": hrtf.sample_rate,
        "radius_m": hrtf.radius_m,
        "ir_length": hrtf.ir_length,
        "azimuth_range_deg": [float(hrtf.azimuths.min()), float(hrtf.azimuths.max())],
        "elevation_range_deg": [float(hrtf.elevations.min()), float(hrtf.elevations.max())],
        "azimuth_step_deg": az_step,
        "elevation_step_deg": el_step,
        "max_azimuth_error_deg": None if az_step is None else az_step / 2,
        "max_elevation_error_deg": None if el_step is None else el_step / 2,
    }
    if args.json:
        print(json.dumps(report, indent=1))
    else:
        for key, value in report.items():
            print(f"{key}: {value}")
    return 0


# ---------------------------------------------------------------- dataset


def load_protocol(path: Path, sweep: bool) -> DatasetProtocol:
    """Read a protocol JSON.

    Besides the protocol fields, the file may give ``speech_dir`` (every
    ``*.wav`` below it, sorted) or ``synthetic_utterances`` (a count of
    generated pseudo-speech signals) instead of an explicit ``utterances``
    list.  Relative paths are taken relative to the protocol file.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"protocol file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    speech_dir = raw.pop("speech_dir", None)
    n_synth = raw.pop("synthetic_utterances", None)
    utterances = list(raw.pop("utterances", []))
    if speech_dir is not None:
        root = (path.parent / speech_dir).resolve()
        if not root.is_dir():
            raise ConfigError(f"speech folder not found: {root}")
        utterances += [str(p) for p in sorted(root.rglob("*.wav"))]
    if n_synth:
        utterances += [f"synth:{i}" for i in range(int(n_synth))]
    resolved = []
    for u in utterances:
        if u.startswith("synth:") or Path(u).is_absolute():
            resolved.append(u)
        else:
            resolved.append(str((path.parent / u).resolve()))
    if not resolved:
        raise ConfigError("protocol has no utterances")
    raw["utterances"] = resolved
    if sweep:
        fields = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        unknown = set(fields) - set(DatasetProtocol.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown protocol fields: {sorted(unknown)}")
        return angular_sweep_protocol(**fields)
    return DatasetProtocol.from_dict(raw)


def _render_scene(job):
    """Render one mixture (all its target rows); returns manifest rows."""
    specs, out_dir, hrtf_dir, pcm16 = job
    first = specs[0]
    rel = Path("audio") / first.scene_id
    try:
        hrtf = load_subject(first.hrtf_subject, hrtf_dir)
        rendered = mix_scene(first, hrtf)
    except (BinauralTseError, AssertionError) as exc:
        reason = f"{type(exc).__name__}: {exc}"
        return [dict(s.to_dict(), row_id=s.row_id, status="skipped", reason=reason) for s in specs]
    write_wav(Path(out_dir) / rel / "mixture.wav", rendered.mixture, pcm16)
    for i in (1, 2):
        write_wav(Path(out_dir) / rel / f"target{i}.wav", rendered.target(i), pcm16)
    rows = []
    for s in specs:
        rows.append(dict(
            s.to_dict(),
            row_id=s.row_id,
            status="ok",
            metadata=rendered.metadata,
            mixture_path=str(rel / "mixture.wav"),
            target_path=str(rel / f"target{s.target_index}.wav"),
        ))
    return rows


def cmd_dataset(args) -> int:
    protocol = load_protocol(args.protocol, args.sweep)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hrtf_dir = resolve_hrtf_dir(args.hrtf_dir)
    groups, current = [], []
    for spec in sample_dataset(protocol, args.seed):
        if current and current[0].scene_id != spec.scene_id:
            groups.append(current)
            current = []
        current.append(spec)
    if current:
        groups.append(current)
    jobs = [(g, str(out_dir), hrtf_dir, args.pcm16) for g in groups]
    results = _map(_render_scene, jobs, args.workers)
    rows = [r for group in results for r in group]
    for r in rows:
        if r["status"] == "skipped":
            log.warning("skipped %s: %s", r["row_id"], r["reason"])
    (out_dir / MANIFEST_NAME).write_text("".join(_dump(r) + "\n" for r in rows))
    snapshot = {
        "command": "dataset",
        "protocol": protocol.to_dict(),
        "seed": args.seed,
        "sweep": args.sweep,
        "hrtf_dir": hrtf_dir,
        "pcm16": args.pcm16,
        "version": __version__,
    }
    (out_dir / CONFIG_NAME).write_text(json.dumps(snapshot, indent=1, sort_keys=True) + "\n")
    n_ok = sum(r["status"] == "ok" for r in rows)
    print(f"{len(groups)} scenes, {len(rows)} rows ({n_ok} ok, {len(rows) - n_ok} skipped) -> {out_dir / MANIFEST_NAME}")
    return 0


# ---------------------------------------------------------------- extract


def _jsonable(diag: dict) -> dict:
    return {k: v for k, v in diag.items() if not isinstance(v, np.ndarray)}


def _run_extern(plugin, mixture_path, hrtf, row):
    src = row["sources"][row["target_index"] - 1]
    direction, index = nearest_direction(hrtf, Direction(src["azimuth_deg"], src["elevation_deg"]))
    excerpt = HrtfSet([direction.azimuth_deg], [direction.elevation_deg], hrtf.irs[index:index + 1],
                      hrtf.sample_rate, hrtf.radius_m, hrtf.subject_id)
    with tempfile.TemporaryDirectory() as tmp:
        clue_path = save_hrtf_set(excerpt, Path(tmp) / "clue")
        out_path = Path(tmp) / "estimate.wav"
        cmd = shlex.split(plugin) + [str(mixture_path), str(clue_path), str(out_path)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(f"plug-in exited with {proc.returncode}: {proc.stderr.strip()[-500:]}")
        if not out_path.exists():
            raise RuntimeError("plug-in wrote no estimate")
        return read_wav(out_path), {"plugin": plugin}


def _extract_row(job):
    row, root, out_dir, method, hrtf_dir, loading, plugin = job
    root, out_dir = Path(root), Path(out_dir)
    diag_path = out_dir / method / f"{row['row_id']}.json"
    try:
        mixture_path = root / row["mixture_path"]
        mixture = read_wav(mixture_path)
        hrtf = load_subject(row.get("metadata", {}).get("hrtf_subject") or row["hrtf_subject"], hrtf_dir)
        if method == "extern":
            estimate, diag = _run_extern(plugin, mixture_path, hrtf, row)
        else:
            config = StftConfig()
            mix = stft(mixture, config)
            if method == "oracle":
                result = oracle_mask_extract(mix, stft(read_wav(root / row["target_path"]), config))
            else:
                src = row["sources"][row["target_index"] - 1]
                clue = ExtractionClue.from_hrtf(hrtf, Direction(src["azimuth_deg"], src["elevation_deg"]), CLUE_FFT)
                if method == "matched":
                    result = matched_filter_extract(mix, clue)
                else:
                    result = mvdr_extract(mix, clue, loading=loading)
            estimate, diag = result.estimate, _jsonable(result.diagnostics)
        if len(estimate) != len(mixture):
            raise RuntimeError(f"estimate has {len(estimate)} samples, mixture {len(mixture)}")
        write_wav(out_dir / method / f"{row['row_id']}.wav", estimate)
        status = {"row_id": row["row_id"], "method": method, "status": "ok", "diagnostics": diag}
    except Exception as exc:  # noqa: BLE001 - a failing scene must not stop the run
        status = {"row_id": row["row_id"], "method": method, "status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
    diag_path.parent.mkdir(parents=True, exist_ok=True)
    diag_path.write_text(json.dumps(status, indent=1, sort_keys=True) + "\n")
    return status


def cmd_extract(args) -> int:
    if args.method == "extern" and not args.plugin:
        raise ConfigError("--plugin is required for --method extern")
    root, rows = read_manifest(args.manifest)
    cfg = _manifest_config(root)
    hrtf_dir = resolve_hrtf_dir(args.hrtf_dir) or cfg.get("hrtf_dir")
    rows = [r for r in rows if r.get("status") == "ok"]
    jobs = [(r, str(root), args.out_dir, args.method, hrtf_dir, args.loading, args.plugin) for r in rows]
    results = _map(_extract_row, jobs, args.workers)
    failed = [r for r in results if r["status"] != "ok"]
    for r in failed:
        log.error("%s failed: %s", r["row_id"], r["reason"])
    snapshot = {"command": "extract", "manifest": str(Path(args.manifest).resolve()), "method": args.method,
                "loading": args.loading, "plugin": args.plugin, "hrtf_dir": hrtf_dir, "version": __version__}
    out = Path(args.out_dir) / args.method
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_NAME).write_text(json.dumps(snapshot, indent=1, sort_keys=True) + "\n")
    print(f"{args.method}: {len(results) - len(failed)} ok, {len(failed)} failed")
    return 1 if failed else 0


# ------------------------------------------------------------------- eval


def _eval_row(job):
    row, root, est_path, method, shift_tolerant = job
    root = Path(root)
    sidecar = Path(est_path).with_suffix(".external.json")
    external = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    external = {k: external[k] for k in ("pesq", "nisqa") if k in external}
    report = evaluate(read_wav(root / row["mixture_path"]), read_wav(root / row["target_path"]),
                      read_wav(Path(est_path)), external=external, shift_tolerant=shift_tolerant)
    return dict(report.to_dict(), scene_id=row["scene_id"], row_id=row["row_id"], method=method,
                separation_deg=row.get("tags", {}).get("separation_deg"))


def _mean(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(values)) if values else None


def aggregate(reports):
    """One row per method, plus one per (method, separation) when separations exist."""
    out = []
    for method in sorted({r["method"] for r in reports}):
        mine = [r for r in reports if r["method"] == method]
        groups = [("all", mine)]
        seps = sorted({r["separation_deg"] for r in mine if r["separation_deg"] is not None})
        groups += [(s, [r for r in mine if r["separation_deg"] == s]) for s in seps]
        for key, rs in groups:
            row = {"method": method, "separation_deg": key, "n": len(rs)}
            for f in METRIC_FIELDS:
                row[f] = _mean([r[f] for r in rs])
            for f in ("pesq", "nisqa"):
                row[f] = _mean([r["external"].get(f) for r in rs])
            out.append(row)
    return out


def cmd_eval(args) -> int:
    root, rows = read_manifest(args.manifest)
    rows = [r for r in rows if r.get("status") == "ok"]
    est_root = Path(args.estimates_dir)
    methods = args.methods
    if not methods and est_root.is_dir():
        methods = sorted(p.name for p in est_root.iterdir() if p.is_dir())
    if not methods:
        raise MissingArtifactError(f"no method folders under {est_root}")
    jobs, missing = [], []
    for method in methods:
        for r in rows:
            path = est_root / method / f"{r['row_id']}.wav"
            if path.exists():
                jobs.append((r, str(root), str(path), method, not args.no_diagnostic))
            else:
                missing.append(f"{method}/{r['row_id']}")
    if missing and not args.partial:
        raise MissingArtifactError(f"{len(missing)} estimates missing, e.g. {missing[0]} (use --partial)")
    reports = _map(_eval_row, jobs, args.workers)
    out = Path(args.out)
    for rep in reports:
        path = out / rep["method"] / f"{rep['row_id']}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(rep, indent=1, sort_keys=True) + "\n")
    table = aggregate(reports)
    columns = ["method", "separation_deg", "n", *METRIC_FIELDS, "pesq", "nisqa"]
    with open(out / "aggregate.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in table:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in columns})
    snapshot = {"command": "eval", "manifest": str(Path(args.manifest).resolve()),
                "estimates_dir": str(est_root.resolve()), "methods": methods, "partial": args.partial,
                "missing": missing, "version": __version__}
    (out / CONFIG_NAME).write_text(json.dumps(snapshot, indent=1, sort_keys=True) + "\n")
    for row in table:
        if row["separation_deg"] == "all":
            print(f"{row['method']}: n={row['n']} SI-SDRi={row['si_sdri_db']}")
    return 0


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="binaural-tse", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("hrtf", help="inspect, validate or synthesize HRTF sets")
    h.add_argument("action", choices=("inspect", "validate", "synth"))
    h.add_argument("path")
    h.add_argument("--json", action="store_true", help="inspect: print a JSON report")
    h.add_argument("--azimuth-step", type=float, default=6.0)
    h.add_argument("--elevation-step", type=float, default=3.0)
    h.add_argument("--sample-rate", type=int, default=16000)
    h.add_argument("--ir-length", type=int, default=128)
    h.add_argument("--subject-id", default="synthetic")
    h.set_defaults(func=cmd_hrtf)

    d = sub.add_parser("dataset", help="sample and render a simulated dataset")
    d.add_argument("protocol")
    d.add_argument("--seed", type=int, required=True)
    d.add_argument("--out-dir", required=True)
    d.add_argument("--sweep", action="store_true", help="angular-separation sweep protocol")
    d.add_argument("--hrtf-dir", help=f"HRTF folder (default: ${HRTF_DIR_ENV})")
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("--pcm16", action="store_true", help="also write 16-bit copies for listening")
    d.set_defaults(func=cmd_dataset)

    e = sub.add_parser("extract", help="run an extraction method over a manifest")
    e.add_argument("manifest")
    e.add_argument("--method", choices=METHODS, required=True)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--plugin", help="extern: command run as CMD MIXTURE.wav CLUE.hrtfset.json OUT.wav")
    e.add_argument("--loading", type=float, default=DEFAULT_LOADING, help="MVDR diagonal loading")
    e.add_argument("--hrtf-dir")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("eval", help="score estimates against manifest targets")
    v.add_argument("manifest")
    v.add_argument("estimates_dir")
    v.add_argument("--out", required=True)
    v.add_argument("--methods", nargs="*")
    v.add_argument("--partial", action="store_true", help="score only the estimates that exist")
    v.add_argument("--no-diagnostic", action="store_true", help="skip the shift-tolerant SI-SDR")
    v.add_argument("--workers", type=int, default=1)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BinauralTseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
