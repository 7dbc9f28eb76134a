"""Experiment orchestration behind the command-line interface.

Each ``cmd_*`` function takes an :class:`ExperimentConfig` and returns a
:class:`CommandResult` whose ``code`` is the process exit status: 0 for
success, 1 when nothing succeeded, 2 when some items failed.

Output layout under ``cfg.out``::

    spectrograms/manifest.json        index of generated tensor files
    spectrograms/<clip>__<tag>__<kind>.dfnt
    phase/<clip>__<tag>.dfnt          (2, scales, frames): magnitude, phase
    train/<variant>/<kind>/           checkpoints, metrics.jsonl, train_meta.json
    eval/report.jsonl, eval/summary.txt, eval/*.png
    gmm/report.jsonl, gmm/summary.txt, gmm/*.png
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio, gan, linalg, metrics, plotting, tensorio
from .config import ExperimentConfig
from .errors import (
    ConfigError,
    DfnGanError,
    NonFiniteLoss,
    VersionMismatch,
    ZeroPowerGenerated,
)

log = logging.getLogger(__name__)

SPEC_DIR = "spectrograms"
PHASE_DIR = "phase"


@dataclass
class CommandResult:
    code: int
    summary: dict = field(default_factory=dict)
    lines: list = field(default_factory=list)


def exit_code(n_ok: int, n_failed: int) -> int:
    if n_failed == 0:
        return 0
    return 2 if n_ok else 1


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _clean(x):
    """Floats that are not finite become None so reports stay valid JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


# -- dataset manifest --------------------------------------------------------------------

@dataclass(frozen=True)
class Clip:
    path: Path
    label: str
    duration: float


@dataclass(frozen=True)
class DatasetManifest:
    clips: tuple
    split: str = "train"

    def __post_init__(self):
        seen = set()
        for c in self.clips:
            if c.path in seen:
                raise ConfigError(f"duplicate path in manifest: {c.path}")
            if not c.duration > 0:
                raise ConfigError(f"non-positive duration for {c.path}")
            seen.add(c.path)

    @classmethod
    def load(cls, path, check_files: bool = True) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"manifest not found: {path}")
        doc = json.loads(path.read_text())
        clips = []
        for item in doc.get("clips", []):
            p = Path(item["path"])
            p = p if p.is_absolute() else path.parent / p
            if check_files and not p.exists():
                raise ConfigError(f"manifest entry does not exist: {p}")
            clips.append(Clip(p, str(item.get("label", "")), float(item["duration"])))
        return cls(tuple(clips), str(doc.get("split", "train")))

    def dump(self, path) -> None:
        path = Path(path)
        items = []
        for c in self.clips:
            try:
                rel = c.path.relative_to(path.parent)
            except ValueError:
                rel = c.path
            items.append({"path": str(rel), "label": c.label, "duration": c.duration})
        path.write_text(json.dumps({"split": self.split, "clips": items}, indent=1) + "\n")


def synth_tone_dataset(out_dir, n_clips: int = 500, seed: int = 0, duration: float = 2.0,
                       sample_rate: int = 16000) -> Path:
    """Write tone-mixture WAV clips plus a manifest; returns the manifest path.

    Each clip holds one to three partials drawn from a small set of
    harmonic families, with a random attack/decay envelope. The families
    double as labels.
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    bases = (220.0, 330.0, 440.0, 660.0, 880.0)
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    clips = []
    for i in range(n_clips):
        fam = int(rng.integers(len(bases)))
        f0 = bases[fam] * float(rng.uniform(0.97, 1.03))
        x = np.zeros_like(t)
        for k in range(1, int(rng.integers(1, 4)) + 1):
            x += rng.uniform(0.3, 1.0) / k * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi))
        onset = rng.uniform(0.0, 0.3 * duration)
        env = np.clip((t - onset) / 0.02, 0.0, 1.0) * np.exp(-np.clip(t - onset, 0, None) * rng.uniform(0.5, 3.0))
        x *= env
        x *= 0.8 / max(np.max(np.abs(x)), 1e-9)
        path = out_dir / "wav" / f"tone_{i:04d}.wav"
        audio.write_wav(path, audio.Signal(x, sample_rate))
        clips.append(Clip(path, f"f{int(bases[fam])}", duration))
    manifest = out_dir / "manifest.json"
    DatasetManifest(tuple(clips), "train").dump(manifest)
    return manifest


# -- spectrograms ------------------------------------------------------------------------

def _clip_variants(sig: audio.Signal, cfg: ExperimentConfig):
    """Original plus pitch shifts when the source clip is short.

    The length test uses the source duration, before any resampling.
    """
    out = [("orig", sig)]
    if sig.duration < cfg.augment_below_s:
        for s in cfg.pitch_scales:
            out.append((f"ps{s:g}", audio.pitch_shift(sig, s)))
    return out


def _process_clip(idx: int, clip: Clip, cfg: ExperimentConfig, spec_dir: Path, phase_dir: Path, meta: dict):
    sig = audio.load_wav(clip.path)
    stem = f"{idx:05d}_{clip.path.stem}"
    entries = []
    for tag, v in _clip_variants(sig, cfg):
        v = audio.resample(v, cfg.sample_rate)
        c = audio.cwt_morlet(v, frame_ms=cfg.frame_ms, overlap=cfg.overlap, n_scales=cfg.scales,
                             omega0=cfg.omega0, f_min=cfg.f_min)
        phase_name = f"{stem}__{tag}.dfnt"
        view_meta = None
        for kind in cfg.scale_kinds:
            view = audio.magnitude_view(c, kind, source=str(clip.path), phase_ref=phase_name)
            sq = audio.resize_bilinear(view, cfg.n)
            name = f"{stem}__{tag}__{kind}.dfnt"
            tensorio.save_spectrogram(spec_dir / name, sq, tag=tag, label=clip.label, **meta)
            entries.append({"file": name, "kind": kind, "tag": tag, "label": clip.label,
                            "source": str(clip.path), "phase_ref": phase_name})
            view_meta = view.meta
        tensorio.save(phase_dir / phase_name, np.stack([c.magnitude, c.phase]),
                      source=str(clip.path), tag=tag, **view_meta, **meta)
    return entries


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_make_spectrograms(cfg: ExperimentConfig) -> CommandResult:
    if not cfg.manifest:
        raise ConfigError("make-spectrograms needs manifest=PATH")
    manifest = DatasetManifest.load(cfg.path("manifest"))
    out = cfg.out_dir
    spec_dir, phase_dir = out / SPEC_DIR, out / PHASE_DIR
    spec_dir.mkdir(parents=True, exist_ok=True)
    phase_dir.mkdir(parents=True, exist_ok=True)
    index_path = spec_dir / "manifest.json"
    old = json.loads(index_path.read_text()) if index_path.exists() else {}
    old_sources = old.get("sources", {})
    params = cfg.spectrogram_hash()
    meta = {"config_hash": params, "seed": cfg.seed}

    sources, entries, lines = {}, [], []
    written = skipped = failed = 0
    for idx, clip in enumerate(manifest.clips):
        key = f"{idx:05d}:{clip.path}"
        try:
            content = _file_hash(clip.path)
            prev = old_sources.get(key)
            if (prev and prev["content"] == content and prev["params"] == params
                    and all((spec_dir / e["file"]).exists() for e in prev["entries"])):
                got = prev["entries"]
                skipped += len(got)
            else:
                got = _process_clip(idx, clip, cfg, spec_dir, phase_dir, meta)
                written += len(got)
            sources[key] = {"content": content, "params": params, "entries": got}
            entries.extend(got)
        except (DfnGanError, OSError, ValueError) as exc:
            failed += 1
            log.error("%s: %s", clip.path, exc)
            lines.append(f"error\t{clip.path}\t{exc}")

    kinds = sorted({e["kind"] for e in entries})
    doc = {"config_hash": params, "seed": cfg.seed, "n": cfg.n, "scale_kinds": kinds,
           "entries": entries, "sources": sources}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if not index_path.exists() or index_path.read_text() != text:
        index_path.write_text(text)
    ok = len(manifest.clips) - failed
    summary = {"clips": len(manifest.clips), "failed": failed, "files_written": written,
               "files_skipped": skipped, "index": str(index_path)}
    lines.append(f"clips={len(manifest.clips)} failed={failed} written={written} skipped={skipped}")
    return CommandResult(exit_code(ok, failed), summary, lines)


def load_spectrogram_set(out_dir: Path, kind: str):
    """Stacked ``(N, n, n)`` data, the index entries and the index header."""
    index_path = Path(out_dir) / SPEC_DIR / "manifest.json"
    if not index_path.exists():
        raise ConfigError(f"no spectrogram index at {index_path}; run make-spectrograms first")
    doc = json.loads(index_path.read_text())
    entries = [e for e in doc["entries"] if e["kind"] == kind]
    if not entries:
        raise ConfigError(f"no {kind} spectrograms in {index_path}")
    data = np.stack([tensorio.load(index_path.parent / e["file"])[0] for e in entries])
    return data, entries, doc


# -- training ----------------------------------------------------------------------------

def _fid_points(cfg: ExperimentConfig, max_iters: int):
    return lambda t: t == 0 or t == max_iters or t % cfg.fid_every == 0


def _real_reference(data, cfg: ExperimentConfig, vmax: float):
    rng = np.random.default_rng([cfg.seed, 101])
    idx = rng.choice(len(data), cfg.fid_sample_count, replace=len(data) < cfg.fid_sample_count)
    return to_model_space(data[idx], vmax)[:, None]


def to_model_space(views, vmax: float):
    return 2.0 * np.asarray(views) / vmax - 1.0


def from_model_space(x, vmax: float):
    return (np.clip(np.asarray(x), -1.0, 1.0) + 1.0) * 0.5 * vmax


def generate(params, gcfg: gan.GanConfig, count: int, seed, batch: int = 64):
    """Generator samples from a fixed latent stream independent of training."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, gcfg.latent_dim))
    p = np.asarray(params, dtype=np.float64)
    return np.concatenate([gan.generator_forward(p, z[i:i + batch], gcfg) for i in range(0, count, batch)])


def train_dir(cfg: ExperimentConfig, variant: str, kind: str) -> Path:
    return cfg.out_dir / "train" / variant / kind


def train_one(cfg: ExperimentConfig, variant: str, kind: str) -> dict:
    data, _, doc = load_spectrogram_set(cfg.out_dir, kind)
    if data.shape[-1] != cfg.n:
        raise ConfigError(f"spectrograms are {data.shape[-1]}x{data.shape[-1]} but n={cfg.n}")
    gcfg = cfg.gan_config(variant)
    vmax = float(max(data.max(), 1e-12))
    real_all = to_model_space(data, vmax)[:, None]
    ref = _real_reference(data, cfg, vmax)
    eval_seed = [cfg.seed, 202]

    d = train_dir(cfg, variant, kind)
    d.mkdir(parents=True, exist_ok=True)
    for old in d.glob("ckpt_*.bin"):
        old.unlink()
    meta = {"config_hash": cfg.config_hash(), "spectrogram_hash": doc["config_hash"], "seed": cfg.seed,
            "variant": variant, "kind": kind, "vmax": vmax, "gan_digest": gcfg.digest().hex(),
            "max_iters": cfg.max_iters}
    (d / "train_meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")

    state = gan.init_state(gcfg)
    gan.save_checkpoint(state, d / f"ckpt_{0:07d}.bin", gcfg)
    data_rng = np.random.default_rng([cfg.seed, 303])
    role = "penalized" if gcfg.uses_dfn else "reference"
    want_fid = _fid_points(cfg, cfg.max_iters)
    records, gaps = [], []

    def record(t):
        fid = None
        if want_fid(t):
            fake = generate(state.gen_params, gcfg, cfg.fid_sample_count, eval_seed)
            fid = metrics.fid(ref, fake, cfg.embed_seed)
        gap = float(np.mean(gaps)) if gaps else None
        rec = {"iter": t, "fid": _clean(fid), "snr_mean": None, "modes_detected": None,
               "dfn_gap": _clean(gap), "dfn_role": role, "config_hash": meta["config_hash"],
               "seed": cfg.seed}
        records.append(rec)
        gaps.clear()

    log_path = d / "metrics.jsonl"
    record(0)
    status = "ok"
    try:
        for _ in range(cfg.max_iters):
            idx = data_rng.integers(0, len(real_all), gcfg.batch_size)
            z, state = gan.sample_latent(state, gcfg.batch_size, gcfg)
            state = gan.train_step(state, real_all[idx], z, gcfg, checkpoint_dir=d)
            gaps.append(state.last["dfn_gap"])
            t = state.iter
            if t % cfg.checkpoint_every == 0 or t == cfg.max_iters:
                if t % cfg.checkpoint_every:
                    gan.save_checkpoint(state, d / f"ckpt_{t:07d}.bin", gcfg)
                record(t)
    except NonFiniteLoss as exc:
        status = "nonfinite"
        (d / "nonfinite_dump.json").write_text(json.dumps(exc.dump, sort_keys=True, default=str) + "\n")
        log.error("%s/%s: %s; last good checkpoint kept", variant, kind, exc)
    log_path.write_text("".join(_json_line(r) + "\n" for r in records))
    return {"variant": variant, "kind": kind, "status": status, "iters": state.iter, "records": records,
            "dir": str(d)}


def cmd_train(cfg: ExperimentConfig) -> CommandResult:
    ok = failed = 0
    lines, runs = [], []
    for variant in cfg.variants:
        for kind in cfg.scale_kinds:
            try:
                res = train_one(cfg, variant, kind)
            except (DfnGanError, OSError) as exc:
                failed += 1
                lines.append(f"error\t{variant}\t{kind}\t{exc}")
                continue
            runs.append(res)
            if res["status"] == "ok":
                ok += 1
            else:
                failed += 1
            fids = [r["fid"] for r in res["records"] if r["fid"] is not None]
            lines.append(f"{variant}\t{kind}\titers={res['iters']}\tstatus={res['status']}\t"
                         f"fid_first={_fmt(fids[0] if fids else None)}\tfid_last={_fmt(fids[-1] if fids else None)}")
    if runs:
        plotting.training_curves(runs, cfg.out_dir / "train" / "fid_curves.png")
    return CommandResult(exit_code(ok, failed), {"runs": ok, "failed": failed}, lines)


def _fmt(x, digits: int = 4) -> str:
    return "-" if x is None else f"{x:.{digits}f}"


# -- evaluation --------------------------------------------------------------------------

def pick_checkpoint(d: Path, explicit: str = ""):
    """Best-FID checkpoint from the metric log, else the newest one."""
    if explicit:
        p = Path(explicit)
        return p if p.is_absolute() else d / p
    log_path = d / "metrics.jsonl"
    if log_path.exists():
        recs = [json.loads(line) for line in log_path.read_text().splitlines() if line.strip()]
        scored = [(r["fid"], r["iter"]) for r in recs if r.get("fid") is not None
                  and (d / f"ckpt_{r['iter']:07d}.bin").exists()]
        if scored:
            return d / f"ckpt_{min(scored)[1]:07d}.bin"
    ckpts = sorted(d.glob("ckpt_*.bin"))
    if not ckpts:
        raise ConfigError(f"no checkpoints in {d}")
    return ckpts[-1]


def _invert_view(view_nn, kind: str, phase_doc):
    pr, hdr = phase_doc
    mag_ref, phase = pr[0], pr[1]
    rows, cols = mag_ref.shape
    view = audio.resize_bilinear(view_nn, rows, cols)
    mag = audio.view_to_magnitude(view, kind, phase)
    return audio.invert_cwt(mag, phase, np.asarray(hdr["scale_frequencies"]), int(hdr["frame_hop"]),
                            sample_rate=hdr["sample_rate"], frame_len=int(hdr["frame_len"]),
                            n_samples=int(hdr["n_samples"]), omega0=hdr["omega0"])


def snr_scores(gen_views, real_views, phase_docs, kind: str):
    """Per-pair SNR in dB; pairs whose generated signal has zero power are counted, not scored."""
    scores, excluded = [], 0
    for g, r, ph in zip(gen_views, real_views, phase_docs):
        xr = _invert_view(r, kind, ph)
        xg = _invert_view(g, kind, ph)
        try:
            scores.append(audio.snr_db(xr, xg))
        except ZeroPowerGenerated:
            excluded += 1
    return scores, excluded


def evaluate(sample_fn, data, entries, kind: str, cfg: ExperimentConfig, vmax: float, phase_dir: Path,
             what=("fid", "snr")) -> dict:
    """Score a sampler against the real set.

    ``sample_fn(count)`` returns generated spectrograms in model space
    ``(count, 1, n, n)``; this lets tests plug in a memorizing double.
    """
    out = {}
    if "fid" in what:
        ref = _real_reference(data, cfg, vmax)
        out["fid"] = metrics.fid(ref, sample_fn(cfg.fid_sample_count), cfg.embed_seed)
    if "snr" in what:
        rng = np.random.default_rng([cfg.seed, 404])
        idx = rng.choice(len(data), cfg.snr_sample_count, replace=len(data) < cfg.snr_sample_count)
        gen = from_model_space(sample_fn(cfg.snr_sample_count)[:, 0], vmax)
        cache = {}
        docs = []
        for i in idx:
            name = entries[i]["phase_ref"]
            if name not in cache:
                cache[name] = tensorio.load(phase_dir / name)
            docs.append(cache[name])
        scores, excluded = snr_scores(gen, data[idx], docs, kind)
        out["snr_mean"] = float(np.mean(scores)) if scores else None
        out["snr_std"] = float(np.std(scores)) if scores else None
        out["snr_count"] = len(scores)
        out["snr_excluded"] = excluded
    return out


def cmd_eval(cfg: ExperimentConfig, what=("fid", "snr")) -> CommandResult:
    rows, lines, samples = [], [], {}
    ok = failed = 0
    eval_dir = cfg.out_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    for variant in cfg.variants:
        for kind in cfg.scale_kinds:
            try:
                d = train_dir(cfg, variant, kind)
                meta_path = d / "train_meta.json"
                if not meta_path.exists():
                    raise ConfigError(f"no training run at {d}")
                meta = json.loads(meta_path.read_text())
                gcfg = cfg.gan_config(variant)
                ckpt = pick_checkpoint(d, cfg.checkpoint)
                state, _ = gan.load_checkpoint(ckpt, gcfg)
                data, entries, doc = load_spectrogram_set(cfg.out_dir, kind)
                if doc["config_hash"] != meta["spectrogram_hash"]:
                    raise VersionMismatch(f"{d}: trained on spectrograms {meta['spectrogram_hash']}, "
                                          f"current set is {doc['config_hash']}")
                vmax = meta["vmax"]
                sample_fn = lambda k, p=state.gen_params, g=gcfg: generate(p, g, k, [cfg.seed, 505])
                res = evaluate(sample_fn, data, entries, kind, cfg, vmax, cfg.out_dir / PHASE_DIR, what)
                samples[(variant, kind)] = from_model_space(sample_fn(8)[:, 0], vmax)
            except (DfnGanError, OSError) as exc:
                failed += 1
                lines.append(f"error\t{variant}\t{kind}\t{exc}")
                continue
            ok += 1
            row = {"variant": variant, "kind": kind, "checkpoint": ckpt.name, "iter": state.iter,
                   "config_hash": cfg.config_hash(), "seed": cfg.seed}
            row.update({k: _clean(v) for k, v in res.items()})
            rows.append(row)
    suffix = "" if set(what) == {"fid", "snr"} else "_" + "_".join(what)
    report = eval_dir / f"report{suffix}.jsonl"
    report.write_text("".join(_json_line(r) + "\n" for r in rows))
    table = summary_tables(rows, cfg.variants, cfg.scale_kinds, what)
    (eval_dir / f"summary{suffix}.txt").write_text(table)
    if samples:
        plotting.sample_grid(samples, eval_dir / f"samples{suffix}.png")
    lines.extend(table.rstrip("\n").splitlines())
    return CommandResult(exit_code(ok, failed), {"rows": len(rows), "failed": failed, "report": str(report)},
                         lines)


def summary_tables(rows, variants, kinds, what=("fid", "snr")) -> str:
    """Plain-text tables: one row per variant, one column per scale kind."""
    by = {(r["variant"], r["kind"]): r for r in rows}
    out = []
    for key, title in (("fid", "FID (lower is better)"), ("snr_mean", "Mean SNR dB")):
        if key.split("_")[0] not in what:
            continue
        out.append(title)
        out.append("\t".join(["variant"] + list(kinds)))
        for v in variants:
            cells = [_fmt(by.get((v, k), {}).get(key), 2) for k in kinds]
            out.append("\t".join([v] + cells))
        out.append("")
    return "\n".join(out) + "\n"


# -- Gaussian mixture benchmark -------------------------------------------------------------

def gmm_run(cfg: ExperimentConfig, variant: str, seed: int, spec: metrics.GmmSpec):
    gcfg = cfg.gmm_config(variant, seed)
    state = gan.init_state(gcfg)
    rng = np.random.default_rng([seed, 606])
    for _ in range(cfg.gmm_iters):
        real = metrics.gmm_sample(spec, gcfg.batch_size, seed=int(rng.integers(1 << 31)))
        z, state = gan.sample_latent(state, gcfg.batch_size, gcfg)
        state = gan.train_step(state, real, z, gcfg)
    pts = generate(state.gen_params, gcfg, cfg.gmm_samples, [seed, 707], batch=cfg.gmm_samples)
    count, per_mode = metrics.count_modes(pts, spec, cfg.capture_mult, cfg.min_fraction)
    return count, per_mode, pts, state


def cmd_gmm_benchmark(cfg: ExperimentConfig) -> CommandResult:
    spec = metrics.GmmSpec.ring(cfg.gmm_radius, cfg.gmm_sigma)
    out = cfg.out_dir / "gmm"
    out.mkdir(parents=True, exist_ok=True)
    rows, runs, points = [], [], {}
    failed = 0
    lines = []
    for variant in gan.VARIANTS:
        counts, per = [], []
        for r in range(cfg.gmm_repeats):
            seed = cfg.seed + r
            try:
                c, pm, pts, state = gmm_run(cfg, variant, seed, spec)
            except NonFiniteLoss as exc:
                failed += 1
                lines.append(f"error\t{variant}\tseed={seed}\t{exc}")
                continue
            counts.append(c)
            per.append(pm)
            runs.append({"variant": variant, "seed": seed, "iters": cfg.gmm_iters, "modes_detected": c,
                         "per_mode": [int(x) for x in pm], "dfn_gap": _clean(state.last.get("dfn_gap")),
                         "config_hash": cfg.config_hash()})
            if r == 0:
                points[variant] = pts
        rows.append({
            "variant": variant, "repeats": len(counts),
            "modes_mean": float(np.mean(counts)) if counts else None,
            "modes_std": float(np.std(counts)) if counts else None,
            "per_mode_mean": [float(x) for x in np.mean(per, axis=0)] if per else None,
            "config_hash": cfg.config_hash(), "seed": cfg.seed,
        })
    (out / "runs.jsonl").write_text("".join(_json_line(r) + "\n" for r in runs))
    (out / "report.jsonl").write_text("".join(_json_line(r) + "\n" for r in rows))
    table = ["variant\trepeats\tmodes_mean\tmodes_std\tper_mode_mean"]
    for r in rows:
        pm = "-" if r["per_mode_mean"] is None else ",".join(f"{x:.1f}" for x in r["per_mode_mean"])
        table.append(f"{r['variant']}\t{r['repeats']}\t{_fmt(r['modes_mean'], 2)}\t{_fmt(r['modes_std'], 2)}\t{pm}")
    text = "\n".join(table) + "\n"
    (out / "summary.txt").write_text(text)
    if points:
        plotting.gmm_scatter(points, spec, out / "samples.png")
    lines.extend(table)
    total = len(gan.VARIANTS) * cfg.gmm_repeats
    return CommandResult(exit_code(total - failed, failed), {"rows": rows}, lines)


# -- DFN inspector ---------------------------------------------------------------------------

def _load_matrix(path: Path) -> np.ndarray:
    if path.suffix in (".npy",):
        return np.load(path)
    if path.suffix in (".txt", ".csv"):
        return np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    return tensorio.load(path)[0]


def cmd_dfn(paths, backend: str = "schur") -> CommandResult:
    vals, lines = [], []
    failed = 0
    for p in map(Path, paths):
        try:
            m = _load_matrix(p)
            if m.ndim == 3 and m.shape[0] == 1:
                m = m[0]
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"not a square matrix: shape {m.shape}")
            v = linalg.dfn(m, backend=backend)
        except (DfnGanError, OSError, ValueError) as exc:
            failed += 1
            lines.append(f"{p}\terror\t{exc}")
            continue
        vals.append(v)
        lines.append(f"{p}\t{v:.10g}")
    if vals:
        lines.append(f"summary\tcount={len(vals)}\tmean={np.mean(vals):.10g}\tmin={np.min(vals):.10g}\t"
                     f"max={np.max(vals):.10g}")
    return CommandResult(exit_code(len(vals), failed), {"values": vals, "failed": failed}, lines)
