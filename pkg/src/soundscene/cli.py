"""Command-line pipeline.

Subcommands cover the full workflow: prompt handling (parse, fmt,
tokenize), dataset synthesis (simulate), annotation ingestion (ingest),
LLM prompt planning (plan), latent sampling (sample), and scoring
(evaluate).  All outputs are deterministic for a fixed config and seed;
manifests are written atomically so an interrupted run never leaves a
partial file behind.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from soundscene.audio import write_wav
from soundscene.config import (
    ConfigError,
    PipelineConfig,
    SamplerConfig,
    load_config,
)
from soundscene.diffusion import (
    GaussianCondition,
    GaussianOracleDenoiser,
    GuidanceSchedule,
    cosine_schedule,
    linear_schedule,
    sample_progressive,
)
from soundscene.dsl import (
    EventAnnotation,
    PromptSyntaxError,
    from_annotations,
    parse,
    serialize,
    validate,
)
from soundscene.manifest import write_jsonl_atomic
from soundscene.phonemes import (
    LexiconError,
    OovWordError,
    build_vocab,
    load_default_lexicon,
    load_lexicon,
    render_tokens,
    tokenize_prompt,
)
from soundscene.planner import PlannerClient, PlannerError
from soundscene.scene import (
    compose_scene,
    derive_scene_seed,
    load_background_pool,
    load_speech_pool,
)
from soundscene.sed import (
    EbConfig,
    annotations_from_manifest,
    clip_level_macro_f1,
    event_based_f1,
    render_report,
)
from soundscene.toytrain import load_checkpoint


def _resolve(base: Path, p: str | None) -> Path | None:
    """Paths inside a config file resolve against the config's directory."""
    if p is None:
        return None
    q = Path(p)
    return q if q.is_absolute() else base / q


def _load_config_resolved(config_path: str) -> tuple[PipelineConfig, Path]:
    cfg = load_config(config_path)
    base = Path(config_path).resolve().parent
    return cfg, base


def _read_prompt_arg(args: argparse.Namespace) -> str:
    if args.file is not None:
        if args.prompt is not None:
            raise ValueError("give the prompt inline or via --file, not both")
        return Path(args.file).read_text(encoding="utf-8").strip()
    if args.prompt is None:
        raise ValueError("no prompt given; pass it inline or via --file")
    return args.prompt


# ---------------------------------------------------------------- prompts


def cmd_parse(args: argparse.Namespace) -> int:
    p = parse(_read_prompt_arg(args))
    print(f"caption: {p.caption}")
    for i, ev in enumerate(p.events):
        spans = ", ".join(f"{s.start:.2f}-{s.end:.2f}" for s in ev.spans)
        print(f"event {i}: {ev.description}")
        print(f"  spans: {spans}")
        print(f"  speech: {ev.speech!r}" if ev.speech is not None else "  speech: -")
    for finding in validate(p):
        print(f"finding: {finding}")
    return 0


def cmd_fmt(args: argparse.Namespace) -> int:
    print(serialize(parse(_read_prompt_arg(args))))
    return 0


def cmd_tokenize(args: argparse.Namespace) -> int:
    p = parse(_read_prompt_arg(args))
    lex = load_lexicon(Path(args.lexicon)) if args.lexicon else load_default_lexicon()
    canonical = serialize(p)
    # the prompt's own text always seeds the vocabulary, so every base
    # token that tokenization will look up has an id
    corpus_lines = [canonical]
    if args.vocab_corpus:
        corpus_lines = Path(args.vocab_corpus).read_text(
            encoding="utf-8"
        ).splitlines() + corpus_lines
    vocab = build_vocab(corpus_lines, lex)
    tp = tokenize_prompt(p, vocab, lex, oov_policy=args.oov_policy)
    if args.ids:
        print(" ".join(str(i) for i in tp.ids))
    else:
        print(render_tokens(tp, vocab))
    return 0


# --------------------------------------------------------------- simulate

_WORKER_STATE: dict[str, Any] = {}


def _scene_record(index: int, scene: Any) -> dict[str, Any]:
    return {
        "clip_id": f"scene{index:05d}",
        "audio": f"audio/scene{index:05d}.wav",
        "caption": scene.prompt.caption,
        "prompt": serialize(scene.prompt),
        "events": [
            {
                "label": a.label,
                "start": a.span.start,
                "end": a.span.end,
                "transcript": a.transcript,
            }
            for a in scene.annotations
        ],
        "scenario": scene.spec.scenario,
        "snr_db": scene.spec.snr_db,
        "seed": scene.spec.seed,
    }


def _init_sim_worker(speech_manifest: str, background_manifest: str, priors: Any) -> None:
    _WORKER_STATE["speech"] = load_speech_pool(speech_manifest)
    _WORKER_STATE["background"] = load_background_pool(background_manifest)
    _WORKER_STATE["priors"] = priors


def _sim_task(task: tuple[int, int, str]) -> tuple[int, dict[str, Any]]:
    index, seed, wav_path = task
    scene = compose_scene(
        _WORKER_STATE["speech"],
        _WORKER_STATE["background"],
        _WORKER_STATE["priors"],
        seed=seed,
    )
    write_wav(wav_path, scene.waveform)
    return index, _scene_record(index, scene)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg, base = _load_config_resolved(args.config)
    if args.count < 0:
        raise ValueError(f"--count must be >= 0, got {args.count}")
    if cfg.speech_manifest is None or cfg.background_manifest is None:
        raise ConfigError("simulate needs speech_manifest and background_manifest in the config")
    speech_manifest = str(_resolve(base, cfg.speech_manifest))
    background_manifest = str(_resolve(base, cfg.background_manifest))
    out_dir = Path(args.output_dir) if args.output_dir else _resolve(base, cfg.output_dir)
    assert out_dir is not None
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)

    tasks = [
        (
            i,
            derive_scene_seed(cfg.dataset_seed, i),
            str(out_dir / "audio" / f"scene{i:05d}.wav"),
        )
        for i in range(args.count)
    ]
    records: dict[int, dict[str, Any]] = {}
    if args.workers <= 1 or not tasks:
        _init_sim_worker(speech_manifest, background_manifest, cfg.priors)
        for task in tasks:
            i, rec = _sim_task(task)
            records[i] = rec
    else:
        with ProcessPoolExecutor(
            max_workers=args.workers,
            initializer=_init_sim_worker,
            initargs=(speech_manifest, background_manifest, cfg.priors),
        ) as pool:
            for i, rec in pool.map(_sim_task, tasks):
                records[i] = rec

    manifest_path = out_dir / "scenes.jsonl"
    write_jsonl_atomic(manifest_path, [records[i] for i in sorted(records)])
    print(f"wrote {len(records)} scenes to {manifest_path}")
    return 0


# ----------------------------------------------------------------- ingest


def _read_transcript_table(path: Path) -> dict[tuple[str, int], str]:
    table: dict[tuple[str, int], str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"{path}:{lineno}: expected 3 tab-separated fields"
                    f" (clip_id, event index, transcript), got {len(parts)}"
                )
            clip_id, index_s, transcript = parts
            try:
                index = int(index_s)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer event index: {exc}") from exc
            key = (clip_id, index)
            if key in table:
                raise ValueError(f"{path}:{lineno}: duplicate transcript key {key}")
            table[key] = transcript
    return table


def _read_caption_table(path: Path) -> dict[str, str]:
    table: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 2 tab-separated fields"
                    f" (clip_id, caption), got {len(parts)}"
                )
            if parts[0] in table:
                raise ValueError(f"{path}:{lineno}: duplicate caption for clip {parts[0]!r}")
            table[parts[0]] = parts[1]
    return table


def cmd_ingest(args: argparse.Namespace) -> int:
    events_path = Path(args.events)
    transcripts_path = Path(args.transcripts)
    for p in (events_path, transcripts_path):
        if not p.exists():
            raise OSError(f"input file not found: {p}")
    clips = annotations_from_manifest(events_path)
    transcripts = _read_transcript_table(transcripts_path)
    captions = _read_caption_table(Path(args.captions)) if args.captions else {}

    used: set[tuple[str, int]] = set()
    records: list[dict[str, Any]] = []
    for clip in clips:
        joined: list[EventAnnotation] = []
        for idx, ev in enumerate(clip.events):
            key = (clip.clip_id, idx)
            if key not in transcripts:
                print(
                    f"warning: no transcript row for clip {clip.clip_id!r}"
                    f" event {idx}; event skipped",
                    file=sys.stderr,
                )
                continue
            used.add(key)
            text = transcripts[key]
            joined.append(
                EventAnnotation(
                    label=ev.label,
                    span=ev.span,
                    transcript=text if text else None,
                )
            )
        caption = captions.get(clip.clip_id, "")
        prompt = from_annotations(caption, joined)
        records.append(
            {
                "clip_id": clip.clip_id,
                "caption": caption,
                "prompt": serialize(prompt),
                "events": [
                    {
                        "label": a.label,
                        "start": a.span.start,
                        "end": a.span.end,
                        "transcript": a.transcript,
                    }
                    for a in joined
                ],
            }
        )
    for key in sorted(set(transcripts) - used):
        print(
            f"warning: transcript row for unknown event"
            f" (clip {key[0]!r}, index {key[1]}); row skipped",
            file=sys.stderr,
        )

    out_path = Path(args.output)
    write_jsonl_atomic(out_path, records)
    print(f"wrote {len(records)} annotated clips to {out_path}")
    return 0


# ------------------------------------------------------------------- plan


def cmd_plan(args: argparse.Namespace) -> int:
    cfg, base = _load_config_resolved(args.config)
    if cfg.planner is None:
        raise ConfigError("config has no planner section; set planner.url and planner.model")
    out_dir = _resolve(base, cfg.output_dir)
    assert out_dir is not None
    raw_dump = Path(args.raw_dump) if args.raw_dump else out_dir / "planner_raw.txt"
    client = PlannerClient(cfg.planner)
    prompt = client.plan(args.caption, speech_text=args.speech, raw_dump_path=raw_dump)
    print(serialize(prompt))
    return 0


# ----------------------------------------------------------------- sample


def _sampler_with_overrides(cfg: SamplerConfig, args: argparse.Namespace) -> SamplerConfig:
    fields = {
        "T": args.T,
        "schedule": args.schedule,
        "t1": args.t1,
        "w_low": args.w_low,
        "w_high": args.w_high,
        "mode": args.mode,
        "seed": args.seed,
    }
    overrides = {k: v for k, v in fields.items() if v is not None}
    if not overrides:
        return cfg
    merged = {
        "T": cfg.T,
        "schedule": cfg.schedule,
        "t1": cfg.t1,
        "w_low": cfg.w_low,
        "w_high": cfg.w_high,
        "mode": cfg.mode,
        "seed": cfg.seed,
    }
    merged.update(overrides)
    return SamplerConfig(**merged)


def cmd_sample(args: argparse.Namespace) -> int:
    cfg, base = _load_config_resolved(args.config)
    sc = _sampler_with_overrides(cfg.sampler, args)
    sched = cosine_schedule(sc.T) if sc.schedule == "cosine" else linear_schedule(sc.T)

    if args.denoiser == "gaussian_oracle":
        dim = args.dim
        target = GaussianCondition(np.full(dim, args.mu), args.sigma2)
        denoiser: Any = GaussianOracleDenoiser(
            prior=GaussianCondition(np.zeros(dim), 1.0), sched=sched
        )
        c1: Any = target
        c2: Any = target
        cond_label = {
            id(target): f"gauss:mu={args.mu:g},sigma2={args.sigma2:g}",
        }
    else:
        if not args.checkpoint:
            raise ValueError("--denoiser toy_checkpoint needs --checkpoint PATH")
        denoiser = load_checkpoint(args.checkpoint)
        if denoiser.T != sc.T:
            raise ConfigError(
                f"checkpoint was trained with T={denoiser.T}, sampler.T is {sc.T}"
            )
        dim = denoiser.dim
        full_id = args.condition_id
        c2 = ("full", full_id)
        c1 = ("text", denoiser.view_of(full_id, "text"))
        cond_label = {id(c1): f"text:{c1[1]}", id(c2): f"full:{c2[1]}"}

    gs = GuidanceSchedule(c1=c1, c2=c2, w_low=sc.w_low, w_high=sc.w_high, t1=sc.t1, T=sc.T)
    rng = np.random.default_rng(sc.seed)
    z_T = rng.standard_normal(dim)

    log_lines = ["step\tt\tphase\tcondition\tw"]
    counter = {"step": 0}

    def on_step(info: Any, _z: np.ndarray) -> None:
        counter["step"] += 1
        log_lines.append(
            f"{counter['step']}\t{info.t}\t{info.phase}"
            f"\t{cond_label[id(info.condition)]}\t{info.w:g}"
        )

    z0 = sample_progressive(
        denoiser, gs, sched, z_T,
        rng=rng if sc.mode == "ancestral" else None,
        mode=sc.mode, on_step=on_step,
    )

    out_dir = Path(args.output_dir) if args.output_dir else _resolve(base, cfg.output_dir)
    assert out_dir is not None
    sample_dir = out_dir / "sample"
    sample_dir.mkdir(parents=True, exist_ok=True)
    latents_path = sample_dir / "latents.npy"
    np.save(latents_path, z0)
    log_path = sample_dir / "steps.log"
    log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    print(f"latents: {latents_path}")
    print(f"step log: {log_path}")
    return 0


# --------------------------------------------------------------- evaluate


def cmd_evaluate(args: argparse.Namespace) -> int:
    truth_path = Path(args.truth)
    pred_path = Path(args.pred)
    if not truth_path.exists():
        raise OSError(f"truth manifest not found: {truth_path}")
    if not pred_path.exists():
        raise OSError(f"prediction manifest not found: {pred_path}")
    cfg = EbConfig(
        onset_collar=args.onset_collar,
        offset_collar_abs=args.offset_collar_abs,
        offset_collar_rel=args.offset_collar_rel,
    )
    truth = annotations_from_manifest(truth_path)
    pred = annotations_from_manifest(pred_path)
    eb = event_based_f1(truth, pred, cfg)
    at = clip_level_macro_f1(truth, pred)
    text = render_report(eb, at, cfg)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return 0


# ------------------------------------------------------------------ parser


def _add_prompt_source(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("prompt", nargs="?", help="prompt text (omit when using --file)")
    sp.add_argument("--file", help="read the prompt from this file instead")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soundscene",
        description="Structured-prompt audio scene pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", help="parse a prompt and show its structure")
    _add_prompt_source(sp)
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("fmt", help="print the canonical form of a prompt")
    _add_prompt_source(sp)
    sp.set_defaults(func=cmd_fmt)

    sp = sub.add_parser("tokenize", help="tokenize a prompt (speech becomes phonemes)")
    _add_prompt_source(sp)
    sp.add_argument("--lexicon", help="pronunciation dictionary path (default: bundled)")
    sp.add_argument(
        "--oov-policy",
        default="letter_fallback",
        choices=("error", "skip", "letter_fallback"),
        help="handling for out-of-vocabulary words (default: letter_fallback)",
    )
    sp.add_argument(
        "--vocab-corpus",
        help="text file whose lines seed base-token ids (the prompt itself is always included)",
    )
    sp.add_argument("--ids", action="store_true", help="print token ids instead of tokens")
    sp.set_defaults(func=cmd_tokenize)

    sp = sub.add_parser("simulate", help="synthesize a scene dataset from pools")
    sp.add_argument("--config", required=True, help="pipeline config YAML")
    sp.add_argument("--count", required=True, type=int, help="number of scenes to compose")
    sp.add_argument("--output-dir", help="override the config's output_dir")
    sp.add_argument(
        "--workers", type=int, default=1,
        help="worker processes (default: 1; output is identical for any value)",
    )
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ingest", help="join event and transcript tables into a prompt manifest")
    sp.add_argument("--events", required=True, help="TSV: clip_id, label, start, end")
    sp.add_argument(
        "--transcripts", required=True,
        help="TSV: clip_id, event index, transcript (empty transcript = non-speech event)",
    )
    sp.add_argument("--captions", help="optional TSV: clip_id, caption")
    sp.add_argument("--output", required=True, help="output manifest JSONL path")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("plan", help="ask the configured LLM planner for a structured prompt")
    sp.add_argument("--config", required=True, help="pipeline config YAML with a planner section")
    sp.add_argument("--caption", required=True, help="free-text caption to plan from")
    sp.add_argument("--speech", help="speech text the plan must include verbatim")
    sp.add_argument(
        "--raw-dump",
        help="where to save raw replies if parsing fails (default: output_dir/planner_raw.txt)",
    )
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("sample", help="run the two-phase guided reverse process")
    sp.add_argument("--config", required=True, help="pipeline config YAML")
    sp.add_argument(
        "--denoiser", default="gaussian_oracle",
        choices=("gaussian_oracle", "toy_checkpoint"),
        help="noise predictor to drive (default: gaussian_oracle)",
    )
    sp.add_argument("--checkpoint", help="trained denoiser checkpoint (toy_checkpoint only)")
    sp.add_argument(
        "--condition-id", type=int, default=0,
        help="full-granularity condition id for toy_checkpoint (default: 0)",
    )
    sp.add_argument("--mu", type=float, default=2.0,
                    help="gaussian_oracle target mean (default: 2.0)")
    sp.add_argument("--sigma2", type=float, default=0.25,
                    help="gaussian_oracle target variance (default: 0.25)")
    sp.add_argument("--dim", type=int, default=2,
                    help="latent dimension for gaussian_oracle (default: 2)")
    sp.add_argument("--T", type=int, help="override sampler.T")
    sp.add_argument("--schedule", choices=("cosine", "linear"), help="override sampler.schedule")
    sp.add_argument("--t1", type=int, help="override sampler.t1 (phase switch step)")
    sp.add_argument("--w-low", type=float, help="override sampler.w_low")
    sp.add_argument("--w-high", type=float, help="override sampler.w_high")
    sp.add_argument("--mode", choices=("ancestral", "deterministic"), help="override sampler.mode")
    sp.add_argument("--seed", type=int, help="override sampler.seed")
    sp.add_argument("--output-dir", help="override the config's output_dir")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("evaluate", help="score predictions against reference annotations")
    sp.add_argument("--truth", required=True, help="reference manifest (JSONL or TSV)")
    sp.add_argument("--pred", required=True, help="prediction manifest (JSONL or TSV)")
    sp.add_argument("--onset-collar", type=float, default=0.2,
                    help="onset tolerance in seconds (default: 0.2)")
    sp.add_argument("--offset-collar-abs", type=float, default=0.2,
                    help="absolute offset tolerance in seconds (default: 0.2)")
    sp.add_argument("--offset-collar-rel", type=float, default=0.2,
                    help="offset tolerance as a fraction of truth length (default: 0.2)")
    sp.add_argument("--report", help="also write the report to this file")
    sp.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PromptSyntaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        ConfigError,
        PlannerError,
        LexiconError,
        OovWordError,
        ValueError,
        RuntimeError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
