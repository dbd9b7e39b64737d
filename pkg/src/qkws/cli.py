"""Command-line surface: spot, eval, model-info, posteriors, features.

Feature matrix files hold final network inputs (normalized, stacked
frames); posteriorgram files hold the model output. Both use the PGRM
matrix exchange format, so decoding can be replayed without audio.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import formats, frontend, keywords, metrics, postproc
from .confidence import ConfidenceKind
from .ctc import Posteriorgram
from .decoder import DecoderConfig, detect
from .model import AcousticModel, forward

logger = logging.getLogger("qkws")

_POSTPROC = {"greedy": postproc.greedy, "sequence": postproc.sequence}


class CliError(ValueError):
    """User-facing command failure."""


def _add_decoder_args(p: argparse.ArgumentParser):
    p.add_argument("--threshold", type=float, default=0.5, help="detection threshold")
    p.add_argument(
        "--confidence",
        choices=["raw", "nf", "nb"],
        default="nb",
        help="confidence normalization",
    )
    p.add_argument(
        "--ratio", action="store_true", help="divide by the best-path score"
    )
    p.add_argument(
        "--postproc",
        choices=["greedy", "sequence"],
        default="sequence",
        help="candidate post-processor",
    )
    p.add_argument("--smax", type=int, default=30, help="max segment length, frames")
    p.add_argument(
        "--prune", type=float, default=2.5, help="per-frame NLL pruning bound"
    )
    p.add_argument(
        "--blank-skip",
        type=float,
        default=0.95,
        help="drop frames whose blank probability exceeds this",
    )
    p.add_argument(
        "--subsample", type=int, default=1, help="segment boundary stride, frames"
    )


def _decoder_config(args) -> DecoderConfig:
    return DecoderConfig(
        threshold=args.threshold,
        confidence=ConfidenceKind.from_cli(args.confidence, args.ratio),
        max_segment_frames=args.smax,
        prune_nll=args.prune,
        blank_skip=args.blank_skip,
        subsample=args.subsample,
    )


def _load_keywords(args, model: AcousticModel):
    lexicon = None
    if args.lexicon:
        with open(args.lexicon, encoding="utf-8") as f:
            lexicon = keywords.load_lexicon(f.read())
    with open(args.keywords, encoding="utf-8") as f:
        kws = keywords.load_keyword_set(f.read(), lexicon)
    trie = keywords.build_trie(kws, model.phone_index())
    return kws, trie


def _posteriors_from_input(path, model: AcousticModel) -> Posteriorgram:
    """Accept a wav, a feature matrix, or a posteriorgram file."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == b"RIFF":
        audio = frontend.read_wav(path)
        feats = frontend.extract_features(
            audio, model.frontend, model.norm_mean, model.norm_std
        )
        return forward(model, feats)
    if magic == formats.MATRIX_MAGIC:
        matrix = formats.read_matrix(path)
        cols = matrix.shape[1]
        if cols == model.num_classes:
            if cols != model.input_size:
                return Posteriorgram(matrix)
            # width matches both readings: rows summing to one mean posteriors
            try:
                return Posteriorgram(matrix)
            except ValueError:
                return forward(model, matrix.astype(np.float64))
        if cols == model.input_size:
            return forward(model, matrix.astype(np.float64))
        raise CliError(
            f"{path}: {cols} columns match neither the posterior width "
            f"({model.num_classes}) nor the feature width ({model.input_size})"
        )
    raise CliError(f"{path}: unrecognized input file (need WAV or PGRM)")


def cmd_spot(args) -> int:
    model = formats.load_model(args.model)
    kws, trie = _load_keywords(args, model)
    config = _decoder_config(args)
    post = _posteriors_from_input(args.input, model)
    candidates = detect(post, trie, config)
    detections = _POSTPROC[args.postproc](candidates)
    names = {kw.id: kw.text for kw in kws}
    frame_sec = model.frontend.frame_seconds
    for d in detections:
        print(
            f"{d.start * frame_sec:.3f} {(d.end + 1) * frame_sec:.3f} "
            f"{names[d.keyword]} {d.confidence:.6f}"
        )
    return 0


def _parse_reference(path):
    """TSV rows: query_id, audio path, comma-separated keyword names."""
    rows = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CliError(f"{path}:{lineno}: expected 3 tab-separated fields")
            query_id, audio, kw_field = parts
            ref = [k for k in kw_field.split(",") if k] if kw_field else []
            audio_path = audio if os.path.isabs(audio) else os.path.join(base, audio)
            rows.append((query_id, audio_path, ref))
    return rows


def _parse_sweep(arg: str):
    try:
        lo, hi, step = (float(x) for x in arg.split(":"))
    except ValueError as exc:
        raise CliError(f"--sweep expects lo:hi:step, got {arg!r}") from exc
    if step <= 0 or hi < lo:
        raise CliError(f"invalid sweep range {arg!r}")
    taus = []
    t = lo
    while t <= hi + 1e-9:
        taus.append(round(t, 10))
        t += step
    return taus


def cmd_eval(args) -> int:
    model = formats.load_model(args.model)
    kws, trie = _load_keywords(args, model)
    names = {kw.id: kw.text for kw in kws}
    known = {kw.text for kw in kws}
    config = _decoder_config(args)
    rows = _parse_reference(args.reference)

    sweep = _parse_sweep(args.sweep) if args.sweep else None
    # candidate sets shrink monotonically in the threshold, so decode once
    # at the lowest threshold and re-filter
    floor_tau = min(sweep) if sweep else config.threshold
    decode_config = replace(config, threshold=floor_tau)

    per_query = []
    skipped = 0
    for query_id, audio_path, ref in rows:
        for name in ref:
            if name not in known:
                raise CliError(f"query {query_id}: unknown keyword {name!r}")
        try:
            post = _posteriors_from_input(audio_path, model)
        except (OSError, ValueError) as exc:
            logger.warning("skipping query %s: %s", query_id, exc)
            skipped += 1
            continue
        candidates = detect(post, trie, decode_config)
        per_query.append((query_id, ref, candidates))

    post_fn = _POSTPROC[args.postproc]

    def evaluate(tau):
        results = []
        for query_id, ref, candidates in per_query:
            pruned = [c for c in candidates if c.confidence > tau]
            hyp = [names[d.keyword] for d in post_fn(pruned)]
            results.append(metrics.QueryResult(query_id, ref, hyp))
        p, r, f = metrics.f1(results)
        return p, r, f, metrics.exact_rate(results)

    if sweep is None:
        p, r, f, exact = evaluate(config.threshold)
        print(f"precision {p:.6f}")
        print(f"recall {r:.6f}")
        print(f"f1 {f:.6f}")
        print(f"exact_rate {exact:.6f}")
        print(f"queries {len(per_query)} skipped {skipped}")
        return 0

    print("tau,precision,recall,f1,exact_rate")
    best_tau, best_exact = None, -1.0
    for tau in sweep:
        p, r, f, exact = evaluate(tau)
        print(f"{tau:.4f},{p:.6f},{r:.6f},{f:.6f},{exact:.6f}")
        if exact > best_exact:
            best_tau, best_exact = tau, exact
    print(f"best_tau {best_tau:.4f} exact_rate {best_exact:.6f}")
    return 0


def cmd_model_info(args) -> int:
    model = formats.load_model(args.model)
    size = os.path.getsize(args.model)
    units = ",".join(str(u) for u in model.units)
    print(f"layers {len(model.lstm_layers)}")
    print(f"units {units}")
    print(f"parameters {model.param_count}")
    print(f"file_bytes {size}")
    print(f"quantized {'true' if model.quantized else 'false'}")
    print(f"phones {model.num_classes}")
    return 0


def cmd_posteriors(args) -> int:
    model = formats.load_model(args.model)
    post = _posteriors_from_input(args.input, model)
    formats.write_matrix(args.output, post.probs)
    return 0


def cmd_features(args) -> int:
    model = formats.load_model(args.model)
    audio = frontend.read_wav(args.input)
    feats = frontend.extract_features(
        audio, model.frontend, model.norm_mean, model.norm_std
    )
    formats.write_matrix(args.output, feats)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkws", description="streaming keyword spotting engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    spot = sub.add_parser("spot", help="detect keywords in one input")
    spot.add_argument("--model", required=True)
    spot.add_argument("--keywords", required=True, help="keyword set JSON")
    spot.add_argument("--lexicon", help="pronunciation lexicon")
    spot.add_argument("--input", required=True, help="wav, feature, or posterior file")
    _add_decoder_args(spot)
    spot.set_defaults(func=cmd_spot)

    ev = sub.add_parser("eval", help="score detections against references")
    ev.add_argument("--model", required=True)
    ev.add_argument("--keywords", required=True)
    ev.add_argument("--lexicon")
    ev.add_argument("--reference", required=True, help="TSV reference file")
    ev.add_argument("--sweep", help="threshold sweep lo:hi:step")
    _add_decoder_args(ev)
    ev.set_defaults(func=cmd_eval)

    info = sub.add_parser("model-info", help="describe a model file")
    info.add_argument("--model", required=True)
    info.set_defaults(func=cmd_model_info)

    post = sub.add_parser("posteriors", help="dump the posteriorgram")
    post.add_argument("--model", required=True)
    post.add_argument("--input", required=True, help="wav or feature file")
    post.add_argument("--output", required=True)
    post.set_defaults(func=cmd_posteriors)

    feats = sub.add_parser("features", help="dump network input features")
    feats.add_argument("--model", required=True)
    feats.add_argument("--input", required=True, help="wav file")
    feats.add_argument("--output", required=True)
    feats.set_defaults(func=cmd_features)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("KWS_LOG", "WARNING").upper()
    try:
        logging.basicConfig(level=level)
    except ValueError:
        logging.basicConfig(level=logging.WARNING)
        logger.warning("ignoring invalid KWS_LOG level %r", level)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
