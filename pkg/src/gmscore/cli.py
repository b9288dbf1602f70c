"""``gmscore`` command-line interface.

Reports go to stdout (or ``--out``); warnings and errors go to stderr.
Exit codes: 0 success, 1 input/validation error, 2 success with a negative
score, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__, diversity, ensemble, score, synthbench
from .discriminability import extractor_average, write_metrics
from .errors import ConfigError, GMScoreError
from .ingest import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    read_class_counts,
    read_idx_images,
    read_labels,
    read_probability_matrix,
    read_sample_manifest,
    write_class_counts,
    write_idx_labels,
    write_probability_matrix,
)
from .latent import DbnConfig, RbmConfig, load_checkpoint, save_checkpoint, train_dbn, train_rbm, transform
from .pipeline import LatentConfig, latent_discriminability

logger = logging.getLogger("gmscore")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NEGATIVE = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write(out: Optional[str], data: bytes) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _warn(messages: Sequence[str]) -> None:
    for m in messages:
        print(f"warning: {m}", file=sys.stderr)


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()


def _csv_ints(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# --------------------------------------------------------------------------
# sub-commands


def cmd_check(args) -> int:
    summaries = []
    for p in args.paths:
        path = Path(p)
        head = path.read_bytes()[:4]
        magic = int.from_bytes(head, "big") if len(head) == 4 else None
        if magic == IDX_IMAGES_MAGIC:
            imgs = read_idx_images(path)
            info = {"kind": "idx-images", "n": len(imgs), "shape": list(imgs.shape[1:])}
        elif magic == IDX_LABELS_MAGIC:
            labels = read_labels(path, args.classes)
            info = {"kind": "idx-labels", "n": len(labels)}
        elif path.suffix == ".csv":
            probs = read_probability_matrix(path)
            info = {"kind": "probabilities", "n": len(probs), "K": probs.K, "classifier_id": probs.classifier_id}
        elif path.suffix == ".json":
            doc = json.loads(path.read_text())
            if isinstance(doc, dict) and "counts" in doc:
                counts = read_class_counts(path)
                info = {"kind": "counts", "K": counts.K, "total": counts.total}
            elif isinstance(doc, dict) and "members" in doc:
                ens = ensemble.read_ensemble_manifest(path, args.classes)
                info = {"kind": "ensemble", "direction": ens.direction, "members": len(ens.member_predictions)}
            elif isinstance(doc, dict) and "images" in doc:
                ss = read_sample_manifest(path, args.classes)
                info = {"kind": "samples", "n": len(ss.images), "labelled": ss.labels is not None}
            else:
                score.load_config(path)
                info = {"kind": "config"}
        else:
            labels = read_labels(path, args.classes)
            info = {"kind": "labels", "n": len(labels)}
        info["path"] = str(p)
        summaries.append(info)
    _write(args.out, _json_bytes(summaries))
    return EXIT_OK


def _load_labels_for(args, probs):
    if args.labels:
        return read_labels(args.labels, probs.K), None
    return ensemble.assign_pseudo_labels(probs), probs.classifier_id


def cmd_diversity(args) -> int:
    if bool(args.counts) == bool(args.probs):
        raise UsageError("give exactly one of --counts or --probs")
    if args.counts:
        result = diversity.inter_class_diversity(read_class_counts(args.counts))
        if result.value <= 0:
            _warn([f"inter-class diversity {result.value:.4f} <= 0"])
        if args.json:
            _write(args.out, _json_bytes({"d_inter": result.value, "mean_count": result.mean_count, "mad": result.mad}))
        else:
            _write(args.out, f"{result.value:.4f}\n".encode())
        return EXIT_OK

    probs = read_probability_matrix(args.probs)
    labels, source = _load_labels_for(args, probs)
    if source:
        _warn([f"no labels given: pseudo-labels taken from the argmax of {source!r}"])
    profile = diversity.entropy_profile(probs, labels, args.sigma_crit)
    intra = diversity.intra_class_diversity(profile, args.beta)
    _warn(profile.warnings + intra.warnings)
    if args.entropies_out:
        lines = ["sample,label,entropy"] + [
            f"{i},{int(y)},{e!r}" for i, (y, e) in enumerate(zip(labels.labels, profile.sample_entropies))
        ]
        Path(args.entropies_out).write_text("\n".join(lines) + "\n")
    if args.json:
        doc = {
            "raw": intra.raw,
            "regularized": intra.regularized,
            "beta": intra.beta,
            "was_regularized": intra.was_regularized,
            "entropy": score._profile_details(profile),
        }
        _write(args.out, _json_bytes(doc))
    else:
        _write(args.out, f"{intra.regularized:.4f}\n".encode())
    return EXIT_OK


def _image_rows(path):
    return read_idx_images(path).flattened()


def cmd_latent(args) -> int:
    if args.latent_cmd == "train-rbm":
        cfg = RbmConfig(n_components=args.n_components, batch_size=args.batch_size,
                        learning_rate=args.learning_rate, n_iter=args.n_iter, seed=args.seed)
        params, trace = train_rbm(_image_rows(args.data), cfg)
    elif args.latent_cmd == "train-dbn":
        cfg = DbnConfig(layer_sizes=tuple(args.layers), batch_size=args.batch_size,
                        learning_rate=args.learning_rate, epochs=args.epochs, seed=args.seed)
        params, trace = train_dbn(_image_rows(args.data), cfg)
    else:
        params, _ = load_checkpoint(args.checkpoint)
        feats = transform(params, _image_rows(args.data))
        if args.out and args.out.endswith(".npy"):
            np.save(args.out, feats)
        else:
            lines = [",".join(repr(float(x)) for x in row) for row in feats]
            _write(args.out, ("\n".join(lines) + "\n").encode())
        return EXIT_OK
    save_checkpoint(args.out, params, args.seed)
    doc = {"kind": trace.kind, "seed": trace.seed, "values": list(trace.values), "layer": list(trace.layer)}
    if args.trace_out:
        Path(args.trace_out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    else:
        _write(None, _json_bytes(doc))
    return EXIT_OK


def cmd_discriminate(args) -> int:
    real = read_sample_manifest(args.real, args.classes)
    gen = read_sample_manifest(args.generated, args.classes)
    if real.labels is None:
        raise ConfigError(f"{args.real}: real samples need labels")
    gen_labels = gen.labels
    if gen_labels is None:
        if not args.probs:
            raise ConfigError(f"{args.generated}: unlabelled samples need --probs for pseudo-labels")
        gen_labels = ensemble.assign_pseudo_labels(read_probability_matrix(args.probs))
        gen_labels.check_pairs(len(gen.images), "generated images")
    dbn, rbm, _ = latent_discriminability(real.images, real.labels, gen.images, gen_labels,
                                          LatentConfig(), args.seed)
    if args.dbn_out:
        write_metrics(args.dbn_out, dbn)
    if args.rbm_out:
        write_metrics(args.rbm_out, rbm)
    _warn(dbn.warnings + rbm.warnings)
    doc = {"DBN": dbn.to_dict(), "RBM": rbm.to_dict(), "extractor_avg": extractor_average(dbn, rbm)}
    _write(args.out, _json_bytes(doc))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    fwd = ensemble.read_ensemble_manifest(args.forward, args.classes)
    rev = ensemble.read_ensemble_manifest(args.reverse, args.classes)
    fwd_truth = read_labels(args.forward_truth, args.classes) if args.forward_truth else None
    rev_truth = read_labels(args.reverse_truth, args.classes) if args.reverse_truth else None
    es = ensemble.score_ensembles(fwd, rev, fwd_truth, rev_truth)
    _write(args.out, _json_bytes({"es": es.es, "alpha_c": es.alpha_c, "alpha_cr": es.alpha_cr}))
    return EXIT_OK


def _overrides(args) -> dict:
    out = {
        "beta": args.beta,
        "sigma_crit": args.sigma_crit,
        "seed": args.seed,
        "classes": args.classes,
    }
    if args.conditional:
        out["conditional"] = True
    return out


def cmd_score(args) -> int:
    paths = ([args.config] if args.config else []) + list(args.batch or [])
    if not paths:
        raise UsageError("score needs --config or --batch")
    configs = [score.load_config(p, **_overrides(args)) for p in paths]
    reports = score.evaluate_batch(configs, args.jobs)
    for r in reports:
        _warn([f"{r.model_id}: {w}" for w in r.warnings])
    payload = reports[0] if len(reports) == 1 and not args.batch else reports
    _write(args.out, score.emit_report(payload, args.format))
    return EXIT_NEGATIVE if any(r.negative for r in reports) else EXIT_OK


def cmd_synth(args) -> int:
    spec = synthbench.SynthSpec(
        K=args.K,
        samples_per_class=args.n,
        bias_profile=args.profile,
        sharpness=args.sharpness,
        collapse_classes=frozenset(args.collapse or ()),
        seed=args.seed,
    )
    counts = synthbench.synth_counts(spec)
    if not args.out_dir:
        _write(None, _json_bytes({"model_id": counts.model_id, "counts": counts.counts.tolist()}))
        return EXIT_OK
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probs, labels = synthbench.synth_probabilities(spec, counts)
    write_class_counts(out / "counts.json", counts)
    write_probability_matrix(out / "probs.csv", probs)
    write_idx_labels(out / "labels.idx1", labels.labels)
    _write(None, _json_bytes({"counts": "counts.json", "probabilities": "probs.csv", "labels": "labels.idx1"}))
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [r for p in args.reports for r in score.load_reports(p)]
    payload = reports[0] if len(reports) == 1 else reports
    _write(args.out, score.emit_report(payload, args.format))
    return EXIT_NEGATIVE if any(r.negative for r in reports) else EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gmscore", description="Compute GM Scores for generative models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, classes=True, out=True):
        if classes:
            p.add_argument("--classes", "-K", dest="classes", type=int, default=None,
                           help="number of classes (default 10)")
        if out:
            p.add_argument("--out", "-o", help="write output here instead of stdout")

    p = sub.add_parser("check", help="validate input files and summarise them")
    p.add_argument("paths", nargs="+")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("diversity", help="inter-class (counts) or intra-class (probabilities) diversity")
    p.add_argument("--counts", help="class-count JSON")
    p.add_argument("--probs", help="probability CSV")
    p.add_argument("--labels", help="labels for --probs (default: argmax pseudo-labels)")
    p.add_argument("--beta", type=float, default=diversity.DEFAULT_BETA)
    p.add_argument("--sigma-crit", type=float, default=diversity.DEFAULT_SIGMA_CRIT)
    p.add_argument("--entropies-out", help="CSV of per-sample entropies")
    p.add_argument("--json", action="store_true", help="print full details as JSON")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("latent", help="train feature extractors or transform data")
    lsub = p.add_subparsers(dest="latent_cmd", required=True, parser_class=_Parser)
    rbm_defaults, dbn_defaults = RbmConfig(), DbnConfig()
    q = lsub.add_parser("train-rbm")
    q.add_argument("--data", required=True, help="IDX image file")
    q.add_argument("--out", "-o", required=True, help="checkpoint JSON")
    q.add_argument("--trace-out")
    q.add_argument("--n-components", type=int, default=rbm_defaults.n_components)
    q.add_argument("--batch-size", type=int, default=rbm_defaults.batch_size)
    q.add_argument("--learning-rate", type=float, default=rbm_defaults.learning_rate)
    q.add_argument("--n-iter", type=int, default=rbm_defaults.n_iter)
    q.add_argument("--seed", type=int, default=None)
    q = lsub.add_parser("train-dbn")
    q.add_argument("--data", required=True)
    q.add_argument("--out", "-o", required=True)
    q.add_argument("--trace-out")
    q.add_argument("--layers", type=_csv_ints, default=list(dbn_defaults.layer_sizes))
    q.add_argument("--batch-size", type=int, default=dbn_defaults.batch_size)
    q.add_argument("--learning-rate", type=float, default=dbn_defaults.learning_rate)
    q.add_argument("--epochs", type=int, default=dbn_defaults.epochs)
    q.add_argument("--seed", type=int, default=None)
    q = lsub.add_parser("transform")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--out", "-o", help="features as CSV, or .npy")
    p.set_defaults(func=cmd_latent)

    p = sub.add_parser("discriminate", help="latent-space discriminability of generated samples")
    p.add_argument("--real", required=True, help="labelled real sample manifest")
    p.add_argument("--generated", required=True, help="generated sample manifest")
    p.add_argument("--probs", help="probabilities for pseudo-labelling unlabelled samples")
    p.add_argument("--dbn-out")
    p.add_argument("--rbm-out")
    p.add_argument("--seed", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_discriminate)

    p = sub.add_parser("ensemble", help="ensemble score from forward/reverse manifests")
    p.add_argument("--forward", required=True)
    p.add_argument("--reverse", required=True)
    p.add_argument("--forward-truth")
    p.add_argument("--reverse-truth")
    common(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("score", help="full GM Score evaluation")
    p.add_argument("--config", help="evaluation config JSON")
    p.add_argument("--batch", nargs="+", help="several config files, reported together")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("json", "markdown"), default="json")
    p.add_argument("--beta", type=float)
    p.add_argument("--sigma-crit", type=float)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--conditional", action="store_true", help="declare a class-conditional generator")
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="synthetic counts and probabilities")
    p.add_argument("--profile", default="uniform", help="uniform | skewed(g) | single_class")
    p.add_argument("--sharpness", default=synthbench.SynthSpec.sharpness,
                   help="one_hot | uniform | temperature(t)")
    p.add_argument("-K", type=int, default=10)
    p.add_argument("-n", type=int, default=1000, help="samples per class")
    p.add_argument("--collapse", type=_csv_ints, help="classes whose rows are replicated")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="re-render saved JSON reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("json", "markdown"), default="markdown")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_report)
    return parser


def _resolve_seed(args) -> None:
    # flags beat GMSCORE_SEED; for `score` the config file sits in between
    if getattr(args, "seed", "absent") is None and args.command != "score":
        env = score.env_seed()
        args.seed = env if env is not None else 0


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.ERROR - 10 * min(args.verbose, 3) if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        _resolve_seed(args)
        if getattr(args, "classes", "absent") is None and args.command != "score":
            args.classes = 10
        for name in ("beta", "sigma_crit", "classes"):
            value = getattr(args, name, None)
            if value is not None:
                score.EvaluationConfig(**{name: value})
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gmscore: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GMScoreError, OSError, json.JSONDecodeError) as exc:
        print(f"gmscore: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
