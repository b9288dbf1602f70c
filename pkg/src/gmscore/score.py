"""GM Score assembly, pipeline orchestration and report rendering.

The raw score is the product

    extractor_avg * d_inter * es * d_intra_regularized

and the reported score is ``1 - |beta - raw| / beta``, which equals
``raw / beta`` whenever ``raw <= beta``.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import diversity
from .discriminability import LogisticConfig, extractor_average, read_metrics
from .diversity import (
    DEFAULT_BETA,
    DEFAULT_SIGMA_CRIT,
    EntropyProfile,
    InterClassDiversity,
    IntraClassDiversity,
)
from .ensemble import (
    EnsembleScore,
    assign_pseudo_labels,
    circularity_warnings,
    ensemble_score,
    read_ensemble_manifest,
    score_ensembles,
)
from .errors import ConfigError, GMScoreError, RangeError
from .ingest import (
    ClassCounts,
    ProbabilityMatrix,
    SampleSet,
    read_class_counts,
    read_probability_matrix,
    read_sample_manifest,
)
from .latent import DbnConfig, RbmConfig
from .pipeline import LatentConfig, fit_pipeline, latent_discriminability, native_ensembles

logger = logging.getLogger(__name__)

SEED_ENV = "GMSCORE_SEED"
REPORT_DECIMALS = 4

_PATH_KEYS = (
    "generated",
    "counts",
    "probabilities",
    "real_train",
    "real_test",
    "dbn_metrics",
    "rbm_metrics",
    "ensemble_forward",
    "ensemble_reverse",
)
_COMPONENT_KEYS = ("d_inter", "d_intra", "extractor_avg", "es", "alpha_c", "alpha_cr")


@dataclass
class EvaluationConfig:
    """Everything needed to score one model.

    Each score factor is taken, in order of preference, from ``components``,
    from the corresponding input files, or computed natively from images.
    """

    model_id: str = ""
    beta: float = DEFAULT_BETA
    sigma_crit: float = DEFAULT_SIGMA_CRIT
    seed: int = 0
    classes: int = 10
    conditional: bool = False
    generated: Optional[str] = None
    counts: Optional[str] = None
    probabilities: Optional[str] = None
    real_train: Optional[str] = None
    real_test: Optional[str] = None
    dbn_metrics: Optional[str] = None
    rbm_metrics: Optional[str] = None
    ensemble_forward: Optional[str] = None
    ensemble_reverse: Optional[str] = None
    components: Dict[str, float] = field(default_factory=dict)
    latent: Dict[str, dict] = field(default_factory=dict)
    native_ensemble: bool = True
    base_dir: str = "."

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.sigma_crit < 0:
            raise ConfigError(f"sigma_crit must be non-negative, got {self.sigma_crit}")
        if self.classes < 2:
            raise ConfigError(f"classes must be at least 2, got {self.classes}")
        unknown = set(self.components) - set(_COMPONENT_KEYS)
        if unknown:
            raise ConfigError(f"unknown components {sorted(unknown)}")

    def path(self, key: str) -> Optional[Path]:
        value = getattr(self, key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def latent_config(self) -> LatentConfig:
        try:
            return LatentConfig(
                rbm=RbmConfig(**{"seed": self.seed, **self.latent.get("rbm", {})}),
                dbn=DbnConfig(**{"seed": self.seed, **self.latent.get("dbn", {})}),
                logistic=LogisticConfig(**self.latent.get("logistic", {})),
            )
        except TypeError as exc:
            raise ConfigError(f"invalid latent hyperparameters: {exc}") from exc

    def echo(self) -> dict:
        return {
            "beta": self.beta,
            "sigma_crit": self.sigma_crit,
            "seed": self.seed,
            "classes": self.classes,
            "conditional": self.conditional,
        }


def env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


def load_config(path=None, **overrides) -> EvaluationConfig:
    """Build a config from a JSON file (optional) plus non-None overrides.

    Seed precedence: overrides, then the file, then ``GMSCORE_SEED``, then 0.
    """
    doc = {}
    base_dir = "."
    if path is not None:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        base_dir = str(path.parent)
    known = {f.name for f in fields(EvaluationConfig)} - {"base_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    merged = dict(doc)
    if "seed" not in merged:
        seed = env_seed()
        if seed is not None:
            merged["seed"] = seed
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if not merged.get("model_id") and path is not None:
        merged["model_id"] = path.stem
    return EvaluationConfig(base_dir=base_dir, **merged)


# --------------------------------------------------------------------------
# report


@dataclass
class ScoreReport:
    model_id: str
    d_inter: float
    d_intra: IntraClassDiversity
    extractor_avg: float
    es: EnsembleScore
    g_raw: float
    g_norm: float
    warnings: List[str] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def negative(self) -> bool:
        return self.g_norm < 0

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "d_inter": self.d_inter,
            "d_intra": {
                "raw": self.d_intra.raw,
                "regularized": self.d_intra.regularized,
                "beta": self.d_intra.beta,
                "was_regularized": self.d_intra.was_regularized,
            },
            "extractor_avg": self.extractor_avg,
            "es": {"es": self.es.es, "alpha_c": self.es.alpha_c, "alpha_cr": self.es.alpha_cr},
            "g_raw": self.g_raw,
            "g_norm": self.g_norm,
            "warnings": list(self.warnings),
            "config": dict(self.config_echo),
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScoreReport":
        try:
            di = doc["d_intra"]
            es = doc["es"]
            return cls(
                model_id=doc["model_id"],
                d_inter=doc["d_inter"],
                d_intra=IntraClassDiversity(di["raw"], di["regularized"], di["beta"], di["was_regularized"]),
                extractor_avg=doc["extractor_avg"],
                es=EnsembleScore(es["es"], es.get("alpha_c"), es.get("alpha_cr")),
                g_raw=doc["g_raw"],
                g_norm=doc["g_norm"],
                warnings=list(doc.get("warnings", [])),
                config_echo=dict(doc.get("config", {})),
                details=doc.get("details", {}),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed report document ({exc})") from exc


def normalize(g_raw: float, beta: float = DEFAULT_BETA) -> float:
    return 1.0 - abs(beta - g_raw) / beta


def gm_score(extractor_avg: float, d_inter, es, d_intra, config: EvaluationConfig = None,
             model_id: str = None) -> ScoreReport:
    """Combine the four factors into a :class:`ScoreReport`.

    ``d_intra`` may be an :class:`IntraClassDiversity` or a float raw value
    (regularised here); ``es`` may be an :class:`EnsembleScore` or a float.
    Negative normalised scores are reported, not clamped.
    """
    config = config or EvaluationConfig()
    beta = config.beta
    if not beta > 0:
        raise ConfigError(f"beta must be positive, got {beta}")
    warnings: List[str] = []

    if isinstance(d_inter, InterClassDiversity):
        d_inter = d_inter.value
    if isinstance(d_intra, (int, float)):
        d_intra = diversity.intra_class_diversity(float(d_intra), beta)
    if isinstance(es, (int, float)):
        es = EnsembleScore(float(es))

    if not 0.0 <= extractor_avg <= 1.0:
        raise RangeError(f"extractor average {extractor_avg} outside [0, 1]")
    if not 0.0 <= es.es <= 1.0:
        raise RangeError(f"ensemble score {es.es} outside [0, 1]")
    if d_inter > 1.0:
        raise RangeError(f"inter-class diversity {d_inter} exceeds 1")
    if d_inter <= 0.0:
        warnings.append(
            f"inter-class diversity {d_inter:.4f} <= 0: class counts are more concentrated "
            "than their mean absolute deviation allows for a positive score"
        )
    if config.conditional:
        warnings.append(
            "conditional generator: class counts are fixed by the conditioning, so inter-class "
            "diversity is biased (computed for comparability only)"
        )
    elif d_inter == 1.0:
        warnings.append(
            "perfectly uniform class counts; if the generator is class-conditional, declare "
            "conditional=true since inter-class diversity is then biased"
        )
    warnings.extend(d_intra.warnings)

    g_raw = extractor_avg * d_inter * es.es * d_intra.regularized
    g_norm = normalize(g_raw, beta)
    if g_norm < 0:
        msg = f"negative GM score {g_norm:.4f}: intra-class diversity above 2*beta; consider a larger beta"
        logger.warning(msg)
        warnings.append(msg)
    if g_raw > beta:
        warnings.append(f"raw score {g_raw:.4f} exceeds beta {beta:g}; normalised score folds back")

    return ScoreReport(
        model_id=model_id if model_id is not None else config.model_id,
        d_inter=float(d_inter),
        d_intra=d_intra,
        extractor_avg=float(extractor_avg),
        es=es,
        g_raw=float(g_raw),
        g_norm=float(g_norm),
        warnings=warnings,
        config_echo=config.echo(),
    )


def _nan_to_none(values) -> list:
    return [None if (isinstance(v, float) and math.isnan(v)) else v for v in values]


def _profile_details(profile: EntropyProfile) -> dict:
    return {
        "per_class_mean": _nan_to_none(profile.per_class_mean.tolist()),
        "per_class_std": _nan_to_none(profile.per_class_std.tolist()),
        "per_class_count": profile.per_class_count.tolist(),
        "collapse_flags": profile.collapse_flags.tolist(),
        "overall_mean": profile.overall_mean,
        "sigma_crit": profile.sigma_crit,
    }


def _metrics_details(metrics) -> dict:
    return {
        "precision": metrics.macro_precision,
        "recall": metrics.macro_recall,
        "f1": metrics.macro_f1,
        "accuracy": metrics.accuracy,
    }


class _Context:
    """Lazily loaded inputs for one evaluation run."""

    def __init__(self, config: EvaluationConfig):
        self.config = config
        self.K = config.classes
        self._cache = {}

    def _load(self, key, loader):
        if key not in self._cache:
            p = self.config.path(key)
            if p is None:
                self._cache[key] = None
            else:
                try:
                    self._cache[key] = loader(p)
                except GMScoreError as exc:
                    # keep the original type and attributes, only prefix the message
                    exc.args = (f"{key} ({p}): {exc}",)
                    raise
        return self._cache[key]

    def sample_set(self, key) -> Optional[SampleSet]:
        return self._load(key, lambda p: read_sample_manifest(p, self.K))

    def probabilities(self) -> Optional[ProbabilityMatrix]:
        return self._load("probabilities", read_probability_matrix)


def _require(value, what: str):
    if value is None:
        raise ConfigError(f"cannot compute {what}: required inputs missing from config")
    return value


def evaluate_model(config: EvaluationConfig) -> ScoreReport:
    """Run the full pipeline for one model and return its report."""
    ctx = _Context(config)
    comps = config.components
    warnings: List[str] = []
    details: dict = {}

    generated = ctx.sample_set("generated")
    probs = ctx.probabilities()
    if generated is not None and probs is not None:
        if len(probs) != len(generated.images):
            raise ConfigError(
                f"probabilities have {len(probs)} rows for {len(generated.images)} generated images"
            )
    latent_cfg = config.latent_config()

    # labels for generated samples: given, pseudo-labelled from C1, or native C1
    gen_labels = generated.labels if generated is not None else None
    pseudo_source = None
    needs_labels = not all(k in comps for k in ("d_inter", "d_intra", "extractor_avg")) or not (
        "es" in comps or {"alpha_c", "alpha_cr"} <= set(comps)
    )
    if gen_labels is None and needs_labels:
        if probs is not None:
            gen_labels = assign_pseudo_labels(probs)
            pseudo_source = probs.classifier_id
            details["pseudo_labels"] = probs.classifier_id
        elif generated is not None and ctx.sample_set("real_train") is not None:
            real = ctx.sample_set("real_train")
            c1 = fit_pipeline("RBM", real.images, _require(real.labels, "pseudo-labels"), latent_cfg,
                              config.seed, "native-c1")
            probs = c1.predict_proba(generated.images)
            gen_labels = assign_pseudo_labels(probs)
            pseudo_source = "native-c1"
            details["pseudo_labels"] = "native-c1"
            warnings.append("generated samples pseudo-labelled by the built-in RBM->logistic classifier")

    # inter-class diversity
    if "d_inter" in comps:
        d_inter = float(comps["d_inter"])
    else:
        counts = ctx._load("counts", read_class_counts)
        if counts is None:
            counts = ClassCounts.from_labels(_require(gen_labels, "inter-class diversity"), config.model_id)
        inter = diversity.inter_class_diversity(counts)
        d_inter = inter.value
        details["counts"] = counts.counts.tolist()

    # intra-class diversity
    if "d_intra" in comps:
        d_intra = diversity.intra_class_diversity(float(comps["d_intra"]), config.beta)
    else:
        profile = diversity.entropy_profile(
            _require(probs, "intra-class diversity"), _require(gen_labels, "intra-class diversity"),
            config.sigma_crit,
        )
        warnings.extend(profile.warnings)
        d_intra = diversity.intra_class_diversity(profile, config.beta)
        details["entropy"] = _profile_details(profile)

    # latent-space discriminability
    if "extractor_avg" in comps:
        ext_avg = float(comps["extractor_avg"])
    else:
        dbn = ctx._load("dbn_metrics", read_metrics)
        rbm = ctx._load("rbm_metrics", read_metrics)
        if dbn is None or rbm is None:
            real = _require(ctx.sample_set("real_train"), "latent discriminability")
            gen = _require(generated, "latent discriminability")
            dbn, rbm, traces = latent_discriminability(
                real.images, _require(real.labels, "latent discriminability"), gen.images,
                _require(gen_labels, "latent discriminability"), latent_cfg, config.seed,
            )
            details["traces"] = {k: list(t.values) for k, t in traces.items()}
        ext_avg = extractor_average(dbn, rbm)
        details["dbn"] = _metrics_details(dbn)
        details["rbm"] = _metrics_details(rbm)

    # ensemble score
    if "es" in comps:
        es = EnsembleScore(float(comps["es"]))
    elif "alpha_c" in comps and "alpha_cr" in comps:
        es = ensemble_score(float(comps["alpha_c"]), float(comps["alpha_cr"]))
    else:
        fwd = ctx._load("ensemble_forward", lambda p: read_ensemble_manifest(p, ctx.K))
        rev = ctx._load("ensemble_reverse", lambda p: read_ensemble_manifest(p, ctx.K))
        if fwd is None or rev is None:
            if not config.native_ensemble:
                raise ConfigError("ensemble manifests missing and native ensemble disabled")
            real = _require(ctx.sample_set("real_train"), "ensemble score")
            test = _require(ctx.sample_set("real_test"), "ensemble score")
            gen = _require(generated, "ensemble score")
            fwd, rev = native_ensembles(
                real.images, _require(real.labels, "ensemble score"), test.images,
                _require(test.labels, "ensemble score"), gen.images,
                _require(gen_labels, "ensemble score"), latent_cfg, config.seed,
            )
            warnings.append("ensemble score from the built-in fallback ensemble of RBM->logistic members")
        fwd_truth = fwd.truth if fwd.truth is not None else gen_labels
        rev_truth = rev.truth
        if rev_truth is None and ctx.sample_set("real_test") is not None:
            rev_truth = ctx.sample_set("real_test").labels
        es = score_ensembles(fwd, rev, fwd_truth, rev_truth)
        warnings.extend(circularity_warnings(pseudo_source, fwd, rev))

    report = gm_score(ext_avg, d_inter, es, d_intra, config)
    report.warnings = warnings + report.warnings
    report.details = details
    return report


def evaluate_batch(configs: Sequence[EvaluationConfig], jobs: int = 1) -> List[ScoreReport]:
    """Evaluate several models; output order follows ``configs``."""
    if jobs <= 1:
        return [evaluate_model(c) for c in configs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(evaluate_model, configs))


# --------------------------------------------------------------------------
# rendering

MARKDOWN_COLUMNS = ("Model", "D†", "D‥", "DBN+RBM (avg)", "ES", "𝒢")


def _fmt(x: float) -> str:
    return f"{x:.{REPORT_DECIMALS}f}"


def render_markdown(reports: Sequence[ScoreReport]) -> str:
    lines = [
        "| " + " | ".join(MARKDOWN_COLUMNS) + " |",
        "|" + "|".join(["---"] + ["---:"] * (len(MARKDOWN_COLUMNS) - 1)) + "|",
    ]
    for r in reports:
        cells = [r.model_id, _fmt(r.d_inter), _fmt(r.d_intra.regularized), _fmt(r.extractor_avg),
                 _fmt(r.es.es), _fmt(r.g_norm)]
        lines.append("| " + " | ".join(cells) + " |")
    notes = [f"- {r.model_id}: {w}" for r in reports for w in r.warnings]
    if notes:
        lines += ["", "Warnings:", ""] + notes
    return "\n".join(lines) + "\n"


def emit_report(report: Union[ScoreReport, Sequence[ScoreReport]], fmt: str = "json") -> bytes:
    """Render one report (or a batch) as canonical JSON or a Markdown table."""
    single = isinstance(report, ScoreReport)
    reports = [report] if single else list(report)
    if fmt == "json":
        doc = reports[0].to_dict() if single else [r.to_dict() for r in reports]
        return (json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n").encode()
    if fmt in ("markdown", "md"):
        return render_markdown(reports).encode()
    raise ConfigError(f"unknown report format {fmt!r}")


def load_reports(path) -> List[ScoreReport]:
    doc = json.loads(Path(path).read_text())
    docs = doc if isinstance(doc, list) else [doc]
    return [ScoreReport.from_dict(d) for d in docs]
