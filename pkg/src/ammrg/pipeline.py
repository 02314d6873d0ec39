"""Two-stage flow on a corpus.

Stage 1 trains the linear classifier on mean-pooled patch features and mines
disease regions (class activation map -> RoI -> masked patches) into visual
bank candidates. Stage 2 builds one query per disease from the class-weighted
patch features, enhances it through the visual bank and the report memory,
and assembles a report from the retrieved sentences.
"""
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import classifier as clf_mod
from .encoders import PatchEncoder, SentenceEncoder
from .errors import ConfigError, EmptyMemoryError
from .hopfield import HopfieldConfig, HopfieldProjections, PatternMatrix, batch_enhance, retrieve
from .memory_bank import (ReportMemoryEntry, VisualBankEntry, build_report_memory, build_visual_bank)
from .metrics import ce_scores, nlg_scores
from .roi import apply_mask, patch_means, select_roi
from .synthetic import NO_FINDINGS, N_DISEASES, generic_sentence, join_report

ABLATIONS = ("none", "visual", "report", "both")


@dataclass
class PipelineConfig:
    seed: int = 0
    n_diseases: int = 14
    patch_size: int = 16
    image_size: int = 224
    channels: int = 3
    feature_dim: int = 768
    beta: float = 4.0
    mode: str = "cccp"
    step_size: float = 0.01
    max_iters: int = 32
    tolerance: float = 1e-6
    cap_per_disease: int = 500
    report_memory_size: int = 6000
    tau: float = 0.5
    top_k: Optional[int] = None
    d_out: int = 4096
    n_cases: int = 64
    train_lr: float = 0.05
    train_epochs: int = 300
    # stored sentence vectors are unit-norm; this lifts them to the magnitude
    # of patch features so beta separates them in the report Hopfield
    report_scale: float = 16.0
    alignment_ridge: float = 1e-3
    corpus_dir: Optional[str] = None
    visual_bank_path: Optional[str] = None
    report_bank_path: Optional[str] = None
    classifier_path: Optional[str] = None

    def __post_init__(self):
        if self.n_diseases != N_DISEASES:
            raise ConfigError(f"the synthetic corpus defines {N_DISEASES} diseases, not {self.n_diseases}")
        if self.image_size % self.patch_size:
            raise ConfigError("image_size must be a multiple of patch_size")
        if self.mode not in ("cccp", "gradient"):
            raise ConfigError(f"mode must be cccp or gradient, got {self.mode!r}")
        for name in ("cap_per_disease", "report_memory_size", "n_cases", "d_out", "max_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 <= self.tau < 1.0:
            raise ConfigError("tau must lie in [0, 1)")

    def hopfield(self, **overrides):
        kw = dict(beta=self.beta, mode=self.mode, step_size=self.step_size, max_iters=self.max_iters,
                  tolerance=self.tolerance)
        kw.update(overrides)
        return HopfieldConfig(**kw)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_OPTIONAL_TYPES = {"top_k": int}


def coerce_value(name, raw):
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    if name not in fields:
        raise ConfigError(f"unknown config key {name!r}")
    default = fields[name].default
    if isinstance(raw, str):
        raw = raw.strip()
        if default is None and raw.lower() in ("", "none"):
            return None
    try:
        if default is None:
            return _OPTIONAL_TYPES.get(name, str)(raw)
        if isinstance(default, bool):
            return str(raw).lower() in ("1", "true", "yes")
        return type(default)(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment. Dashes in keys are
    accepted as underscores."""
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = coerce_value(key, raw)
    return values


# -------------------------------------------------------------------- stage 1


@dataclass
class Stage1Result:
    classifier: clf_mod.LinearClassifier
    encoder: PatchEncoder
    loss_trace: np.ndarray
    probs: np.ndarray  # (n_cases, 14)
    selections: dict  # (case_id, disease) -> RoiSelection
    candidates: list  # VisualBankEntry

    def masked_image(self, case, disease):
        return apply_mask(case.image, self.selections[(case.id, disease)])


def make_encoder(config):
    return PatchEncoder(seed=config.seed, dim=config.feature_dim, patch_size=config.patch_size,
                        channels=config.channels)


def run_stage1(corpus, config, classifier=None):
    """Train (unless ``classifier`` is given) and mine visual bank candidates
    for every predicted-positive disease of every case."""
    if not corpus:
        raise ValueError("stage 1 needs a non-empty corpus")
    encoder = make_encoder(config)
    feats = [encoder.encode_patches(c.image) for c in corpus]
    pooled = np.stack([f.mean(axis=0) for f in feats])
    labels = np.stack([c.labels for c in corpus]).astype(float)
    trace = np.array([])
    if classifier is None:
        tc = clf_mod.TrainConfig(learning_rate=config.train_lr, epochs=config.train_epochs, seed=config.seed)
        mu = pooled.mean(axis=0)
        sd = pooled.std(axis=0)
        sd[sd == 0.0] = 1.0
        trained, trace = clf_mod.train((pooled - mu) / sd, labels, tc)
        classifier = clf_mod.fold_standardization(trained, mu, sd)
    probs = clf_mod.predict_probs(classifier, pooled)
    selections, candidates = {}, []
    for case, f, p in zip(corpus, feats, probs):
        for d in np.flatnonzero(p > 0.5):
            cam = clf_mod.linear_cam(classifier, f, int(d), config.patch_size)
            means = patch_means(cam, config.patch_size)
            sel = select_roi(means, config.tau, config.top_k, config.patch_size)
            selections[(case.id, int(d))] = sel
            idx = sel.indices
            # patch rows of the masked image; unselected rows are zero
            masked = encoder.encode_patches(apply_mask(case.image, sel), indices=idx)
            flat_means = means.ravel()
            for pidx in idx:
                candidates.append(VisualBankEntry(masked[pidx], int(d), case.id, int(pidx),
                                                  score=float(flat_means[pidx])))
    return Stage1Result(classifier, encoder, trace, probs, selections, candidates)


def report_candidates(corpus, sentence_encoder):
    out = []
    for case in corpus:
        present = list(np.flatnonzero(case.labels))
        sentences = case.sentences
        if present and len(sentences) != len(present):
            raise ValueError(f"{case.id}: report has {len(sentences)} sentences for {len(present)} findings")
        if not present:
            out.append(ReportMemoryEntry(sentence_encoder.encode_sentence(sentences[0]), sentences[0],
                                         (False,) * N_DISEASES, case.id))
            continue
        for d, text in zip(present, sentences):
            tags = tuple(j == d for j in range(N_DISEASES))
            out.append(ReportMemoryEntry(sentence_encoder.encode_sentence(text), text, tags, case.id))
    return out


def build_banks(corpus, stage1, config, sentence_encoder=None):
    sentence_encoder = sentence_encoder or SentenceEncoder(config.feature_dim, config.seed)
    visual = build_visual_bank(stage1.candidates, config.cap_per_disease, config.feature_dim)
    report = build_report_memory(report_candidates(corpus, sentence_encoder), config.report_memory_size,
                                 config.feature_dim)
    return visual, report


# -------------------------------------------------------------------- stage 2


def disease_queries(classifier, patch_features):
    """One query per class: patch features averaged with weights
    ``max(0, <w_class, f_p>)``, falling back to the plain mean when no patch
    scores positive."""
    scores = np.maximum(patch_features @ classifier.weights.T, 0.0)  # (n_patches, n_classes)
    totals = scores.sum(axis=0)
    mean = patch_features.mean(axis=0)
    out = np.empty((classifier.n_classes, patch_features.shape[1]))
    for d in range(classifier.n_classes):
        out[d] = mean if totals[d] == 0.0 else scores[:, d] @ patch_features / totals[d]
    return out


def fit_alignment(sources, targets, ridge=1e-3):
    """Ridge map ``A`` with ``A @ source ~= target`` (dual form, n << d)."""
    x = np.asarray(sources, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    gram = x @ x.T
    reg = ridge * np.trace(gram) / max(len(x), 1)
    coef = np.linalg.solve(gram + reg * np.eye(len(x)), t)
    return coef.T @ x


@dataclass
class GeneratedReport:
    case_id: str
    text: str
    predicted: np.ndarray  # bool (14,)
    enhanced_shape: tuple = ()


@dataclass
class Stage2Model:
    visual: Optional[PatternMatrix]
    report: Optional[PatternMatrix]
    report_sentences: list
    visual_tags: Optional[np.ndarray]
    proj_v: HopfieldProjections
    proj_r: HopfieldProjections


def prepare_stage2(corpus, stage1, visual_bank, report_memory, config, queries=None):
    if len(visual_bank) == 0:
        raise EmptyMemoryError("visual bank is empty")
    if len(report_memory) == 0:
        raise EmptyMemoryError("report memory is empty")
    if queries is None:
        queries = [disease_queries(stage1.classifier, stage1.encoder.encode_patches(c.image)) for c in corpus]
    report_patterns = report_memory.features * config.report_scale
    sources, targets = [], []
    sentence_rows = {}
    for i, s in enumerate(report_memory.sentences):
        sentence_rows.setdefault(s, i)
    for case, q in zip(corpus, queries):
        for d in np.flatnonzero(case.labels):
            row = sentence_rows.get(case.sentence_for(int(d)))
            if row is not None:
                sources.append(q[d])
                targets.append(report_patterns[row])
    rng_seed = config.seed + 1
    value_v = HopfieldProjections.random(config.feature_dim, visual_bank.dim, config.d_out, seed=rng_seed,
                                         identity_query=True).value_proj
    value_r = HopfieldProjections.random(config.feature_dim, report_memory.dim, config.d_out, seed=rng_seed + 1,
                                         identity_query=True).value_proj
    align = fit_alignment(sources, targets, config.alignment_ridge) if sources else None
    return Stage2Model(
        visual=PatternMatrix(visual_bank.features),
        report=PatternMatrix(report_patterns),
        report_sentences=list(report_memory.sentences),
        visual_tags=np.asarray(visual_bank.disease_ids),
        proj_v=HopfieldProjections(None, value_v),
        proj_r=HopfieldProjections(align, value_r),
    )


def run_stage2(corpus, stage1, visual_bank, report_memory, config, ablate="both"):
    """Generate one report per case.

    ``ablate`` picks the memories in use: ``none`` (classifier only),
    ``visual``, ``report``, or ``both``.
    """
    if ablate not in ABLATIONS:
        raise ValueError(f"ablate must be one of {ABLATIONS}")
    use_v = ablate in ("visual", "both")
    use_r = ablate in ("report", "both")
    queries = [disease_queries(stage1.classifier, stage1.encoder.encode_patches(c.image)) for c in corpus]
    model = prepare_stage2(corpus, stage1, visual_bank, report_memory, config, queries) if (use_v or use_r) else None
    hcfg = config.hopfield()
    reports = []
    for case, q, probs in zip(corpus, queries, stage1.probs):
        shape = ()
        score = probs.copy()
        picks = {}
        if model is not None:
            enhanced, details = batch_enhance(q, model.visual, model.report, model.proj_v, model.proj_r, hcfg,
                                              n_queries=config.n_diseases, use_visual=use_v, use_report=use_r,
                                              return_details=True)
            shape = enhanced.shape
            if use_v:
                # retrieval mass on bank entries tagged with the queried disease
                evidence = np.array([res.weights[model.visual_tags == d].sum()
                                     for d, res in enumerate(details.visual)])
                score = 0.5 * (score + evidence)
            if use_r:
                picks = {d: model.report_sentences[int(np.argmax(res.weights))]
                         for d, res in enumerate(details.report)}
        predicted = score > 0.5
        sentences = [picks.get(int(d), generic_sentence(int(d))) for d in np.flatnonzero(predicted)]
        reports.append(GeneratedReport(case.id, join_report(sentences or [NO_FINDINGS]), predicted, shape))
    return reports


def evaluate_reports(corpus, reports):
    scores = nlg_scores([r.text for r in reports], [c.report for c in corpus])
    p, r, f1 = ce_scores([g.predicted for g in reports], [c.labels for c in corpus])
    scores.update(ce_precision=p, ce_recall=r, ce_f1=f1)
    return scores


@dataclass
class PipelineResult:
    reports: list
    metrics: dict
    stage1: Stage1Result
    visual_bank: object
    report_memory: object
    extra: dict = field(default_factory=dict)


def run_pipeline(corpus, config, ablate="both", stage1=None):
    stage1 = stage1 or run_stage1(corpus, config)
    visual, report = build_banks(corpus, stage1, config)
    reports = run_stage2(corpus, stage1, visual, report, config, ablate)
    return PipelineResult(reports, evaluate_reports(corpus, reports), stage1, visual, report)


# ---------------------------------------------------------------- recovery task


def recovery_patterns(rng, n_patterns, dim):
    return rng.standard_normal((n_patterns, dim))


def stored_pattern_recovery(beta, n_patterns=16, dim=64, trials=100, noise=0.5, seed=0, mode="cccp",
                            threshold=0.99):
    """Fraction of noisy probes whose retrieved state has cosine >= ``threshold``
    with the pattern they were drawn from. Patterns have N(0, 1) entries.

    Every beta sees the same patterns and probes for a given seed.
    """
    rng = np.random.default_rng(seed)
    cfg = HopfieldConfig(beta=beta, mode=mode)
    hits = 0
    for _ in range(trials):
        pats = recovery_patterns(rng, n_patterns, dim)
        k = int(rng.integers(n_patterns))
        probe = pats[k] + noise * rng.standard_normal(dim)
        out = retrieve(probe, PatternMatrix(pats), cfg).updated
        cos = out @ pats[k] / (np.linalg.norm(out) * np.linalg.norm(pats[k]) or math.inf)
        hits += bool(cos >= threshold)
    return hits / trials


def sweep(corpus, config, param, values, with_pipeline=True, ablate="both"):
    """One row per value of ``param`` in {beta, cap, report-size}."""
    stage1 = run_stage1(corpus, config) if with_pipeline or param == "cap" else None
    rows = []
    for v in values:
        row = {"param": param, "value": v}
        if param == "beta":
            cfg = config.replace(beta=float(v))
            row["recovery_accuracy"] = stored_pattern_recovery(float(v), seed=config.seed)
        elif param == "cap":
            cfg = config.replace(cap_per_disease=int(v))
        elif param == "report-size":
            cfg = config.replace(report_memory_size=int(v))
        else:
            raise ValueError(f"unknown sweep parameter {param!r}")
        if with_pipeline:
            res = run_pipeline(corpus, cfg, ablate, stage1=stage1)
            row["visual_bank_size"] = len(res.visual_bank)
            row["report_memory_size"] = len(res.report_memory)
            row.update(res.metrics)
        elif param == "cap":
            row["visual_bank_size"] = len(build_visual_bank(stage1.candidates, int(v), config.feature_dim))
        rows.append(row)
    return rows
