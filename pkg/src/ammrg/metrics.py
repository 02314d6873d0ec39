"""Report-generation metrics: corpus BLEU, ROUGE-L, plain CIDEr, and
micro-averaged clinical-efficacy precision/recall/F1.

Text is tokenized by lowercasing, deleting ASCII punctuation, and splitting
on whitespace. Every text argument accepts either a raw string or an
already-tokenized list of strings.
"""
import math
import string
from collections import Counter

import numpy as np

from . import kernels

_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(text):
    return text.lower().translate(_PUNCT).split()


def _tokens(x):
    return tokenize(x) if isinstance(x, str) else [t for t in x]


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _pairs(candidates, references):
    candidates = [_tokens(c) for c in candidates]
    references = [_tokens(r) for r in references]
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    return candidates, references


def bleu_n(candidates, references, n=4):
    """Corpus BLEU-n with one reference per candidate."""
    if n not in (1, 2, 3, 4):
        raise ValueError(f"n must be in 1..4, got {n}")
    cands, refs = _pairs(candidates, references)
    matched = [0] * n
    totals = [0] * n
    cand_len = sum(len(c) for c in cands)
    ref_len = sum(len(r) for r in refs)
    for c, r in zip(cands, refs):
        for k in range(1, n + 1):
            cg, rg = _ngrams(c, k), _ngrams(r, k)
            matched[k - 1] += sum(min(cnt, rg[g]) for g, cnt in cg.items())
            totals[k - 1] += max(len(c) - k + 1, 0)
    if cand_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, totals)) / n
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_p)


def lcs_length(a, b):
    a, b = _tokens(a), _tokens(b)
    vocab = {}
    ia = np.array([vocab.setdefault(t, len(vocab)) for t in a], dtype=np.int64)
    ib = np.array([vocab.setdefault(t, len(vocab)) for t in b], dtype=np.int64)
    return int(kernels.lcs_length(ia, ib))


def rouge_l(candidate, reference):
    c, r = _tokens(candidate), _tokens(reference)
    if not c or not r:
        raise ValueError("ROUGE-L needs non-empty token sequences")
    lcs = lcs_length(c, r)
    if lcs == 0:
        return 0.0
    p, rec = lcs / len(c), lcs / len(r)
    return 2 * p * rec / (p + rec)


def corpus_rouge_l(candidates, references):
    cands, refs = _pairs(candidates, references)
    return sum(rouge_l(c, r) for c, r in zip(cands, refs)) / len(cands)


def _tfidf(counts, df, n_docs):
    # n-grams never seen in a reference count with df = 1
    return {g: cnt * math.log(n_docs / max(df.get(g, 0), 1)) for g, cnt in counts.items()}


def _cos(u, v):
    num = sum(w * v.get(g, 0.0) for g, w in u.items())
    nu = math.sqrt(sum(w * w for w in u.values()))
    nv = math.sqrt(sum(w * w for w in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return num / (nu * nv)


def cider(candidates, references, max_n=4):
    """Plain CIDEr: 10 x mean over n of the mean TF-IDF cosine, IDF taken over
    the reference documents."""
    cands, refs = _pairs(candidates, references)
    n_docs = len(refs)
    per_n = []
    for n in range(1, max_n + 1):
        ref_counts = [_ngrams(r, n) for r in refs]
        df = Counter(g for rc in ref_counts for g in rc)
        sims = [
            _cos(_tfidf(_ngrams(c, n), df, n_docs), _tfidf(rc, df, n_docs))
            for c, rc in zip(cands, ref_counts)
        ]
        per_n.append(sum(sims) / n_docs)
    return 10.0 * sum(per_n) / max_n


def ce_scores(predicted, truth):
    """Micro precision, recall and F1 over every (sample, label) slot."""
    pred = np.asarray(predicted, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape:
        raise ValueError(f"label shape mismatch: {pred.shape} vs {true.shape}")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def nlg_scores(candidates, references):
    return {
        "bleu_1": bleu_n(candidates, references, 1),
        "bleu_2": bleu_n(candidates, references, 2),
        "bleu_3": bleu_n(candidates, references, 3),
        "bleu_4": bleu_n(candidates, references, 4),
        "rouge_l": corpus_rouge_l(candidates, references),
        "cider": cider(candidates, references),
    }
