"""Prediction combination, answer-string metrics, and ranker analyses."""

import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import reader as reader_mod
from . import tensor as T
from .text import embed, tokenize

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(s):
    """Lowercase, strip punctuation and articles, collapse whitespace."""
    s = s.lower().translate(_PUNCT_TABLE)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def f1_em(prediction, golds):
    """Max token-overlap F1 and exact-match over the gold answers.

    When either normalized side is empty, both metrics reduce to string
    equality so that EM = 1 always implies F1 = 1.
    """
    if not golds:
        return 0.0, 0
    pred = normalize_answer(prediction)
    best_f1, best_em = 0.0, 0
    for gold in golds:
        g = normalize_answer(gold)
        if not pred or not g:
            em = int(pred == g)
            f1 = float(em)
        else:
            em = int(pred == g)
            common = Counter(pred.split()) & Counter(g.split())
            num_same = sum(common.values())
            if num_same == 0:
                f1 = 0.0
            else:
                precision = num_same / len(pred.split())
                recall = num_same / len(g.split())
                f1 = 2 * precision * recall / (precision + recall)
        best_f1 = max(best_f1, f1)
        best_em = max(best_em, em)
    return best_f1, best_em


@dataclass
class Candidate:
    answer: str
    passage_id: int
    ir_rank: int
    score: float          # exp(span log-prob) * policy prob
    span_log_prob: float
    policy_prob: float


@dataclass
class Prediction:
    question_id: str
    answer: str
    passage_id: object
    score: float
    span_log_prob: float
    policy_prob: float


def predict_candidates(model, table, question_tokens, passages, max_span_len):
    """One extracted answer per passage, scored by span probability times the
    selection probability over the full candidate set."""
    if not passages:
        return []
    dt = model.config.np_dtype
    q_emb = embed(question_tokens, table, dt)
    p_tokens = [tokenize(p.text).tokens for p in passages]
    with T.no_grad():
        ms = model.match_passages(q_emb, [embed(t, table, dt) for t in p_tokens])
        policy = model.rank(ms)
        dists = model.read_each(ms, list(range(len(passages))))
    gamma = policy.probs()
    candidates = []
    for i, (dist, passage) in enumerate(zip(dists, passages)):
        label, log_prob = reader_mod.extract_best_span(dist, max_span_len)
        answer = " ".join(p_tokens[i][label.start:label.end + 1])
        candidates.append(Candidate(
            answer, i, passage.ir_rank,
            float(np.exp(log_prob) * gamma[i]), log_prob, float(gamma[i])))
    return candidates


def predict(model, table, question_id, question_tokens, passages, max_span_len=15):
    """Answer with the highest combined score; ties go to the lower IR rank."""
    candidates = predict_candidates(model, table, question_tokens, passages, max_span_len)
    if not candidates:
        return Prediction(question_id, "", None, 0.0, float("-inf"), 0.0)
    best = max(candidates, key=lambda c: (c.score, -c.ir_rank))
    return Prediction(question_id, best.answer, best.passage_id,
                      best.score, best.span_log_prob, best.policy_prob)


def evaluate(model, table, dataset, retrieved_sets, max_span_len=15, threads=1):
    """Mean F1/EM over the dataset plus one record per question."""
    by_id = {rs.question_id: rs for rs in retrieved_sets}

    def one(rec):
        rs = by_id.get(rec["id"])
        passages = rs.passages if rs else []
        pred = predict(model, table, rec["id"], tokenize(rec["question"]).tokens,
                       passages, max_span_len)
        f1, em = f1_em(pred.answer, rec["answers"])
        return {"id": rec["id"], "prediction": pred.answer, "passage_id": pred.passage_id,
                "score": pred.score, "f1": f1, "em": em}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, dataset))
    else:
        records = [one(rec) for rec in dataset]
    n = max(len(records), 1)
    return {
        "f1": sum(r["f1"] for r in records) / n,
        "em": sum(r["em"] for r in records) / n,
        "count": len(records),
        "records": records,
    }


def rank_passages(model, table, question_tokens, passages):
    """Passage order under the trained selector, descending probability;
    probability ties keep IR order."""
    dt = model.config.np_dtype
    q_emb = embed(question_tokens, table, dt)
    with T.no_grad():
        ms = model.match_passages(q_emb, [embed(tokenize(p.text).tokens, table, dt)
                                          for p in passages])
        gamma = model.rank(ms).probs()
    order = sorted(range(len(passages)), key=lambda i: (-gamma[i], passages[i].ir_rank))
    return [passages[i] for i in order]


def topk_recall(flag_rankings, ks):
    """Fraction of questions with a positive passage in the top k, per k.

    flag_rankings holds one list of positive flags per question, already in
    ranked order.
    """
    out = {}
    n = max(len(flag_rankings), 1)
    for k in ks:
        hits = sum(1 for flags in flag_rankings if any(flags[:k]))
        out[k] = hits / n
    return out


def oracle_topk(candidate_lists, gold_lists, ks):
    """F1/EM of the best answer among each question's k highest-scoring
    candidates: the ceiling reachable by re-ranking alone."""
    out = {}
    n = max(len(candidate_lists), 1)
    for k in ks:
        f1_total, em_total = 0.0, 0.0
        for candidates, golds in zip(candidate_lists, gold_lists):
            top = sorted(candidates, key=lambda c: (-c.score, c.ir_rank))[:k]
            scores = [f1_em(c.answer, golds) for c in top]
            f1_total += max((s[0] for s in scores), default=0.0)
            em_total += max((s[1] for s in scores), default=0)
        out[k] = {"f1": f1_total / n, "em": em_total / n}
    return out
