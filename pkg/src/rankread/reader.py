"""Span reader: start/end distributions over concatenated passage words."""

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass(frozen=True)
class SpanLabel:
    passage_id: object
    start: int  # token offsets within the passage, end inclusive
    end: int


@dataclass
class Segment:
    passage_id: object
    offset: int  # position of the passage's first word on the concatenated axis
    length: int


@dataclass
class SpanDistribution:
    start_logits: T.Tensor  # (V, 1)
    end_logits: T.Tensor
    start_probs: T.Tensor   # (V, 1), softmax over all V concatenated words
    end_probs: T.Tensor
    segments: list

    def segment_for(self, passage_id):
        for seg in self.segments:
            if seg.passage_id == passage_id:
                return seg
        raise KeyError(f"passage {passage_id!r} not in this distribution")

    def global_index(self, label):
        seg = self.segment_for(label.passage_id)
        if not (0 <= label.start <= label.end < seg.length):
            raise ValueError(
                f"span [{label.start}, {label.end}] outside passage "
                f"{label.passage_id!r} of length {seg.length}")
        return seg.offset + label.start, seg.offset + label.end


def _pointer_head(h_cat, w, b, w_out):
    f = T.tanh(T.add_col(T.matmul(w, h_cat), b))
    logits = T.transpose(T.matmul(w_out, f))
    return logits, T.softmax_cols(logits)


def span_distributions(h_reads, passage_ids, w_s, b_s, ws_out, w_e, b_e, we_out):
    """Start/end distributions over the words of the given passages, in order.

    The softmax runs over the full concatenated axis, so probability mass is
    shared between the first passage and any appended negatives.
    """
    if not h_reads:
        raise T.ShapeError("span_distributions: need at least one passage")
    segments = []
    offset = 0
    for pid, h in zip(passage_ids, h_reads):
        length = h.data.shape[1]
        segments.append(Segment(pid, offset, length))
        offset += length
    h_cat = T.concat_cols(h_reads) if len(h_reads) > 1 else h_reads[0]
    s_logits, s_probs = _pointer_head(h_cat, w_s, b_s, ws_out)
    e_logits, e_probs = _pointer_head(h_cat, w_e, b_e, we_out)
    return SpanDistribution(s_logits, e_logits, s_probs, e_probs, segments)


def span_loss(dist, label):
    """-log p_start(label) - log p_end(label), fused with the softmax."""
    gs, ge = dist.global_index(label)
    return T.add(T.neg_log_softmax_pick(dist.start_logits, gs),
                 T.neg_log_softmax_pick(dist.end_logits, ge))


def extract_best_span(dist, max_len, restrict_to=None):
    """Best (start, end) pair by p_start * p_end within one passage segment.

    Spans never cross segment boundaries and cover at most max_len tokens.
    Ties break toward the smaller start, then the smaller end. Returns the
    label and log(p_start) + log(p_end).
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ps = dist.start_probs.data[:, 0]
    pe = dist.end_probs.data[:, 0]
    best = None
    best_score = -1.0
    for seg in dist.segments:
        if restrict_to is not None and seg.passage_id != restrict_to:
            continue
        lo, hi = seg.offset, seg.offset + seg.length
        for i in range(lo, hi):
            for j in range(i, min(i + max_len, hi)):
                score = ps[i] * pe[j]
                if score > best_score:
                    best_score = score
                    best = (seg, i, j)
    if best is None:
        raise ValueError("extract_best_span: no candidate span")
    seg, i, j = best
    label = SpanLabel(seg.passage_id, i - seg.offset, j - seg.offset)
    return label, float(np.log(ps[i]) + np.log(pe[j]))
