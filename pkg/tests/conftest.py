import numpy as np
import pytest

from rankread import trainer as trainer_mod
from rankread.config import Config
from rankread.model import RankReadModel
from rankread.retrieval import RetrievedPassage
from rankread.text import synthetic_embeddings, tokenize


TOY_PASSAGES = [
    "the kib is blue indeed .",
    "blue is often seen near the kib .",
    "the kib is not what people expect .",
    "many ask about the kib without luck .",
]
TOY_QUESTION = "what is the color of the kib ?"
TOY_ANSWERS = ["blue"]


def toy_example():
    """N=4 passages, two containing the answer."""
    passages = [RetrievedPassage(text, f"d{i}", i + 1, 1.0 / (i + 1), "blue" in text)
                for i, text in enumerate(TOY_PASSAGES)]
    p_tokens = [tokenize(t).tokens for t in TOY_PASSAGES]
    answer_tokens = [tokenize(a).tokens for a in TOY_ANSWERS]
    spans = {}
    for i, toks in enumerate(p_tokens):
        occ = trainer_mod.localize_spans(toks, answer_tokens)
        if occ:
            spans[i] = occ
    return trainer_mod.TrainingExample(
        "toy-0", tokenize(TOY_QUESTION).tokens, list(TOY_ANSWERS), passages, p_tokens, spans)


def toy_table(dim=6):
    vocab = set(tokenize(TOY_QUESTION).tokens)
    for t in TOY_PASSAGES:
        vocab.update(tokenize(t).tokens)
    return synthetic_embeddings(vocab, dim, seed=5)


def toy_config(**overrides):
    base = dict(hidden_size=6, embed_dim=6, dropout=0.0, learning_rate=0.01,
                batch_size=1, train_sample_k=4, min_negatives=2)
    base.update(overrides)
    return Config(**base).validate()


def toy_trainer(seed=0, **config_overrides):
    cfg = toy_config(**config_overrides)
    model = RankReadModel(cfg.model_config(), seed=seed)
    table = toy_table(cfg.embed_dim)
    return trainer_mod.Trainer(model, table, cfg, seed=seed)


@pytest.fixture
def example():
    return toy_example()


def enumerate_policy_gradient(trainer, example):
    """Exact expectation of the sampled policy-gradient term r * grad(log pi),
    under the positive-conditional sampling law, plus the per-outcome grads.

    Returns (expectation, {tau: grads}, {tau: prob}, {tau: reward}).
    """
    from rankread import ranker as ranker_mod
    from rankread import reader as reader_mod
    from rankread import tensor as T

    model = trainer.model
    cfg = trainer.config
    q_emb, p_embs = trainer._embeddings(example)
    pos = example.positive_indices()
    neg = [i for i in range(len(example.passages)) if i not in example.spans]

    def grad_for(tau):
        model.zero_grads()
        ms = model.match_passages(q_emb, p_embs)
        policy = model.rank(ms, list(range(len(example.passages))))
        dist = model.read([ms[tau]] + [ms[i] for i in neg], [tau] + neg)
        extracted, _ = reader_mod.extract_best_span(dist, cfg.max_span_len, restrict_to=tau)
        answer = " ".join(example.passage_tokens[tau][extracted.start:extracted.end + 1])
        r = trainer_mod.best_reward(example.answers, answer).value
        T.backward(T.scale(ranker_mod.log_policy(policy, tau), r))
        return {n: p.grad.copy() for n, p in model.parameters().items()}, r, policy

    grads, rewards = {}, {}
    policy = None
    for tau in pos:
        grads[tau], rewards[tau], policy = grad_for(tau)
    probs = ranker_mod.conditional_positive_probs(policy, set(pos))
    expectation = {
        name: sum(probs[tau] * grads[tau][name] for tau in pos)
        for name in trainer.model.parameters()
    }
    return expectation, grads, probs, rewards
