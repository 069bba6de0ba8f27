import numpy as np
import pytest

import oracles
from kareader import tensor as T
from kareader.subgraph_reader import (
    NeighborIndex,
    SgReaderParams,
    neighbor_attention,
    propagate,
    read_subgraph,
    relation_match_score,
)
from kareader.kb import Subgraph
from kareader.tensor import Tensor


def random_instance(rng, n_ent=4, n_edges=5, n_rel=3, d=4, l_q=3):
    ents = [f"e{i}" for i in range(n_ent)]
    rels = [f"r{i}" for i in range(n_rel)]
    triples = sorted({(ents[rng.integers(n_ent)], rels[rng.integers(n_rel)], ents[rng.integers(n_ent)])
                      for _ in range(n_edges)})
    topic = [ents[0]]
    sub = Subgraph(ents, triples, topic)
    used = sub.relations
    params = SgReaderParams.init(d, rng)
    return dict(
        ents=ents, sub=sub, relations=used, topic=topic, params=params,
        h_q=rng.uniform(-1, 1, (l_q, d)), R=rng.uniform(-1, 1, (max(len(used), 1), d)),
        E=rng.uniform(-1, 1, (n_ent, d)),
    )


def run_reader(inst):
    index = NeighborIndex.build(inst["ents"], inst["sub"].neighbors, inst["relations"], inst["topic"])
    R = Tensor(inst["R"][: len(inst["relations"])])
    know, s_r = read_subgraph(Tensor(inst["h_q"]), R, Tensor(inst["E"]), inst["ents"], index,
                              inst["params"])
    return know, s_r, index


def oracle_reader(inst):
    p = inst["params"]
    rrow = {r: i for i, r in enumerate(inst["relations"])}
    erow = {e: i for i, e in enumerate(inst["ents"])}
    s_r = [oracles.relation_match(inst["h_q"], inst["R"][i])[0] for i in range(len(rrow))]
    topic = {erow[e] for e in inst["topic"]}
    out = []
    for e in inst["ents"]:
        nbs = [(rrow[r], erow[o]) for r, o in inst["sub"].neighbors[e]]
        vec, _ = oracles.propagate_one(inst["E"][erow[e]], nbs, s_r, inst["R"], inst["E"], topic,
                                       p.W_e.data, p.W_gate.data)
        out.append(vec)
    return np.array(out), np.array(s_r)


def test_orthogonal_relation_scores_zero():
    h_q = Tensor(np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    s, _ = relation_match_score(h_q, Tensor(np.array([0, 0, 2.0])))
    assert s.item() == 0.0


def test_single_token_question():
    rng = np.random.default_rng(0)
    h, r = rng.normal(size=(1, 5)), rng.normal(size=5)
    s, beta = relation_match_score(Tensor(h), Tensor(r))
    assert beta.data.tolist() == [1.0]
    assert abs(s.item() - h[0] @ r) < 1e-14


def test_relation_match_against_two_stage_formula():
    rng = np.random.default_rng(1)
    for _ in range(20):
        h, r = rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (2, 4))
        s, beta = relation_match_score(Tensor(h), Tensor(r))
        for k in range(2):
            want_s, want_b = oracles.relation_match(h, r[k])
            assert abs(s.data[k] - want_s) < 1e-12
            np.testing.assert_allclose(beta.data[k], want_b, atol=1e-12)


def test_attention_examples():
    one = neighbor_attention(Tensor([0.3]), np.array([False]), np.array([0]), 1)
    assert one.data.tolist() == [1.0]
    uni = neighbor_attention(Tensor([0.7] * 4), np.zeros(4, bool), np.zeros(4, int), 1)
    np.testing.assert_allclose(uni.data, 0.25, atol=1e-15)
    two = neighbor_attention(Tensor([0.2, 0.2]), np.array([True, False]), np.array([0, 0]), 1)
    np.testing.assert_allclose(two.data, [0.7310585786300049, 0.2689414213699951], atol=1e-12)


def test_attention_permutation_equivariant():
    rng = np.random.default_rng(2)
    s, top = rng.normal(size=6), rng.random(6) < 0.3
    seg = np.array([0, 0, 1, 1, 1, 2])
    base = neighbor_attention(Tensor(s), top, seg, 3).data
    perm = rng.permutation(6)
    moved = neighbor_attention(Tensor(s[perm]), top[perm], seg[perm], 3).data
    np.testing.assert_allclose(moved, base[perm], atol=1e-15)


def test_topic_indicator_raises_weight():
    s = np.array([0.4, -0.1, 0.9])
    seg = np.zeros(3, int)
    off = neighbor_attention(Tensor(s), np.zeros(3, bool), seg, 1).data
    on = neighbor_attention(Tensor(s), np.array([True, False, False]), seg, 1).data
    assert on[0] > off[0]


def test_isolated_entities_unchanged_bitwise():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, n_edges=0)
    know, _, _ = run_reader(inst)
    assert know.vectors.data.tobytes() == inst["E"].tobytes()
    assert np.isnan(know.gates).all()


def test_zero_gate_weights_mix_evenly():
    rng = np.random.default_rng(4)
    inst = random_instance(rng)
    inst["params"].W_gate.data[:] = 0.0
    know, _, index = run_reader(inst)
    has = np.unique(index.owner)
    np.testing.assert_allclose(know.gates[has], 0.5, atol=1e-15)


@pytest.mark.parametrize("seed", range(25))
def test_read_subgraph_matches_per_entity_oracle(seed):
    inst = random_instance(np.random.default_rng(seed))
    know, s_r, _ = run_reader(inst)
    want, want_s = oracle_reader(inst)
    np.testing.assert_allclose(know.vectors.data, want, atol=1e-10, rtol=0)
    np.testing.assert_allclose(s_r.data, want_s, atol=1e-10, rtol=0)


def test_duplicate_relation_gets_identical_score():
    rng = np.random.default_rng(5)
    ents = ["a", "b", "c"]
    sub = Subgraph(ents, [("a", "r", "b"), ("b", "r", "c")], ["a"])
    index = NeighborIndex.build(ents, sub.neighbors, sub.relations, ["a"])
    params = SgReaderParams.init(3, rng)
    know, s_r = read_subgraph(Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(1, 3))),
                              Tensor(rng.normal(size=(3, 3))), ents, index, params)
    assert len(s_r.data) == 1 and (index.relation == 0).all()


def test_convex_combination_bound_and_gate_range():
    rng = np.random.default_rng(6)
    for _ in range(50):
        inst = random_instance(rng, n_ent=5, n_edges=8)
        know, _, index = run_reader(inst)
        gates = know.gates[~np.isnan(know.gates)]
        assert ((gates > 0) & (gates < 1)).all()
        sums = np.bincount(index.owner, weights=know.attention, minlength=5)
        has = np.unique(index.owner)
        np.testing.assert_allclose(sums[has], 1.0, atol=1e-9)
        for i in range(5):
            bound = max(np.abs(inst["E"][i]).max(), 1.0)
            assert np.abs(know.vectors.data[i]).max() <= bound + 1e-12


def test_reader_is_deterministic():
    inst = random_instance(np.random.default_rng(7))
    a, _, _ = run_reader(inst)
    b, _, _ = run_reader(inst)
    assert a.vectors.data.tobytes() == b.vectors.data.tobytes()


def test_propagate_gradients():
    from kareader.gradcheck import grad_check

    inst = random_instance(np.random.default_rng(8))
    index = NeighborIndex.build(inst["ents"], inst["sub"].neighbors, inst["relations"], inst["topic"])
    p = inst["params"]
    E = Tensor(inst["E"], requires_grad=True)
    R = Tensor(inst["R"][: len(inst["relations"])], requires_grad=True)
    s = Tensor(np.random.default_rng(9).normal(size=len(inst["relations"])), requires_grad=True)
    w = np.random.default_rng(10).normal(size=inst["E"].shape)

    def loss():
        out, _, _ = propagate(E, R, s, index, p)
        return T.sum_(T.mul(out, w))

    report = grad_check(loss, {"E": E, "R": R, "s_r": s, "W_e": p.W_e, "W_gate": p.W_gate})
    assert report.passed, report.lines()
