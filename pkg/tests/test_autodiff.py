import math

import numpy as np
import pytest

from adagpr import autodiff as ad
from adagpr import models
from adagpr.errors import ContractError, DimensionError, ParameterError, ValidationError
from adagpr.graph import Graph, normalize_adjacency

import gradsuite
from oracles import central_difference, max_relative_error, random_graph


def test_relu_example():
    t = ad.Tape()
    assert ad.relu(t.tensor([[-1.0, 2.0]])).value.tolist() == [[0.0, 2.0]]


def test_identity_mix_beta_zero_is_identity():
    rng = np.random.default_rng(0)
    t = ad.Tape()
    h = rng.standard_normal((4, 3))
    out = ad.identity_mix(t.tensor(h), t.tensor(rng.standard_normal((3, 3))), 0.0)
    np.testing.assert_array_equal(out.value, h)


def test_identity_mix_rectangular_identity():
    t = ad.Tape()
    h = np.arange(6.0).reshape(2, 3)
    out = ad.identity_mix(t.tensor(h), t.tensor(np.zeros((3, 2))), 0.0)
    np.testing.assert_array_equal(out.value, h[:, :2])


def test_matmul_gradient_fd():
    rng = np.random.default_rng(1)
    vals = {"A": rng.standard_normal((3, 4)), "W": rng.standard_normal((4, 2))}
    proj = rng.standard_normal((2, 2))

    def build(v, tape):
        out = ad.matmul(tape.param("A", v["A"]), tape.param("W", v["W"]))
        return ad.sum_all(ad.matmul(out, tape.constant(proj)))

    tape = ad.Tape()
    grads = tape.backward(build(vals, tape))
    num = central_difference(lambda v: float(build(v, ad.Tape()).value[0, 0]), vals)
    assert max_relative_error({"W": grads["W"]}, {"W": num["W"]}) < 1e-6


def test_nll_examples():
    t = ad.Tape()
    lp = np.full((3, 2), -np.inf)
    lp[[0, 1, 2], [1, 0, 1]] = 0.0
    lp[np.isinf(lp)] = -50.0
    loss = ad.nll_loss_masked(t.tensor(lp), [1, 0, 1], [0, 2])
    assert loss.value[0, 0] == 0.0
    t = ad.Tape()
    loss = ad.nll_loss_masked(t.tensor(np.full((5, 4), -math.log(4))), [0, 1, 2, 3, 0], [0, 1, 2])
    assert loss.value[0, 0] == pytest.approx(math.log(4), abs=1e-15)
    assert loss.value[0, 0] == pytest.approx(1.3863, abs=1e-4)


def test_nll_matches_scalar_bruteforce():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((6, 3))
    labels = rng.integers(0, 3, 6)
    mask = [0, 2]
    t = ad.Tape()
    z = t.param("z", logits)
    loss = ad.nll_loss_masked(ad.log_softmax_rows(z), labels, mask)
    g = t.backward(loss)["z"]
    want = 0.0
    for i in mask:
        want -= logits[i, labels[i]] - math.log(sum(math.exp(v) for v in logits[i]))
    want /= len(mask)
    assert loss.value[0, 0] == pytest.approx(want, abs=1e-14)
    want_g = np.zeros((6, 3))
    for i in mask:
        s = sum(math.exp(v) for v in logits[i])
        for j in range(3):
            want_g[i, j] = (math.exp(logits[i, j]) / s - (j == labels[i])) / len(mask)
    np.testing.assert_allclose(g, want_g, atol=1e-14)


def test_nll_errors():
    t = ad.Tape()
    with pytest.raises(ValidationError):
        ad.nll_loss_masked(t.tensor(np.zeros((2, 2))), [0, 1], [])
    with pytest.raises(ValidationError):
        ad.nll_loss_masked(t.tensor(np.zeros((2, 2))), [0, 5], [1])


def test_sum_gradient_is_ones():
    t = ad.Tape()
    x = t.param("x", np.array([[1.0, -2.0], [3.0, 4.0]]))
    g = t.backward(ad.sum_all(x))
    np.testing.assert_array_equal(g["x"], np.ones((2, 2)))


def test_constants_only_give_empty_gradients():
    t = ad.Tape()
    x = t.constant(np.ones((2, 2)))
    loss = ad.sum_all(ad.relu(x))
    assert t.backward(loss) == {}
    assert t.records == []


def test_unused_parameter_gets_zero_gradient():
    t = ad.Tape()
    a = t.param("a", np.ones((1, 1)))
    t.param("b", np.ones((2, 3)))
    g = t.backward(ad.sum_all(a))
    np.testing.assert_array_equal(g["b"], np.zeros((2, 3)))


def test_backward_twice_is_an_error():
    t = ad.Tape()
    loss = ad.sum_all(t.param("x", np.ones((2, 2))))
    t.backward(loss)
    with pytest.raises(ContractError):
        t.backward(loss)


def test_backward_needs_scalar_root():
    t = ad.Tape()
    with pytest.raises(ContractError):
        t.backward(t.param("x", np.ones((2, 2))))


def test_tapes_do_not_mix():
    a, b = ad.Tape(), ad.Tape()
    with pytest.raises(ContractError):
        ad.add(a.tensor(np.ones((1, 1))), b.tensor(np.ones((1, 1))))


def test_shape_errors():
    t = ad.Tape()
    with pytest.raises(DimensionError):
        ad.matmul(t.tensor(np.ones((2, 3))), t.tensor(np.ones((2, 3))))
    with pytest.raises(DimensionError):
        ad.add(t.tensor(np.ones((2, 3))), t.tensor(np.ones((3, 2))))


def test_records_are_topological():
    t = ad.Tape()
    x = t.param("x", np.ones((2, 2)))
    y = ad.relu(ad.matmul(x, x))
    ad.sum_all(ad.add(y, x))
    seen = {leaf.node for leaf in t.leaves}
    for rec in t.records:
        assert all(i.node in seen for i in rec.inputs)
        seen.add(rec.output.node)


def test_gradient_accumulates_over_fanout():
    t = ad.Tape()
    x = t.param("x", np.array([[2.0]]))
    loss = ad.add(ad.scale(x, 3.0), ad.scale(x, 4.0))
    assert t.backward(loss)["x"][0, 0] == 7.0


def test_dropout_eval_and_zero_rate_are_identity_without_draws():
    t = ad.Tape()
    x = t.tensor(np.ones((3, 3)))
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    assert ad.dropout(x, 0.5, False, rng) is x
    assert ad.dropout(x, 0.0, True, rng) is x
    assert rng.bit_generator.state == state
    with pytest.raises(ParameterError):
        ad.dropout(x, 1.0, True, rng)


def test_dropout_preserves_expectation():
    t = ad.Tape()
    x = t.tensor(np.full((1, 100_000), 3.0), requires_grad=True)
    out = ad.dropout(x, 0.3, True, np.random.default_rng(3)).value
    assert out.mean() == pytest.approx(3.0, rel=0.02)
    assert set(np.unique(out).round(12)) <= {0.0, round(3.0 / 0.7, 12)}


def test_dropout_deterministic_under_seed():
    t = ad.Tape()
    x = t.tensor(np.ones((5, 5)), requires_grad=True)
    a = ad.dropout(x, 0.5, True, np.random.default_rng(9)).value
    b = ad.dropout(x, 0.5, True, np.random.default_rng(9)).value
    np.testing.assert_array_equal(a, b)


def test_gcnii_two_layer_gradients_fd():
    rng = np.random.default_rng(4)
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)])
    a = normalize_adjacency(g)
    spec = models.ModelSpec("gcnii", 2, 4, 3, 3, alpha=0.2, lam=0.5, dropout=0.3)
    params = models.init_params(spec, rng)
    x = rng.standard_normal((5, 3))
    labels = np.array([0, 1, 2, 1, 0])

    vals = {k: v.copy() for k, v in params.values.items()}
    for seed in range(100):
        def build(v, tape, seed=seed):
            out = models.forward(spec, models.ParameterSet(dict(v), params.groups), a, x, train=True,
                                 rng=np.random.default_rng(seed), tape=tape)
            return ad.nll_loss_masked(out, labels, [0, 1, 3])

        tape = ad.Tape()
        loss = build(vals, tape)
        if not gradsuite.near_kink(tape):
            break
    grads = tape.backward(loss)
    num = central_difference(lambda v: float(build(v, ad.Tape()).value[0, 0]), vals)
    assert max_relative_error(grads, num, gradsuite.FLOOR) < 1e-5


@pytest.mark.parametrize("op", gradsuite.OPS)
def test_each_op_passes_fd(op):
    rng = np.random.default_rng(gradsuite.OPS.index(op))
    done = 0
    while done < 5:
        err, why = gradsuite.check(gradsuite.op_instance(op, rng))
        if why:
            continue
        assert err < gradsuite.TOL
        done += 1


@pytest.mark.parametrize("variant", models.VARIANTS)
def test_each_model_passes_fd(variant):
    rng = np.random.default_rng(len(variant))
    done = 0
    while done < 5:
        err, why = gradsuite.check(gradsuite.model_instance(variant, rng))
        if why:
            continue
        assert err < gradsuite.TOL
        done += 1


def test_near_kink_detection():
    t = ad.Tape()
    x = t.param("x", np.array([[1e-7, 1.0]]))
    ad.relu(x)
    assert gradsuite.near_kink(t)
