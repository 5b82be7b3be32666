import math

import numpy as np
import pytest

from conftest import make_taxonomy
from core.exceptions import DataError, NumericError, ShapeError
from data_model.pydantic_models.config import LossWeights
from src.hier_metric import MetricContext, hamming, rho
from src.losses import ContrastiveBatch, bce, depth_penalty, hilecon, instance_loss, supcon, total_loss, zlpr
from src.tensor_core import ops
from src.tensor_core.grad_check import grad_check
from src.tensor_core.tensor import Tensor

TAU = 0.1


def closed_gold(taxonomy, golds):
    return np.vstack([taxonomy.closure(taxonomy.vector(labels)) for labels in golds])


def random_batch(taxonomy, golds, rng, d=5, leaves=False, scale=1.0):
    Y = closed_gold(taxonomy, golds)
    Z = [
        Tensor(rng.normal(scale=scale, size=(taxonomy.n, d)), requires_grad=leaves, name=f"z{i}")
        for i in range(len(golds))
    ]
    return ContrastiveBatch(Z=Z, Y=Y, taxonomy=taxonomy)


def gold_rows(batch):
    return [(i, int(j)) for i in range(batch.size) for j in np.flatnonzero(batch.Y[i])]


def supcon_oracle(batch, tau):
    rows = gold_rows(batch)
    z = [batch.Z[i].data[j] for i, j in rows]
    total = 0.0
    for a, (i, j) in enumerate(rows):
        positives = [b for b, (k, l) in enumerate(rows) if l == j and k != i]
        if not positives:
            continue
        denominator = sum(math.exp(z[a] @ z[b] / tau) for b in range(len(rows)) if b != a)
        total += -np.mean([math.log(math.exp(z[a] @ z[p] / tau) / denominator) for p in positives])
    return total


def hilecon_oracle(batch, tau, distance, scale, normalize_gamma=False, count=None):
    rows = gold_rows(batch)
    z = [batch.Z[i].data[j] for i, j in rows]

    def cos(u, v):
        return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

    total = 0.0
    for a, (i, j) in enumerate(rows):
        positives = [b for b, (k, l) in enumerate(rows) if l == j and k != i]
        if not positives:
            continue
        denominator = 0.0
        for b, (k, _) in enumerate(rows):
            if b == a:
                continue
            dist = distance(batch.Y[i], batch.Y[k])
            weight = 1 - dist / scale if b in positives else (dist / scale if normalize_gamma else dist)
            denominator += weight * math.exp(cos(z[a], z[b]) / tau)
        terms = []
        for p in positives:
            sigma = 1 - distance(batch.Y[i], batch.Y[rows[p][0]]) / scale
            terms.append(math.log(sigma * math.exp(cos(z[a], z[p]) / tau) / denominator))
        total += -np.mean(terms)
    return total / (count if count is not None else len(rows))


def instance_oracle(batch, tau, taxonomy, denominator="all", rule="exact", penalty="shifted"):
    L = taxonomy.max_depth
    total = 0.0
    for level in range(1, L + 1):
        T = batch.Y * (taxonomy.depths <= level)
        valid = [i for i in range(batch.size) if T[i].any()]
        X = {i: batch.Z[i].data[T[i] == 1].mean(axis=0) for i in valid}

        def positive(i, j):
            if rule == "exact":
                return bool(np.array_equal(T[i], T[j]))
            return bool((T[i] & T[j]).any())

        terms = []
        for i in valid:
            for j in valid:
                if j == i or not positive(i, j):
                    continue
                others = [k for k in valid if k != i and (denominator == "all" or k == j or not positive(i, k))]
                log_z = math.log(sum(math.exp(X[i] @ X[k] / tau) for k in others))
                terms.append(-(X[i] @ X[j] / tau - log_z))
        if terms:
            total += depth_penalty(level, L, penalty) * np.mean(terms)
    return total / L


def zlpr_oracle(s, gold):
    pos = sum(math.exp(-v) for v, g in zip(s, gold) if g == 1)
    neg = sum(math.exp(v) for v, g in zip(s, gold) if g == 0)
    return math.log(1 + pos) + math.log(1 + neg)


GOLDS = [["A1a", "B1"], ["A1a"], ["A2", "B2"]]
FOUR_GOLDS = [["A1a", "B1"], ["A1a"], ["A2", "B2", "A1a"], ["B1"]]


def test_supcon_matches_brute_force(seven_labels, rng):
    batch = random_batch(seven_labels, GOLDS, rng)
    assert supcon(batch, TAU).item() == pytest.approx(supcon_oracle(batch, TAU), rel=1e-10)


def test_supcon_with_one_shared_label_and_equal_vectors_is_zero(shallow_taxonomy):
    unit = np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]])
    batch = ContrastiveBatch(
        Z=[ops.constant(unit), ops.constant(unit)], Y=np.array([[1, 0, 0], [1, 0, 0]]), taxonomy=shallow_taxonomy
    )
    assert supcon(batch, TAU).item() == pytest.approx(0.0, abs=1e-12)


def test_anchors_without_positives_contribute_nothing(shallow_taxonomy, rng):
    batch = random_batch(shallow_taxonomy, [["B"], ["C"]], rng)
    # Only A is shared; the B and C anchors are skipped.
    assert supcon(batch, TAU).item() == pytest.approx(supcon_oracle(batch, TAU), rel=1e-10)
    lonely = random_batch(shallow_taxonomy, [["A"]], rng)
    assert supcon(lonely, TAU).item() == 0.0
    assert hilecon(lonely, TAU, MetricContext(shallow_taxonomy)).item() == 0.0


def test_hilecon_matches_brute_force(seven_labels, rng):
    ctx = MetricContext(seven_labels)
    batch = random_batch(seven_labels, GOLDS, rng)
    expected = hilecon_oracle(batch, TAU, lambda a, b: rho(ctx, a, b), ctx.C)
    assert hilecon(batch, TAU, ctx).item() == pytest.approx(expected, rel=1e-10)


def test_hilecon_variants_match_brute_force(seven_labels, rng):
    ctx = MetricContext(seven_labels)
    batch = random_batch(seven_labels, GOLDS, rng)
    lecon = hilecon_oracle(batch, TAU, hamming, seven_labels.n)
    assert hilecon(batch, TAU, ctx, mode="lecon").item() == pytest.approx(lecon, rel=1e-10)

    normalized = hilecon_oracle(batch, TAU, lambda a, b: rho(ctx, a, b), ctx.C, normalize_gamma=True)
    assert hilecon(batch, TAU, ctx, normalize_gamma=True).item() == pytest.approx(normalized, rel=1e-10)

    per_label = hilecon_oracle(batch, TAU, lambda a, b: rho(ctx, a, b), ctx.C, count=seven_labels.n)
    assert hilecon(batch, TAU, ctx, prefactor="labels").item() == pytest.approx(per_label, rel=1e-10)


def test_supcon_mode_is_exactly_supcon(seven_labels, rng):
    batch = random_batch(seven_labels, GOLDS, rng)
    ctx = MetricContext(seven_labels)
    assert hilecon(batch, TAU, ctx, mode="supcon").item() == supcon(batch, TAU).item()


def test_flat_taxonomy_makes_hilecon_and_lecon_identical(rng):
    flat = make_taxonomy(["x\tROOT", "y\tROOT", "z\tROOT", "w\tROOT"])
    ctx = MetricContext(flat)
    batch = random_batch(flat, [["x", "y"], ["x"], ["y", "z"], ["w", "x"]], rng)
    assert hilecon(batch, TAU, ctx).item() == hilecon(batch, TAU, ctx, mode="lecon").item()


def test_single_positive_with_no_negatives_costs_nothing(shallow_taxonomy, rng):
    batch = random_batch(shallow_taxonomy, [["A"], ["A"]], rng)
    assert hilecon(batch, TAU, MetricContext(shallow_taxonomy)).item() == pytest.approx(0.0, abs=1e-12)


def test_zero_norm_embedding_names_sample_and_label(shallow_taxonomy, rng):
    Z = [ops.constant(rng.normal(size=(3, 4))), ops.constant(np.zeros((3, 4)))]
    batch = ContrastiveBatch(Z=Z, Y=np.array([[1, 1, 0], [1, 0, 0]]), taxonomy=shallow_taxonomy, ids=["s0", "s1"])
    with pytest.raises(NumericError, match="'s1'.*'A'"):
        hilecon(batch, TAU, MetricContext(shallow_taxonomy))


def test_empty_anchor_set_is_a_data_error(shallow_taxonomy, rng):
    batch = random_batch(shallow_taxonomy, [[], []], rng)
    with pytest.raises(DataError):
        supcon(batch, TAU)
    with pytest.raises(DataError):
        hilecon(batch, TAU, MetricContext(shallow_taxonomy))


def test_hilecon_falls_as_a_positive_pair_aligns(shallow_taxonomy):
    ctx = MetricContext(shallow_taxonomy)
    e = np.eye(6)

    def loss(theta):
        z0 = np.vstack([e[0], e[2], e[5]])
        z1 = np.vstack([math.cos(theta) * e[0] + math.sin(theta) * e[1], e[5], e[3]])
        batch = ContrastiveBatch(
            Z=[ops.constant(z0), ops.constant(z1)], Y=np.array([[1, 1, 0], [1, 0, 1]]), taxonomy=shallow_taxonomy
        )
        return hilecon(batch, TAU, ctx).item()

    values = [loss(theta) for theta in (1.5, 1.0, 0.5, 0.0)]
    assert all(later < earlier for earlier, later in zip(values, values[1:]))


def test_depth_penalty_values():
    assert depth_penalty(3, 3) == pytest.approx(math.e)
    assert depth_penalty(2, 3) == pytest.approx(math.exp(0.5))
    assert depth_penalty(1, 3) == pytest.approx(math.exp(1 / 3))
    assert depth_penalty(3, 3, "clamped") == pytest.approx(math.e)
    assert depth_penalty(1, 3, "clamped") == pytest.approx(math.exp(0.5))
    penalties = [depth_penalty(level, 5) for level in range(1, 6)]
    assert penalties == sorted(penalties)
    with pytest.raises(ValueError):
        depth_penalty(1, 3, "printed")


def test_instance_loss_matches_brute_force(seven_labels, rng):
    batch = random_batch(seven_labels, [["A1a"], ["A1a"], ["B1"]], rng)
    assert instance_loss(batch, TAU, seven_labels).item() == pytest.approx(
        instance_oracle(batch, TAU, seven_labels), rel=1e-10
    )


@pytest.mark.parametrize("denominator", ["all", "strict"])
@pytest.mark.parametrize("rule", ["exact", "overlap"])
@pytest.mark.parametrize("penalty", ["shifted", "clamped"])
def test_instance_loss_variants_match_brute_force(seven_labels, rng, denominator, rule, penalty):
    golds = [["A1a", "B1"], ["A1a", "B1"], ["A1a"], ["A2", "B2"], ["A1"]]
    batch = random_batch(seven_labels, golds, rng)
    value = instance_loss(
        batch, TAU, seven_labels, penalty=penalty, denominator=denominator, positive_rule=rule
    ).item()
    expected = instance_oracle(batch, TAU, seven_labels, denominator=denominator, rule=rule, penalty=penalty)
    assert value == pytest.approx(expected, rel=1e-10)


def test_identical_pair_has_zero_instance_loss(shallow_taxonomy):
    z = np.array([[1.0, 2.0], [0.5, -1.0], [0.0, 1.0]])
    batch = ContrastiveBatch(
        Z=[ops.constant(z), ops.constant(z.copy())], Y=np.array([[1, 1, 0], [1, 1, 0]]), taxonomy=shallow_taxonomy
    )
    assert instance_loss(batch, TAU, shallow_taxonomy).item() == pytest.approx(0.0, abs=1e-12)


def test_samples_missing_from_a_level_are_reported(shallow_taxonomy, rng, caplog):
    batch = random_batch(shallow_taxonomy, [["A"], ["A"], []], rng)
    with caplog.at_level("WARNING"):
        value = instance_loss(batch, TAU, shallow_taxonomy).item()
    assert "no gold labels at depth <= 1" in caplog.text
    assert value == pytest.approx(instance_oracle(batch, TAU, shallow_taxonomy), rel=1e-10)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_losses_are_invariant_to_sample_order(seven_labels, seed):
    rng = np.random.default_rng(seed)
    golds = [["A1a", "B1"], ["A1a"], ["A2", "B2"], ["B1"], ["A1a", "A2"]]
    batch = random_batch(seven_labels, golds, rng)
    order = rng.permutation(len(golds))
    shuffled = ContrastiveBatch(Z=[batch.Z[i] for i in order], Y=batch.Y[order], taxonomy=seven_labels)
    ctx = MetricContext(seven_labels)
    for loss in (
        lambda b: supcon(b, TAU),
        lambda b: hilecon(b, TAU, ctx),
        lambda b: instance_loss(b, TAU, seven_labels),
    ):
        assert loss(shuffled).item() == pytest.approx(loss(batch).item(), abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_losses_are_finite_and_non_negative(seven_labels, seed):
    rng = np.random.default_rng(seed)
    golds = [list(rng.choice(seven_labels.labels, size=2, replace=False)) for _ in range(4)]
    batch = random_batch(seven_labels, golds, rng)
    ctx = MetricContext(seven_labels)
    values = [
        supcon(batch, TAU).item(),
        hilecon(batch, TAU, ctx).item(),
        instance_loss(batch, TAU, seven_labels).item(),
    ]
    values += [zlpr(ops.constant(rng.normal(size=(7, 1))), y).item() for y in batch.Y]
    assert all(np.isfinite(v) and v >= 0 for v in values)


@pytest.mark.parametrize("component", ["supcon", "hilecon", "lecon", "instance", "strict_instance"])
def test_contrastive_gradients_pass_finite_differences(seven_labels, rng, component):
    batch = random_batch(seven_labels, FOUR_GOLDS, rng, leaves=True, scale=0.3)
    ctx = MetricContext(seven_labels)
    objectives = {
        "supcon": lambda: supcon(batch, TAU),
        "hilecon": lambda: hilecon(batch, TAU, ctx),
        "lecon": lambda: hilecon(batch, TAU, ctx, mode="lecon"),
        "instance": lambda: instance_loss(batch, TAU, seven_labels),
        "strict_instance": lambda: instance_loss(batch, TAU, seven_labels, denominator="strict"),
    }
    params = {z.name: z for z in batch.Z}
    result = grad_check(objectives[component], params, name=component)
    assert result.passed, result


def test_zlpr_spot_values():
    assert zlpr(ops.constant([[0.0]]), [1]).item() == pytest.approx(math.log(2), abs=1e-12)
    assert zlpr(ops.constant([[10.0], [-10.0]]), [1, 0]).item() == pytest.approx(
        2 * math.log1p(math.exp(-10)), abs=1e-12
    )


def test_zlpr_matches_its_definition(rng):
    for _ in range(10):
        s = rng.normal(scale=3.0, size=6)
        gold = (rng.random(6) < 0.5).astype(int)
        assert zlpr(ops.constant(s.reshape(6, 1)), gold).item() == pytest.approx(zlpr_oracle(s, gold), rel=1e-12)


def test_zlpr_rejects_bad_logits():
    with pytest.raises(NumericError):
        zlpr(ops.constant([[np.inf], [0.0]]), [1, 0])
    with pytest.raises(ShapeError):
        zlpr(ops.constant([[0.0], [1.0]]), [1, 0, 0])


def test_bce_spot_values(rng):
    assert bce(ops.constant([[0.0], [0.0]]), [1, 0]).item() == pytest.approx(math.log(2), abs=1e-12)
    s = rng.normal(size=5)
    gold = np.array([1, 0, 1, 1, 0])
    expected = np.mean([math.log1p(math.exp(-v)) if g else math.log1p(math.exp(v)) for v, g in zip(s, gold)])
    assert bce(ops.constant(s.reshape(5, 1)), gold).item() == pytest.approx(expected, rel=1e-12)


def test_classification_gradients_pass_finite_differences(rng):
    S = Tensor(rng.normal(size=(6, 1)), requires_grad=True, name="S")
    gold = [1, 0, 1, 0, 0, 1]
    assert grad_check(lambda: zlpr(S, gold), {"S": S}).passed
    assert grad_check(lambda: bce(S, gold), {"S": S}).passed


def _logits(batch, rng):
    return [Tensor(rng.normal(size=(batch.taxonomy.n, 1)), requires_grad=True, name=f"s{i}") for i in range(batch.size)]


def test_zero_weights_reduce_to_mean_zlpr_exactly(seven_labels, rng):
    batch = random_batch(seven_labels, GOLDS, rng)
    S = _logits(batch, rng)
    weights = LossWeights(lambda1=0.0, lambda2=0.0)
    total, breakdown = total_loss(batch, S, batch.Y, weights, MetricContext(seven_labels), seven_labels)
    mean_zlpr = ops.scale(ops.sum_scalars([zlpr(s, y) for s, y in zip(S, batch.Y)]), 1.0 / batch.size)
    assert total.item() == mean_zlpr.item()
    assert breakdown.instance == 0.0 and breakdown.hilecon == 0.0
    assert breakdown.total == breakdown.classification


def test_large_margin_logits_drive_the_plain_objective_to_zero(seven_labels, rng):
    batch = random_batch(seven_labels, GOLDS, rng)
    S = [ops.constant(np.where(y == 1, 40.0, -40.0).reshape(-1, 1)) for y in batch.Y]
    weights = LossWeights(lambda1=0, lambda2=0)
    total, _ = total_loss(batch, S, batch.Y, weights, MetricContext(seven_labels), seven_labels)
    assert total.item() < 1e-15


def test_default_objective_is_the_weighted_sum_of_its_parts(seven_labels, rng):
    batch = random_batch(seven_labels, FOUR_GOLDS, rng, leaves=True, scale=0.3)
    S = _logits(batch, rng)
    ctx = MetricContext(seven_labels)
    weights = LossWeights()
    total, breakdown = total_loss(batch, S, batch.Y, weights, ctx, seven_labels)

    classification = np.mean([zlpr_oracle(s.data.ravel(), y) for s, y in zip(S, batch.Y)])
    inst = instance_oracle(batch, weights.tau, seven_labels)
    label = hilecon_oracle(batch, weights.tau, lambda a, b: rho(ctx, a, b), ctx.C)
    assert breakdown.classification == pytest.approx(classification, rel=1e-10)
    assert breakdown.instance == pytest.approx(inst, rel=1e-10)
    assert breakdown.hilecon == pytest.approx(label, rel=1e-10)
    assert total.item() == pytest.approx(classification + 0.1 * inst + 0.5 * label, rel=1e-10)

    params = {t.name: t for t in batch.Z + S}
    result = grad_check(lambda: total_loss(batch, S, batch.Y, weights, ctx, seven_labels)[0], params, name="total")
    assert result.passed, result


def test_bce_switch(seven_labels, rng):
    batch = random_batch(seven_labels, GOLDS, rng)
    S = _logits(batch, rng)
    weights = LossWeights(lambda1=0, lambda2=0, classification_loss="bce")
    _, breakdown = total_loss(batch, S, batch.Y, weights, MetricContext(seven_labels), seven_labels)
    assert breakdown.classification == pytest.approx(np.mean([bce(s, y).item() for s, y in zip(S, batch.Y)]))


def test_batch_shapes_are_checked(seven_labels, rng):
    with pytest.raises(ShapeError):
        ContrastiveBatch(Z=[ops.constant(np.zeros((7, 3)))], Y=np.zeros((2, 7)), taxonomy=seven_labels)
    batch = random_batch(seven_labels, GOLDS, rng)
    with pytest.raises(ShapeError):
        total_loss(batch, _logits(batch, rng)[:2], batch.Y, LossWeights(), MetricContext(seven_labels), seven_labels)
