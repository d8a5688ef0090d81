import numpy as np
import pytest

from kgesub.checkpoint import (
    CheckpointMismatchError,
    export_tsv,
    load_model,
    save_model,
    verify_vocab,
)
from kgesub.data import Direction, Query, Triple
from kgesub.models import (
    MODEL_KINDS,
    EmbeddingStore,
    ModelConfig,
    build_model,
    default_init_range,
    model_from_store,
)

from conftest import make_dataset

ALL_KINDS = sorted(MODEL_KINDS)


def build(kind, n_e=7, n_r=3, dim=8, seed=0, **kw):
    return build_model(kind, n_e, n_r, dim, seed=seed, init_range=0.5, **kw)


def finite_difference_gradient(model, triple, eps=1e-5):
    """Central differences over the three involved embedding rows."""

    def perturbed(table, row, j, delta):
        matrix = getattr(model.store, table)
        old = matrix[row, j]
        matrix[row, j] = old + delta
        s = model.score(triple)
        matrix[row, j] = old
        return s

    out = []
    for table, row in (
        ("entity", triple.head),
        ("relation", triple.relation),
        ("entity", triple.tail),
    ):
        width = getattr(model.store, table).shape[1]
        g = np.empty(width)
        for j in range(width):
            g[j] = (perturbed(table, row, j, eps) - perturbed(table, row, j, -eps)) / (2 * eps)
        out.append(g)
    return out


def relative_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return np.linalg.norm(a - b) / scale


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(42)
    model = build(kind)
    for _ in range(25):
        model.store.entity[:] = rng.uniform(-0.5, 0.5, model.store.entity.shape)
        model.store.relation[:] = rng.uniform(-0.5, 0.5, model.store.relation.shape)
        h, t = rng.choice(model.n_entities, size=2, replace=False)
        triple = Triple(int(h), int(rng.integers(model.n_relations)), int(t))
        analytic = model.score_gradient(triple)
        numeric = finite_difference_gradient(model, triple)
        for a, n in zip(analytic, numeric):
            assert relative_error(a, n) <= 1e-4


def test_transe_l1_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    model = build("transe", norm=1)
    for _ in range(25):
        model.store.entity[:] = rng.uniform(-0.5, 0.5, model.store.entity.shape)
        model.store.relation[:] = rng.uniform(-0.5, 0.5, model.store.relation.shape)
        h, t = rng.choice(model.n_entities, size=2, replace=False)
        triple = Triple(int(h), int(rng.integers(model.n_relations)), int(t))
        analytic = model.score_gradient(triple)
        numeric = finite_difference_gradient(model, triple)
        for a, n in zip(analytic, numeric):
            assert relative_error(a, n) <= 1e-4


def test_self_loop_gradient_adds_head_and_tail_parts():
    rng = np.random.default_rng(8)
    for kind in ALL_KINDS:
        model = build(kind)
        model.store.entity[:] = rng.uniform(-0.5, 0.5, model.store.entity.shape)
        model.store.relation[:] = rng.uniform(-0.5, 0.5, model.store.relation.shape)
        triple = Triple(2, 0, 2)
        analytic = model.score_gradient(triple)
        numeric = finite_difference_gradient(model, triple)
        # perturbing the shared row moves both slots at once
        assert relative_error(analytic.head + analytic.tail, numeric[0]) <= 1e-4


def test_transe_zero_vectors_score_zero():
    model = build("transe")
    model.store.entity[:] = 0.0
    model.store.relation[:] = 0.0
    assert model.score(Triple(0, 0, 1)) == 0.0
    # zero is the maximum: any other configuration scores <= 0
    rng = np.random.default_rng(0)
    model.store.entity[:] = rng.normal(size=model.store.entity.shape)
    assert model.score(Triple(0, 0, 1)) <= 0.0


def test_transe_exact_translation_has_zero_gradient():
    model = build("transe")
    model.store.entity[0] = 0.25
    model.store.relation[0] = 0.5
    model.store.entity[1] = 0.75  # h + r == t
    g = model.score_gradient(Triple(0, 0, 1))
    assert np.all(g.head == 0.0) and np.all(g.relation == 0.0) and np.all(g.tail == 0.0)


def test_transe_l1_subgradient_zero_at_kinks():
    model = build("transe", norm=1)
    model.store.entity[:] = 0.0
    model.store.relation[:] = 0.0
    g = model.score_gradient(Triple(0, 0, 1))
    assert np.all(g.head == 0.0)


def test_distmult_unit_basis():
    model = build("distmult")
    model.store.entity[:] = 0.0
    model.store.relation[:] = 0.0
    model.store.entity[0, 0] = 1.0
    model.store.entity[1, 0] = 1.0
    model.store.relation[0, 0] = 1.0
    assert model.score(Triple(0, 0, 1)) == 1.0


def test_distmult_gradient_is_bilinear():
    model = build("distmult")
    rng = np.random.default_rng(1)
    model.store.entity[:] = rng.normal(size=model.store.entity.shape)
    model.store.relation[:] = rng.normal(size=model.store.relation.shape)
    g = model.score_gradient(Triple(0, 0, 1))
    h, r, t = model.store.entity[0], model.store.relation[0], model.store.entity[1]
    np.testing.assert_array_equal(g.head, r * t)
    np.testing.assert_array_equal(g.relation, h * t)
    np.testing.assert_array_equal(g.tail, h * r)


def naive_complex_score(h, r, t):
    """Independent oracle using Python complex arithmetic."""
    k = len(h) // 2
    total = 0.0
    for j in range(k):
        hc = complex(h[j], h[k + j])
        rc = complex(r[j], r[k + j])
        tc = complex(t[j], t[k + j])
        total += (hc * rc * tc.conjugate()).real
    return total


def test_complex_identity_rotation():
    model = build("complex", dim=8)
    rng = np.random.default_rng(2)
    model.store.entity[:] = rng.normal(size=model.store.entity.shape)
    model.store.relation[0, :] = 0.0
    model.store.relation[0, :4] = 1.0  # 1 + 0i in every pair
    model.store.entity[1] = model.store.entity[0]
    h = model.store.entity[0]
    score = model.score(Triple(0, 0, 1))
    assert abs(score - np.dot(h, h)) < 1e-12
    assert abs(score - naive_complex_score(h, model.store.relation[0], h)) < 1e-12


def test_complex_against_naive_oracle():
    model = build("complex", dim=10)
    rng = np.random.default_rng(4)
    model.store.entity[:] = rng.normal(size=model.store.entity.shape)
    model.store.relation[:] = rng.normal(size=model.store.relation.shape)
    for _ in range(20):
        h, r, t = rng.integers(model.n_entities), rng.integers(model.n_relations), rng.integers(model.n_entities)
        triple = Triple(int(h), int(r), int(t))
        expected = naive_complex_score(
            model.store.entity[triple.head],
            model.store.relation[triple.relation],
            model.store.entity[triple.tail],
        )
        assert abs(model.score(triple) - expected) < 1e-10


def test_rotate_rotation_is_unit_modulus():
    # scoring against a zero tail gives -sum |h_j| independently of the phases
    model = build("rotate", dim=8)
    rng = np.random.default_rng(5)
    model.store.entity[:] = rng.normal(size=model.store.entity.shape)
    model.store.entity[1] = 0.0
    model.store.relation[0] = rng.normal(size=4) * 1000.0  # wild raw parameters
    model.store.relation[1] = 0.0
    s0 = model.score(Triple(0, 0, 1))
    s1 = model.score(Triple(0, 1, 1))
    hre, him = model.store.entity[0][:4], model.store.entity[0][4:]
    expected = -np.hypot(hre, him).sum()
    assert abs(s0 - expected) < 1e-12
    assert abs(s1 - expected) < 1e-12


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("direction", [Direction.TAIL, Direction.HEAD])
def test_score_candidates_agrees_with_scalar_loop(kind, direction):
    model = build(kind, n_e=9, dim=8)
    rng = np.random.default_rng(6)
    model.store.entity[:] = rng.normal(size=model.store.entity.shape)
    model.store.relation[:] = rng.normal(size=model.store.relation.shape)
    query = Query(direction, 3, 1)
    vec = model.score_candidates(query)
    assert vec.shape == (model.n_entities,)
    for c in range(model.n_entities):
        triple = Triple(query.anchor, 1, c) if direction == Direction.TAIL else Triple(c, 1, query.anchor)
        assert abs(vec[c] - model.score(triple)) <= 1e-9
    assert int(np.argmax(vec)) == int(
        np.argmax([
            model.score(Triple(query.anchor, 1, c) if direction == Direction.TAIL else Triple(c, 1, query.anchor))
            for c in range(model.n_entities)
        ])
    )
    # candidate subsets slice the same scores
    subset = np.array([0, 4, 7])
    np.testing.assert_allclose(model.score_candidates(query, subset), vec[subset], atol=1e-9)


def test_score_candidates_single_entity():
    model = build_model("distmult", 1, 1, 4, init_range=0.1)
    vec = model.score_candidates(Query(Direction.TAIL, 0, 0))
    assert vec.shape == (1,)
    assert vec[0] == model.score(Triple(0, 0, 0))


def test_transe_zero_store_constant_candidates():
    model = build("transe")
    model.store.entity[:] = 0.0
    model.store.relation[:] = 0.0
    vec = model.score_candidates(Query(Direction.TAIL, 0, 0))
    assert np.all(vec == 0.0)


def test_init_determinism_and_validation():
    a = build_model("complex", 5, 2, 6, seed=123, init_range=0.3)
    b = build_model("complex", 5, 2, 6, seed=123, init_range=0.3)
    np.testing.assert_array_equal(a.store.entity, b.store.entity)
    np.testing.assert_array_equal(a.store.relation, b.store.relation)
    c = build_model("complex", 5, 2, 6, seed=124, init_range=0.3)
    assert not np.array_equal(a.store.entity, c.store.entity)

    with pytest.raises(ValueError, match="positive"):
        build_model("transe", 5, 2, 0, init_range=0.3)
    with pytest.raises(ValueError, match="even"):
        build_model("rotate", 5, 2, 7, init_range=0.3)
    with pytest.raises(ValueError, match="even"):
        build_model("complex", 5, 2, 9, init_range=0.3)
    with pytest.raises(ValueError, match="unknown model kind"):
        build_model("rescal", 5, 2, 4, init_range=0.3)


def test_default_init_range():
    assert default_init_range(6.0, 100) == pytest.approx(0.08)
    m = build_model("transe", 3, 1, 4, seed=0, gamma=2.0)
    assert m.store.init_range == pytest.approx(1.0)
    assert np.abs(m.store.entity).max() <= 1.0


def test_rotate_relation_dim_is_half():
    model = build("rotate", dim=8)
    assert model.store.relation.shape[1] == 4
    assert model.store.entity.shape[1] == 8


def test_model_config_builds_constants():
    cfg = ModelConfig("transe", dim=6, norm=1)
    m = cfg.build(4, 2, seed=0, gamma=1.0)
    assert m.norm == 1
    cfg = ModelConfig("rotate", dim=6, phase_scale=0.25)
    m = cfg.build(4, 2, seed=0, gamma=1.0)
    assert m.phase_scale == 0.25
    with pytest.raises(ValueError):
        ModelConfig("rotate", dim=5)


def test_checkpoint_round_trip(tmp_path):
    ds = make_dataset([(0, 0, 1), (1, 0, 2)])
    model = build("rotate", n_e=3, n_r=1, dim=6)
    save_model(tmp_path / "ckpt", model, ds, config_echo={"note": "test"}, seed=9)
    loaded, manifest = load_model(tmp_path / "ckpt")
    assert loaded.kind == "rotate"
    assert loaded.phase_scale == model.phase_scale
    np.testing.assert_array_equal(loaded.store.entity, model.store.entity)
    np.testing.assert_array_equal(loaded.store.relation, model.store.relation)
    verify_vocab(manifest, ds)

    other = make_dataset([(0, 0, 1), (1, 0, 2), (2, 0, 3)])
    with pytest.raises(CheckpointMismatchError):
        verify_vocab(manifest, other)


def test_checkpoint_tsv_export(tmp_path):
    ds = make_dataset([(0, 0, 1)])
    model = build("distmult", n_e=2, n_r=1, dim=4)
    export_tsv(model, ds, tmp_path)
    lines = (tmp_path / "entity.tsv").read_text().splitlines()
    assert len(lines) == 2
    name, *values = lines[0].split("\t")
    assert name == "e0"
    np.testing.assert_allclose([float(v) for v in values], model.store.entity[0])


def test_store_copy_is_deep():
    model = build("transe")
    snapshot = model.store.copy()
    model.store.entity[0, 0] += 1.0
    assert snapshot.entity[0, 0] != model.store.entity[0, 0]


def test_model_from_store_rejects_unknown():
    store = EmbeddingStore(np.zeros((2, 4)), np.zeros((1, 4)), 0.1)
    with pytest.raises(ValueError):
        model_from_store("hake", store)
