import json

import numpy as np
import pytest

from cbcoreset import errors
from cbcoreset.bottleneck import (
    Bottleneck,
    ConceptCatalog,
    assemble_bottleneck,
    canonicalize,
    select_discriminative,
)


def catalog(mapping):
    return ConceptCatalog.from_mapping(mapping)


def test_shared_attribute_excluded():
    cat = catalog({"cat": ["whiskers", "fur", "meows"], "dog": ["fur", "barks"]})
    b = select_discriminative(cat, k=2)
    assert b.selected == (("cat", "whiskers"), ("dog", "barks"))


def test_k1_keeps_only_class_names():
    cat = catalog({"cat": ["whiskers"], "dog": ["barks"]})
    b = select_discriminative(cat, k=1)
    assert b.selected == (("cat",), ("dog",))


def test_all_attributes_shared_gives_short_list_and_warning():
    cat = catalog({"cat": ["fur", "tail"], "dog": ["fur", "tail"]})
    b = select_discriminative(cat, k=3)
    assert b.selected == (("cat",), ("dog",))
    assert len(b.warnings) == 2


def test_invalid_k():
    with pytest.raises(errors.InvalidK):
        select_discriminative(catalog({"cat": ["fur"]}), k=0)


def test_empty_catalog():
    with pytest.raises(errors.EmptyCatalog):
        ConceptCatalog(classes=(), per_class_concepts=())


def test_catalog_canonicalizes_and_dedupes():
    cat = catalog({"Cat": ["  Whiskers.", "whiskers", "FUR "]})
    assert cat.classes == ("cat",)
    assert cat.per_class_concepts == (("whiskers", "fur"),)
    assert canonicalize(" Sharp Claws! ") == "sharp claws"


def test_attribute_colliding_with_class_name_is_skipped():
    # "cat" appears only under dog's attributes, but using it would place
    # the same string under two classes in the flattened bottleneck
    cat = catalog({"cat": ["whiskers"], "dog": ["cat", "barks"]})
    b = select_discriminative(cat, k=2)
    assert b.selected == (("cat", "whiskers"), ("dog", "barks"))


def test_determinism_same_inputs_same_bytes():
    mapping = {"cat": ["whiskers", "meows"], "dog": ["barks", "fetch"]}
    a = select_discriminative(catalog(mapping), k=3).to_json()
    b = select_discriminative(catalog(mapping), k=3).to_json()
    assert a == b


def test_class_permutation_permutes_blocks_but_not_sets():
    m1 = {"cat": ["whiskers", "meows"], "dog": ["barks"]}
    m2 = {"dog": ["barks"], "cat": ["whiskers", "meows"]}
    b1 = select_discriminative(catalog(m1), k=3)
    b2 = select_discriminative(catalog(m2), k=3)
    assert dict(zip(b1.classes, b1.selected)) == dict(zip(b2.classes, b2.selected))
    assert b1.classes != b2.classes


def embeddings_for(bneck, d=8, seed=0):
    rng = np.random.default_rng(seed)
    return {c: rng.standard_normal(d) for c in bneck.flattened()}


def test_assemble_shapes_and_order():
    cat = catalog({"cat": ["whiskers"], "dog": ["barks"]})
    b = select_discriminative(cat, k=2)
    emb = embeddings_for(b, d=8)
    full = assemble_bottleneck(b, emb, normalize=False)
    assert full.ec.rows == 4 and full.ec.cols == 8
    np.testing.assert_allclose(
        full.ec.data[2], emb["dog"].astype(np.float32), rtol=1e-6
    )


def test_assemble_normalizes_rows():
    cat = catalog({"cat": ["whiskers"], "dog": ["barks"]})
    b = select_discriminative(cat, k=2)
    full = assemble_bottleneck(b, embeddings_for(b))
    norms = np.linalg.norm(full.ec.data.astype(np.float64), axis=1)
    assert np.all(np.abs(norms - 1.0) <= 1e-5)
    assert full.ec.normalized


def test_assemble_missing_embedding_lists_names():
    cat = catalog({"cat": ["whiskers"], "dog": ["barks"]})
    b = select_discriminative(cat, k=2)
    emb = embeddings_for(b)
    del emb["barks"], emb["dog"]
    with pytest.raises(errors.MissingConceptEmbedding) as info:
        assemble_bottleneck(b, emb)
    assert set(info.value.concepts) == {"barks", "dog"}


def test_assemble_rejects_mixed_dims():
    cat = catalog({"cat": [], "dog": []})
    b = select_discriminative(cat, k=1)
    emb = {"cat": np.ones(4), "dog": np.ones(5)}
    with pytest.raises(errors.InvalidSpec):
        assemble_bottleneck(b, emb)


def test_bottleneck_json_round_trip(tmp_path):
    cat = catalog({"cat": ["whiskers"], "dog": ["barks"]})
    b = select_discriminative(cat, k=2)
    path = tmp_path / "b.json"
    path.write_text(b.to_json())
    back = Bottleneck.from_json_file(path)
    assert back.selected == b.selected and back.k == b.k


def test_no_attribute_under_two_classes_invariant():
    rng = np.random.default_rng(1)
    vocab = [f"attr{i}" for i in range(30)]
    mapping = {
        f"class{c}": [vocab[rng.integers(len(vocab))] for _ in range(10)] for c in range(6)
    }
    b = select_discriminative(ConceptCatalog.from_mapping(mapping), k=4)
    attrs = [a for group in b.selected for a in group[1:]]
    assert len(set(attrs)) == len(attrs)
    for cls_name, group in zip(b.classes, b.selected):
        for a in group[1:]:
            owners = [
                cn
                for cn, concepts in zip(b.classes, ConceptCatalog.from_mapping(mapping).per_class_concepts)
                if a in concepts
            ]
            assert owners == [cls_name]
