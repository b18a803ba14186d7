from __future__ import annotations

import dataclasses
import random

import pytest

from kforge.errors import DuplicateImageId, MalformedOutput
from kforge.gateway import mock_gateway
from kforge.pairing import (PairCandidate, PairVerdict,
                            build_index, candidate_from_obj, candidate_to_obj,
                            filter_pair, propose_pairs, read_candidates,
                            select_pairs, verdict_from_obj, verdict_to_obj,
                            write_candidates)

from conftest import make_descriptor, random_descriptors, replay_gateway
from oracles import oracle_propose_pairs


def _as_oracle_shape(candidates):
    return sorted((c.left_id, c.right_id, c.alignment_level, c.shared_concepts,
                   c.differing_keys, c.contrast_score) for c in candidates)


# --- index ---------------------------------------------------------------------

def test_build_index_buckets_sorted():
    ds = [
        make_descriptor("b", "reef", "geography"),
        make_descriptor("a", "reef", "geography"),
        make_descriptor("c", "glacier", "geography"),
    ]
    index = build_index(ds)
    assert index.by_subcategory["reef"] == ["a", "b"]
    assert index.by_domain["geography"] == ["a", "b", "c"]
    assert set(index.descriptors) == {"a", "b", "c"}


def test_build_index_empty():
    index = build_index([])
    assert index.by_subcategory == {} and index.by_domain == {}


def test_build_index_duplicate_id():
    ds = [make_descriptor("a", "reef", "geo"), make_descriptor("a", "reef", "geo")]
    with pytest.raises(DuplicateImageId):
        build_index(ds)


# --- proposal -------------------------------------------------------------------

def test_contrast_score_hand_example():
    # distinguishing sets {a,b} vs {b,c}: differing {a,c}, union {a,b,c} -> 2/3
    ds = [
        make_descriptor("x", "reef", "geo", concepts=("depth",), keys=("a", "b")),
        make_descriptor("y", "reef", "geo", concepts=("depth",), keys=("b", "c")),
    ]
    out = propose_pairs(build_index(ds), max_per_image=None, min_contrast=0.0)
    assert len(out) == 1
    c = out[0]
    assert c.differing_keys == ("a", "c")
    assert c.contrast_score == pytest.approx(2 / 3)
    assert c.alignment_level == "subcategory"


def test_identical_key_sets_no_candidate():
    ds = [
        make_descriptor("x", "reef", "geo", keys=("a", "b")),
        make_descriptor("y", "reef", "geo", keys=("a", "b")),
    ]
    assert propose_pairs(build_index(ds), None, 0.0) == []


def test_domain_fallback_only_for_subcategory_singletons():
    ds = [
        make_descriptor("a", "reef", "geo", concepts=("depth",), keys=("k1",)),
        make_descriptor("b", "reef", "geo", concepts=("depth",), keys=("k2",)),
        make_descriptor("c", "glacier", "geo", concepts=("depth",), keys=("k3",)),
        make_descriptor("d", "bakery", "geo", concepts=("depth",), keys=("k4",)),
    ]
    out = propose_pairs(build_index(ds), None, 0.0)
    pairs = {(c.left_id, c.right_id): c.alignment_level for c in out}
    assert pairs[("a", "b")] == "subcategory"
    assert pairs[("c", "d")] == "domain"
    # a and b have subcategory partners, so no domain pairs against c or d
    assert ("a", "c") not in pairs and ("b", "d") not in pairs


def test_domain_pair_requires_shared_concepts():
    ds = [
        make_descriptor("c", "glacier", "geo", concepts=("depth",), keys=("k3",)),
        make_descriptor("d", "bakery", "geo", concepts=("trade",), keys=("k4",)),
    ]
    assert propose_pairs(build_index(ds), None, 0.0) == []


def test_min_contrast_threshold():
    ds = [
        make_descriptor("x", "reef", "geo", keys=("a", "b", "c")),
        make_descriptor("y", "reef", "geo", keys=("a", "b", "d")),
    ]
    # differing {c,d} over union of 4 -> 0.5
    assert len(propose_pairs(build_index(ds), None, 0.5)) == 1
    assert propose_pairs(build_index(ds), None, 0.51) == []


def test_max_per_image_cap():
    ds = [make_descriptor(f"i{k}", "reef", "geo", concepts=("depth",),
                          keys=(f"k{k}", f"k{k+1}")) for k in range(6)]
    out = propose_pairs(build_index(ds), max_per_image=2, min_contrast=0.0)
    load: dict[str, int] = {}
    for c in out:
        load[c.left_id] = load.get(c.left_id, 0) + 1
        load[c.right_id] = load.get(c.right_id, 0) + 1
    assert max(load.values()) <= 2


def test_output_sorted_and_unique():
    rng = random.Random(21)
    ds = random_descriptors(rng, 20)
    out = propose_pairs(build_index(ds), None, 0.0)
    ids = [(c.left_id, c.right_id) for c in out]
    assert ids == sorted(ids)
    assert len(ids) == len(set(ids))
    assert all(left < right for left, right in ids)


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_oracle_equivalence_on_random_sets(seed):
    rng = random.Random(seed)
    ds = random_descriptors(rng, rng.randint(5, 25))
    out = propose_pairs(build_index(ds), max_per_image=None, min_contrast=0.0)
    assert _as_oracle_shape(out) == oracle_propose_pairs(ds)


def test_oracle_equivalence_with_min_contrast():
    rng = random.Random(77)
    ds = random_descriptors(rng, 22)
    out = propose_pairs(build_index(ds), max_per_image=None, min_contrast=0.4)
    assert _as_oracle_shape(out) == oracle_propose_pairs(ds, min_contrast=0.4)


def test_low_value_surface_info_never_influences_pairing():
    rng = random.Random(13)
    ds = random_descriptors(rng, 15)
    mutated = [dataclasses.replace(d, low_value_surface_information=("x", "y", "z"))
               for d in ds]
    assert (_as_oracle_shape(propose_pairs(build_index(ds), 2, 0.25))
            == _as_oracle_shape(propose_pairs(build_index(mutated), 2, 0.25)))


# --- filter ---------------------------------------------------------------------

def _candidate():
    return PairCandidate("a", "b", "subcategory", ("depth",), ("k1", "k2"), 0.5)


def _descs():
    return (make_descriptor("a", "reef", "geo", concepts=("depth",), keys=("k1",)),
            make_descriptor("b", "reef", "geo", concepts=("depth",), keys=("k2",)))


def test_filter_pair_mock_deterministic():
    gw = mock_gateway()
    left, right = _descs()
    v1 = filter_pair(_candidate(), left, right, gw)
    v2 = filter_pair(_candidate(), left, right, gw)
    assert v1 == v2
    assert v1.rationale


def test_filter_pair_mock_verdict_follows_digest_parity():
    import hashlib

    from kforge.prompts import REGISTRY, render_prompt

    gw = mock_gateway()
    left, right = _descs()
    verdict = filter_pair(_candidate(), left, right, gw)
    prompt = render_prompt(REGISTRY["pair_filter"],
                           {"left": f"{left.image_id}: {left.summary()}",
                            "right": f"{right.image_id}: {right.summary()}"})
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    assert verdict.passed == (digest[0] % 2 == 0)


def test_filter_pair_fail_parsing():
    gw = replay_gateway(["FAIL: relationship is incidental"])
    left, right = _descs()
    v = filter_pair(_candidate(), left, right, gw)
    assert v.passed is False
    assert v.rationale == "relationship is incidental"


def test_filter_pair_malformed_after_reask():
    gw = replay_gateway(["maybe", "maybe"])
    left, right = _descs()
    with pytest.raises(MalformedOutput):
        filter_pair(_candidate(), left, right, gw)


def test_filter_pair_recovers_on_reask():
    gw = replay_gateway(["hmm let me think", "PASS: same theme, distinct details"])
    left, right = _descs()
    v = filter_pair(_candidate(), left, right, gw)
    assert v.passed is True


# --- selection -------------------------------------------------------------------

def test_select_pairs_keeps_passing_in_order():
    c1, c2, c3 = (_candidate(),
                  PairCandidate("c", "d", "domain", ("depth",), ("k",), 1.0),
                  PairCandidate("e", "f", "subcategory", (), ("k",), 1.0))
    verdicts = [PairVerdict(c1, True, "r"), PairVerdict(c2, False, "r"),
                PairVerdict(c3, True, "r")]
    assert select_pairs(verdicts) == [c1, c3]


def test_select_pairs_all_fail():
    assert select_pairs([PairVerdict(_candidate(), False, "r")]) == []


def test_select_pairs_dedupes():
    v = PairVerdict(_candidate(), True, "r")
    assert select_pairs([v, v]) == [_candidate()]


# --- persistence ------------------------------------------------------------------

def test_candidate_roundtrip(tmp_path):
    rng = random.Random(5)
    ds = random_descriptors(rng, 12)
    out = propose_pairs(build_index(ds), 2, 0.0)
    path = tmp_path / "c.jsonl"
    write_candidates(out, path)
    assert list(read_candidates(path)) == out


def test_verdict_obj_roundtrip():
    v = PairVerdict(_candidate(), True, "fine")
    assert verdict_from_obj(verdict_to_obj(v)) == v
    assert candidate_from_obj(candidate_to_obj(_candidate())) == _candidate()
