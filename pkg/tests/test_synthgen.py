import filecmp
import random

import numpy as np
import pytest

from laser.checker import check_bool, violation_score
from laser.errors import InvalidConfig
from laser.spec_lang import Until
from laser.synthgen import (
    BN20,
    MUGEN,
    TEMPLATES,
    GenConfig,
    bn20_episode,
    bn20_layout,
    constraints_for,
    gen_20bn_like,
    gen_mugen_like,
    generate,
    load_dataset,
    mugen_episode,
    mugen_layout,
    save_dataset,
)


def test_mugen_example_episode():
    layout = mugen_layout(6)
    plan = [(("jump", "down"), (1, 2)), (("collect", "up"), (3, 6))]
    ep = mugen_episode(layout, plan, np.random.default_rng(0), sigma=0.0)
    assert isinstance(ep.spec.body, Until)
    assert str(ep.spec) == "(jump(M,down))@act_1 U (collect(M,up))@act_2"
    assert check_bool(ep.ground_truth, ep.spec)
    assert ep.witness_truth == {"act_1": 1, "act_2": 3}


def test_mugen_rejects_gaps():
    layout = mugen_layout(4)
    with pytest.raises(InvalidConfig):
        mugen_episode(layout, [(("walk", "left"), (1, 2))], np.random.default_rng(0), 0.0)


def test_sigma_zero_gives_one_hots():
    eps = gen_mugen_like(GenConfig(regime=MUGEN, feature_noise_sigma=0.0, num_episodes=5))
    for ep in eps:
        assert set(np.unique(ep.features)) <= {0.0, 1.0}
        assert np.all(ep.features.sum(axis=1) == 1.0)
        truth = np.asarray(ep.ground_truth.probs)
        ids = ep.layout.fact_ids["action"][:, 0, :]
        assert np.array_equal(truth[ids], ep.features)


def test_mugen_one_valid_action_per_clip():
    cfg = GenConfig(regime=MUGEN, num_episodes=50, seed=3)
    for ep in generate(cfg):
        truth = np.asarray(ep.ground_truth.probs)[ep.layout.fact_ids["action"][:, 0, :]]
        assert np.all(truth.sum(axis=1) == 1)
        for spec, _ in constraints_for(cfg):
            assert violation_score(ep.ground_truth, spec) == 0.0


def test_bn20_push_template_full_span():
    layout = bn20_layout(8)
    push = TEMPLATES[0]
    binding = {"v1": "e0", "v2": "e1", "v3": "e2"}
    ep = bn20_episode(layout, push, binding, 1, 8, np.random.default_rng(0), 0.0)
    assert check_bool(ep.ground_truth, ep.spec)
    assert ep.witness_truth == {"pre": 1, "post": 8}


@pytest.mark.parametrize("template", TEMPLATES, ids=[t.name for t in TEMPLATES])
def test_bn20_minimal_gap_satisfiable(template):
    layout = bn20_layout(8)
    binding = {f"v{i}": f"e{i - 1}" for i in range(1, template.arity + 1)}
    ep = bn20_episode(layout, template, binding, 4, 5, np.random.default_rng(0), 0.0)
    assert check_bool(ep.ground_truth, ep.spec)


def test_bn20_too_few_entities():
    with pytest.raises(InvalidConfig):
        gen_20bn_like(GenConfig(regime=BN20, num_entities=2))


def test_bn20_default_noise():
    assert GenConfig(regime=BN20).feature_noise_sigma == 0.25
    assert GenConfig(regime=MUGEN).feature_noise_sigma == 0.5


def test_config_validation():
    with pytest.raises(InvalidConfig):
        GenConfig(regime="other")
    with pytest.raises(InvalidConfig):
        GenConfig(m=0)
    with pytest.raises(InvalidConfig):
        GenConfig(feature_noise_sigma=-1.0)
    with pytest.raises(InvalidConfig):
        gen_mugen_like(GenConfig(regime=MUGEN, feature_dim=3))


@pytest.mark.parametrize("regime", [MUGEN, BN20])
def test_every_truth_satisfies_its_spec_and_constraints(regime):
    cfg = GenConfig(regime=regime, num_episodes=60, seed=5)
    cons = constraints_for(cfg)
    for ep in generate(cfg):
        assert check_bool(ep.ground_truth, ep.spec)
        assert ep.features.shape == (cfg.m, ep.layout.feature_dim)
        for spec, _ in cons:
            assert violation_score(ep.ground_truth, spec) == 0.0


@pytest.mark.parametrize("regime", [MUGEN, BN20])
def test_cross_pairs_are_discriminative(regime):
    eps = generate(GenConfig(regime=regime, num_episodes=100, seed=9))
    rng = random.Random(0)
    fails = total = 0
    while total < 300:
        a, b = rng.sample(eps, 2)
        if a.spec.key == b.spec.key:
            continue
        total += 1
        fails += not check_bool(a.ground_truth, b.spec)
    assert fails / total >= 0.8


def test_generation_is_counter_based():
    full = generate(GenConfig(regime=BN20, num_episodes=6, seed=2))
    tail = generate(GenConfig(regime=BN20, num_episodes=3, seed=2, first_episode=3))
    for a, b in zip(full[3:], tail):
        assert a.to_json() == b.to_json()


def test_dataset_round_trip_and_determinism(tmp_path):
    cfg = GenConfig(regime=BN20, num_episodes=4, seed=1)
    save_dataset(tmp_path / "a", cfg, generate(cfg))
    save_dataset(tmp_path / "b", cfg, generate(cfg))
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.subdirs["episodes"].diff_files
    cfg2, eps = load_dataset(tmp_path / "a")
    assert cfg2 == cfg
    orig = generate(cfg)
    for a, b in zip(orig, eps):
        assert a.to_json() == b.to_json()
        assert b.layout is not None
