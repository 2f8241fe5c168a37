import numpy as np
import pytest

from reference_pipeline import reference_run
from tmct.data_model import EngineConfig, FeasibilityScores
from tmct.engine import EngineState, apply_feasibility, process_sample, run_stream
from tmct.numerics import l2_normalize, softmax


def features_for(space, dim=8, n=50, seed=2):
    rng = np.random.default_rng(seed)
    return [l2_normalize(rng.normal(size=dim)) for _ in range(n)]


def test_first_prediction_is_frozen_baseline_bitwise(small_space, small_bank):
    state = EngineState(small_space, small_bank, EngineConfig(alpha=0.0, lr=0.01))
    f = features_for(small_space)[0]
    out = process_sample(state, f)
    expect = softmax(small_bank.proto @ f)
    ulp = np.spacing(np.abs(expect))
    assert np.all(np.abs(out.prediction.probs - expect) <= ulp)


def test_lr_zero_alpha_zero_identity_long_stream(small_space, small_bank):
    config = EngineConfig(lr=0.0, alpha=0.0)
    state = EngineState(small_space, small_bank, config)
    feats = features_for(small_space, n=200, seed=5)
    for f in feats:
        out = process_sample(state, f)
        expect = softmax(small_bank.proto @ f)
        ulp = np.spacing(np.abs(expect))
        assert np.all(np.abs(out.prediction.probs - expect) <= ulp)
    assert np.array_equal(state.kam.delta_t, np.zeros_like(state.kam.delta_t))


def test_rejected_when_queue_full_of_better(small_space, small_bank):
    config = EngineConfig(K=1, lr=0.0)
    state = EngineState(small_space, small_bank, config)
    # Steer two features to the same pseudo-label: reuse the same feature.
    f = features_for(small_space)[0]
    first = process_sample(state, f)
    assert first.admitted
    # Identical feature, identical entropy: tie is NOT lower, so rejected.
    second = process_sample(state, f)
    assert second.pseudo_label == first.pseudo_label
    assert not second.admitted


def test_first_sample_alpha_term_is_exactly_alpha(small_space, small_bank):
    """Queue admission precedes visual refinement: the first sample's own
    feature forms its pseudo-label's visual prototype, so the fused logit
    there is dot + alpha * exp(0)."""
    config = EngineConfig(alpha=0.8, beta=7.0, lr=0.0)
    state = EngineState(small_space, small_bank, config)
    f = features_for(small_space)[0]
    out = process_sample(state, f)
    c = out.pseudo_label
    dots = small_bank.proto @ f
    assert out.prediction.logits[c] == pytest.approx(dots[c] + 0.8, abs=1e-12)
    others = [i for i in range(small_space.num_test) if i != c]
    np.testing.assert_allclose(out.prediction.logits[others], dots[others],
                               atol=1e-12)


def test_label_blindness_by_construction(small_space, small_bank):
    """Outcomes are a function of features alone; labels never reach the
    engine, so any relabeling yields identical logits."""
    feats = features_for(small_space, n=30, seed=9)
    outs1 = run_stream(EngineState(small_space, small_bank,
                                   EngineConfig(lr=0.02, alpha=0.5)), feats)
    outs2 = run_stream(EngineState(small_space, small_bank,
                                   EngineConfig(lr=0.02, alpha=0.5)), feats)
    for a, b in zip(outs1, outs2):
        assert np.array_equal(a.prediction.logits, b.prediction.logits)


def test_determinism_bitwise(small_space, small_bank):
    feats = features_for(small_space, n=40, seed=11)
    config = EngineConfig(lr=0.05, alpha=1.0, beta=3.0, lam=0.5)
    s1 = EngineState(small_space, small_bank, config)
    s2 = EngineState(small_space, small_bank, config)
    o1 = run_stream(s1, feats)
    o2 = run_stream(s2, feats)
    assert np.array_equal(s1.kam.delta_t, s2.kam.delta_t)
    assert np.array_equal(s1.kam.delta_v, s2.kam.delta_v)
    for a, b in zip(o1, o2):
        assert np.array_equal(a.prediction.probs, b.prediction.probs)
        assert a.admitted == b.admitted


def test_empty_stream(small_space, small_bank):
    state = EngineState(small_space, small_bank, EngineConfig())
    assert run_stream(state, []) == []


def test_matches_reference_pipeline_50_samples(small_space, small_bank):
    """Final deltas agree with the independent scalar reimplementation."""
    config = EngineConfig(lr=0.02, alpha=0.9, beta=4.0, lam=0.8, theta=1.3,
                          K=2, visual_weight_source="per_modality")
    feats = features_for(small_space, n=50, seed=13)
    state = EngineState(small_space, small_bank, config)
    run_stream(state, feats)
    ref_t, ref_v = reference_run(small_bank.proto, small_bank.temperature,
                                 feats, config)
    np.testing.assert_allclose(state.kam.delta_t, ref_t, atol=1e-10)
    np.testing.assert_allclose(state.kam.delta_v, ref_v, atol=1e-10)


def test_matches_reference_pipeline_textual_weights(small_space, small_bank):
    config = EngineConfig(lr=0.03, alpha=0.4, beta=6.0, lam=1.5, theta=2.0,
                          K=3, visual_weight_source="textual")
    feats = features_for(small_space, n=30, seed=17)
    state = EngineState(small_space, small_bank, config)
    run_stream(state, feats)
    ref_t, ref_v = reference_run(small_bank.proto, small_bank.temperature,
                                 feats, config)
    np.testing.assert_allclose(state.kam.delta_t, ref_t, atol=1e-10)
    np.testing.assert_allclose(state.kam.delta_v, ref_v, atol=1e-10)


def test_disable_everything_equals_lr_zero(small_space, small_bank):
    feats = features_for(small_space, n=25, seed=19)
    frozen = EngineState(small_space, small_bank, EngineConfig(lr=0.0, alpha=0.0))
    disabled = EngineState(
        small_space, small_bank,
        EngineConfig(lr=0.05, alpha=0.0,
                     disable=frozenset({"queue", "tkam", "vkam", "mcrl"})))
    for a, b in zip(run_stream(frozen, feats), run_stream(disabled, feats)):
        assert np.array_equal(a.prediction.probs, b.prediction.probs)


def test_each_module_can_be_disabled_independently(small_space, small_bank):
    feats = features_for(small_space, n=10, seed=23)
    for name in ("queue", "tkam", "vkam", "auw", "mcrl"):
        config = EngineConfig(lr=0.02, alpha=0.5).with_disabled(name)
        outs = run_stream(EngineState(small_space, small_bank, config), feats)
        assert len(outs) == 10
        assert all(np.isfinite(o.prediction.probs).all() for o in outs)


def test_disabled_queue_never_admits(small_space, small_bank):
    config = EngineConfig(lr=0.01, alpha=0.5).with_disabled("queue")
    outs = run_stream(EngineState(small_space, small_bank, config),
                      features_for(small_space, n=15, seed=29))
    assert not any(o.admitted for o in outs)


def test_apply_feasibility_masks_logits():
    logits = np.array([1.0, 2.0, 3.0])
    scores = np.array([np.inf, 0.4, 0.9])
    out = apply_feasibility(logits, scores, threshold=0.5)
    assert out[0] == 1.0
    assert out[1] == -np.inf
    assert out[2] == 3.0
    # -inf threshold is a no-op
    np.testing.assert_array_equal(
        apply_feasibility(logits, scores, -np.inf), logits)


def test_feasibility_zeroes_probabilities(small_space, small_bank):
    scores = np.full(small_space.num_test, np.inf)
    unseen_rows = np.flatnonzero(~small_space.seen_mask())
    scores[unseen_rows] = 0.0  # below threshold: filtered
    config = EngineConfig(lr=0.01, alpha=0.5, open_world=True,
                          feasibility_path="unused", feasibility_threshold=0.5)
    state = EngineState(small_space, small_bank, config,
                        feasibility=FeasibilityScores(score=scores))
    outs = run_stream(state, features_for(small_space, n=20, seed=31))
    seen_rows = np.flatnonzero(small_space.seen_mask())
    for o in outs:
        assert np.all(o.prediction.probs[unseen_rows] == 0.0)
        assert o.prediction.probs[seen_rows].sum() == pytest.approx(1.0)
        assert o.prediction.pseudo_label in set(seen_rows)


def test_open_world_requires_feasibility(small_space, small_bank):
    config = EngineConfig(open_world=True)
    with pytest.raises(ValueError):
        EngineState(small_space, small_bank, config)


def test_latency_excludes_update(small_space, small_bank):
    state = EngineState(small_space, small_bank, EngineConfig(lr=0.01, alpha=0.5))
    out = process_sample(state, features_for(small_space)[0])
    assert out.latency_s >= 0.0
    assert out.update_s >= 0.0


def test_sample_counter_tracks_optimizer(small_space, small_bank):
    state = EngineState(small_space, small_bank, EngineConfig(lr=0.01))
    run_stream(state, features_for(small_space, n=7, seed=37))
    assert state.sample_counter == 7
    assert state.opt.step_count == 7
