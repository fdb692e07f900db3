import numpy as np
import pytest

from scedlab.core.exceptions import DimensionError, InputError
from scedlab.models import DecoderConfig, DecoderKind
from scedlab.services.bpdec import cn_update, decode, decode_batch, hard_decide
from scedlab.services.code import base_path, induce_subcode, random_codeword
from scedlab.services.gf2core import BitVector
from tests.conftest import codebook

SPA = DecoderConfig(kind=DecoderKind.SPA, max_iterations=32)
NMS = DecoderConfig(kind=DecoderKind.NMS, normalization=0.75, max_iterations=32)


def _noisy(x: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    y = (1.0 - 2.0 * x) + np.sqrt(sigma2) * rng.standard_normal(x.shape)
    return 2.0 * y / sigma2


def test_hard_decide():
    assert hard_decide([1.0, -1.0, 0.0]) == BitVector.from_bits([0, 1, 0])
    assert hard_decide([0.5] * 5).is_zero()
    np.testing.assert_array_equal(hard_decide([-2.0, 3.0, -0.1]).to_bits(), [1, 0, 1])


def test_cn_update_spa_zero_input():
    out = cn_update([0.0, 1.5, -2.0], kind="spa")
    assert out[1] == 0.0 and out[2] == 0.0
    assert out[0] != 0.0


def test_cn_update_nms_hand_values():
    out = cn_update([2.0, -3.0, 5.0], kind=DecoderKind.NMS, normalization=0.75)
    np.testing.assert_allclose(out, [-2.25, 1.5, -1.5])


@pytest.mark.parametrize("kind", ["spa", "nms"])
def test_cn_update_degree_two_passes_other_input(kind):
    out = cn_update([1.25, -0.5], kind=kind, normalization=1.0)
    np.testing.assert_allclose(out, [-0.5, 1.25], atol=1e-12)


def test_cn_update_spa_formula(rng):
    incoming = rng.normal(0.0, 2.0, size=6)
    out = cn_update(incoming, kind="spa")
    for j in range(6):
        others = np.delete(incoming, j)
        expected = 2.0 * np.arctanh(np.prod(np.tanh(others / 2.0)))
        assert out[j] == pytest.approx(expected, abs=1e-10)


def test_cn_update_clips():
    out = cn_update([100.0, 100.0], kind="nms", normalization=1.0, llr_clip=30.0)
    np.testing.assert_allclose(out, [30.0, 30.0])


def test_clip_bounds_check_messages_not_posteriors(array_code):
    cfg = DecoderConfig(kind=DecoderKind.NMS, normalization=0.75, max_iterations=1, llr_clip=2.0, early_stop=False)
    outcome = decode(base_path(array_code), np.full(array_code.n, 4.0), cfg)
    # every column has degree 3; each check sends min(0.75 * 4, 2) = 2
    np.testing.assert_allclose(outcome.posterior, 10.0)


def test_noiseless_codeword_stops_before_iterating(array_code, rng):
    x = random_codeword(array_code, rng)
    llrs = 8.0 * (1.0 - 2.0 * x.to_bits())
    outcome = decode(base_path(array_code), llrs, SPA)
    assert outcome.hard_decision == x
    assert outcome.iterations == 0
    assert outcome.converged and outcome.valid_in_base


def test_all_zero_input_is_the_zero_codeword(array_code):
    outcome = decode(base_path(array_code), np.zeros(array_code.n), SPA)
    assert outcome.hard_decision.is_zero()
    assert outcome.iterations == 0 and outcome.converged


def test_input_validation(hamming):
    with pytest.raises(DimensionError):
        decode(base_path(hamming), np.zeros(6), SPA)
    bad = np.zeros(7)
    bad[2] = np.nan
    with pytest.raises(InputError):
        decode(base_path(hamming), bad, SPA)


def test_iterations_bounded_and_converged_means_valid(array_code, rng):
    spec = base_path(array_code)
    cfg = DecoderConfig(max_iterations=8)
    zero = np.zeros(array_code.n, dtype=np.uint8)
    llrs = np.stack([_noisy(zero, 1.2, rng) for _ in range(40)])
    out = decode_batch(spec, llrs, cfg)
    assert (out.iterations <= 8).all()
    assert (out.valid_in_base[out.converged]).all()
    assert (out.iterations[~out.converged] == 8).all()


def test_subcode_convergence_implies_base_validity(array_code, rng):
    h = BitVector.from_bits((rng.random(array_code.n) < 0.06).astype(np.uint8) | np.eye(1, array_code.n, 0, dtype=np.uint8)[0])
    spec = induce_subcode(array_code, [h])
    zero = np.zeros(array_code.n, dtype=np.uint8)
    llrs = np.stack([_noisy(zero, 0.8, rng) for _ in range(30)])
    out = decode_batch(spec, llrs, SPA)
    assert (out.valid_in_base[out.converged]).all()


def test_tree_code_matches_bitwise_map(tree_code, rng):
    cfg = DecoderConfig(kind=DecoderKind.SPA, max_iterations=4, early_stop=False)
    book = codebook(tree_code).astype(np.float64)
    spec = base_path(tree_code)
    for _ in range(100):
        llrs = rng.normal(0.5, 1.5, size=tree_code.n)
        outcome = decode(spec, llrs, cfg)
        # log P(x | y) up to a constant is -sum(llr * x)
        scores = -(book @ llrs)
        for j in range(tree_code.n):
            zero = np.logaddexp.reduce(scores[book[:, j] == 0])
            one = np.logaddexp.reduce(scores[book[:, j] == 1])
            assert outcome.posterior[j] == pytest.approx(zero - one, abs=1e-9)
        assert outcome.iterations == 4


@pytest.mark.parametrize("cfg", [SPA, NMS], ids=["spa", "nms"])
def test_decoding_commutes_with_codeword_sign_flips(regular_96, cfg):
    rng = np.random.default_rng(99)
    spec = base_path(regular_96)
    zero = np.zeros(regular_96.n, dtype=np.uint8)
    llrs = np.stack([_noisy(zero, 0.9, rng) for _ in range(100)])
    reference = decode_batch(spec, llrs, cfg)
    for _ in range(20):
        s = random_codeword(regular_96, rng).to_bits()
        flipped = decode_batch(spec, llrs * (1.0 - 2.0 * s), cfg)
        np.testing.assert_array_equal(flipped.hard, reference.hard ^ s)
        np.testing.assert_array_equal(flipped.iterations, reference.iterations)


@pytest.mark.parametrize("scale", [0.25, 2.0, 8.0])
def test_nms_trajectory_ignores_positive_scaling(array_code, scale):
    rng = np.random.default_rng(5)
    spec = base_path(array_code)
    zero = np.zeros(array_code.n, dtype=np.uint8)
    llrs = np.stack([_noisy(zero, 1.1, rng) for _ in range(100)])
    # a clip far above every message keeps min-sum exactly homogeneous
    for it in range(1, 9):
        cfg = DecoderConfig(kind=DecoderKind.NMS, normalization=0.75, max_iterations=it, llr_clip=1e12, early_stop=False)
        reference = decode_batch(spec, llrs, cfg)
        scaled = decode_batch(spec, scale * llrs, cfg)
        np.testing.assert_array_equal(scaled.hard, reference.hard)
        np.testing.assert_array_equal(scaled.posterior, scale * reference.posterior)
    stopping = DecoderConfig(kind=DecoderKind.NMS, normalization=0.75, llr_clip=1e12)
    np.testing.assert_array_equal(
        decode_batch(spec, scale * llrs, stopping).iterations,
        decode_batch(spec, llrs, stopping).iterations,
    )


def test_batch_matches_single_frames(array_code, rng):
    spec = base_path(array_code)
    zero = np.zeros(array_code.n, dtype=np.uint8)
    llrs = np.stack([_noisy(zero, 1.0, rng) for _ in range(12)])
    batch = decode_batch(spec, llrs, NMS)
    for b in range(12):
        single = decode(spec, llrs[b], NMS)
        assert single.hard_decision == batch.outcome(b).hard_decision
        assert single.iterations == batch.iterations[b]
        assert single.converged == batch.converged[b]
        np.testing.assert_array_equal(single.posterior, batch.posterior[b])


def test_without_early_stop_runs_all_iterations(array_code):
    cfg = DecoderConfig(max_iterations=5, early_stop=False)
    llrs = np.full(array_code.n, 4.0)
    outcome = decode(base_path(array_code), llrs, cfg)
    assert outcome.iterations == 5
    assert outcome.converged and outcome.hard_decision.is_zero()
