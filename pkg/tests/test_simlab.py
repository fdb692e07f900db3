import numpy as np
import pytest

from scedlab.core.config import Settings
from scedlab.core.exceptions import BracketNotFoundError, DimensionError, InputError
from scedlab.models import ChannelParams, DecoderConfig
from scedlab.services.bpdec import decode_batch
from scedlab.services.code import base_path, contains, set_puncture_mask
from scedlab.services.gf2core import BitVector, syndrome_batch
from scedlab.services.sceddec import SCEDEnsemble
from scedlab.services.simlab import (
    SimulationService,
    channel_params,
    collect_error_frames,
    draw_frames,
    find_operating_snr,
    frame_rng,
    gaussian,
    run_fer,
    transmit,
)

CFG = DecoderConfig(max_iterations=10)


def test_sigma2_at_rate_half_and_zero_db():
    assert ChannelParams(ebn0_db=0.0, rate=0.5).sigma2 == pytest.approx(1.0)
    assert ChannelParams(ebn0_db=10.0, rate=0.5).sigma2 == pytest.approx(0.1)


def test_channel_params_use_code_rate(hamming):
    params = channel_params(hamming, 3.0)
    assert params.rate == pytest.approx(4 / 7)
    assert params.sigma2 == pytest.approx(1.0 / (2.0 * (4 / 7) * 10 ** 0.3))


def test_gaussian_moments():
    z = gaussian(frame_rng(1, 0), 200_000)
    assert np.isfinite(z).all()
    assert z.mean() == pytest.approx(0.0, abs=0.01)
    assert z.var() == pytest.approx(1.0, abs=0.02)


def test_llr_moments_for_the_zero_word():
    n = 200_000
    params = ChannelParams(ebn0_db=0.0, rate=0.5)
    llrs = transmit(BitVector.zeros(n), params, BitVector.zeros(n), frame_rng(5, 0))
    # LLR ~ N(2 / sigma2, 4 / sigma2)
    assert llrs.mean() == pytest.approx(2.0, abs=0.02)
    assert llrs.var() == pytest.approx(4.0, abs=0.08)


def test_high_snr_signs_follow_the_codeword(hamming):
    x = BitVector.from_string("1101001")
    params = ChannelParams(ebn0_db=40.0, rate=hamming.rate)
    llrs = transmit(x, params, BitVector.zeros(7), frame_rng(2, 3))
    np.testing.assert_array_equal(llrs < 0, x.to_bits().astype(bool))


def test_punctured_positions_carry_zero_llr():
    params = ChannelParams(ebn0_db=1.0, rate=0.5)
    mask = BitVector.from_string("1100100")
    llrs = transmit(BitVector.zeros(7), params, mask, frame_rng(0, 0))
    np.testing.assert_array_equal(llrs[[0, 1, 4]], 0.0)
    assert (llrs[[2, 3, 5, 6]] != 0.0).all()
    with pytest.raises(DimensionError):
        transmit(BitVector.zeros(7), params, BitVector.zeros(6), frame_rng(0, 0))


def test_draw_frames_are_reproducible_codewords(array_code):
    params = channel_params(array_code, 2.0)
    cw, llrs = draw_frames(array_code, params, seed=4, snr_index=0, start=10, count=6)
    assert not syndrome_batch(array_code.pcm, cw).any()
    again_cw, again_llrs = draw_frames(array_code, params, seed=4, snr_index=0, start=12, count=2)
    np.testing.assert_array_equal(again_cw, cw[2:4])
    np.testing.assert_array_equal(again_llrs, llrs[2:4])
    _, other = draw_frames(array_code, params, seed=4, snr_index=1, start=10, count=6)
    assert not np.array_equal(other, llrs)


def test_draw_frames_on_punctured_code(hamming):
    punctured = set_puncture_mask(hamming, BitVector.from_string("0000001"))
    _, llrs = draw_frames(punctured, channel_params(punctured, 1.0), seed=0, snr_index=0, start=0, count=5)
    np.testing.assert_array_equal(llrs[:, 6], 0.0)


def test_single_path_fer_matches_direct_loop(hamming):
    ens = SCEDEnsemble.build(hamming, [], CFG)
    result = run_fer(ens, [1.5], min_frame_errors=30, max_frames=5000, seed=9, batch_size=32)
    point = result.points[0]

    params = channel_params(hamming, 1.5)
    cw, llrs = draw_frames(hamming, params, 9, 0, 0, 5000)
    failed = (decode_batch(base_path(hamming), llrs, CFG).hard != cw).any(axis=1)
    # the run ends on its 30th failure
    last = int(np.flatnonzero(failed)[29])
    assert (point.frames_sent, point.frame_errors) == (last + 1, 30)
    assert point.fer == pytest.approx(30 / (last + 1))
    assert not point.capped


@pytest.mark.parametrize("workers", [2, 8])
def test_results_do_not_depend_on_worker_count(array_code, workers):
    ens = SCEDEnsemble.build(array_code, [], CFG)
    one = run_fer(ens, [1.0, 2.0], min_frame_errors=20, max_frames=2000, seed=3, workers=1, batch_size=64)
    many = run_fer(ens, [1.0, 2.0], min_frame_errors=20, max_frames=2000, seed=3, workers=workers, batch_size=64)
    assert one == many


def test_results_do_not_depend_on_batch_size(array_code):
    aux = [base_path(array_code)]
    ens = SCEDEnsemble.build(array_code, aux, CFG)
    runs = [
        run_fer(ens, [1.5], min_frame_errors=20, max_frames=5000, seed=3, batch_size=size)
        for size in (7, 64, 256)
    ]
    assert runs[0] == runs[1] == runs[2]
    point = runs[0].points[0]
    assert point.frame_errors == 20 and not point.capped


def test_cap_reached_marks_the_point(array_code):
    ens = SCEDEnsemble.build(array_code, [], CFG)
    result = run_fer(ens, [30.0], min_frame_errors=1, max_frames=64, seed=0, batch_size=16)
    point = result.points[0]
    assert point.capped
    assert point.frames_sent == 64 and point.frame_errors == 0
    assert point.fer == 0.0
    assert point.mean_latency == 0.0 and point.mean_complexity == 0.0


def test_latency_and_complexity_identities(array_code):
    aux = [base_path(array_code), base_path(array_code)]
    ens = SCEDEnsemble.build(array_code, aux, CFG)
    point = run_fer(ens, [1.5], min_frame_errors=10, max_frames=256, seed=1, batch_size=64).points[0]
    # identical paths: latency equals one path, complexity is three times it
    assert point.mean_iterations[0] == point.mean_iterations[1] == point.mean_iterations[2]
    assert point.mean_latency == pytest.approx(point.mean_iterations[0])
    assert point.mean_complexity == pytest.approx(3 * point.mean_iterations[0])


def test_run_fer_validation(hamming):
    ens = SCEDEnsemble.build(hamming, [], CFG)
    with pytest.raises(InputError):
        run_fer(ens, [], min_frame_errors=1, max_frames=10, seed=0)
    with pytest.raises(InputError):
        run_fer(ens, [1.0], min_frame_errors=0, max_frames=10, seed=0)


@pytest.fixture(scope="module")
def collected(hamming):
    return collect_error_frames(hamming, CFG, ebn0_db=1.0, num_frames=25, seed=6, frame_cap=100_000, batch_size=16)


def test_collected_frames_fail_again(collected, hamming):
    assert len(collected) == 25
    assert collected.llrs.dtype == np.float32
    assert collected.frames_simulated >= 25
    out = decode_batch(base_path(hamming), collected.llrs.astype(np.float64), CFG)
    assert (out.hard != collected.codewords).any(axis=1).all()
    for j in range(len(collected)):
        x, _ = collected.frame(j)
        assert contains(hamming, x)


def test_collection_does_not_depend_on_chunking(collected, hamming):
    other = collect_error_frames(hamming, CFG, ebn0_db=1.0, num_frames=25, seed=6, frame_cap=100_000, batch_size=100)
    np.testing.assert_array_equal(other.codewords, collected.codewords)
    np.testing.assert_array_equal(other.llrs, collected.llrs)
    assert other.frames_simulated == collected.frames_simulated


def test_collection_stops_at_the_cap(hamming):
    frames = collect_error_frames(hamming, CFG, ebn0_db=20.0, num_frames=5, seed=0, frame_cap=50, batch_size=16)
    assert len(frames) == 0
    assert frames.frames_simulated == 50
    with pytest.raises(InputError):
        collect_error_frames(hamming, CFG, ebn0_db=1.0, num_frames=0, seed=0)


def test_operating_point_outside_range_is_reported(hamming):
    with pytest.raises(BracketNotFoundError):
        find_operating_snr(hamming, CFG, target_fer=0.5, seed=0, low_db=8.0, high_db=10.0, pilot_frames=500, pilot_min_errors=10)
    with pytest.raises(InputError):
        find_operating_snr(hamming, CFG, target_fer=1.5, seed=0)


def test_operating_point_lands_inside_the_bracket(hamming):
    ebn0_db = find_operating_snr(
        hamming, CFG, target_fer=0.05, seed=0, low_db=-2.0, high_db=10.0, pilot_frames=4000, pilot_min_errors=40, max_steps=8
    )
    assert -2.0 < ebn0_db < 10.0


def test_service_caps_frames_and_stamps_digest(hamming):
    service = SimulationService(Settings(frame_cap=40, batch_size=8, workers=1))
    ens = SCEDEnsemble.build(hamming, [], CFG)
    result = service.simulate(ens, [30.0], min_frame_errors=5, max_frames=1000, seed=2, config_digest="abc")
    assert result.config_digest == "abc"
    assert result.points[0].frames_sent == 40
