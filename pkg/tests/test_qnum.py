import pytest
from hypothesis import given
from hypothesis import strategies as st

from sysmt_sim.services.qnum import (
    FMulContractError,
    FMulMode,
    NarrowLane,
    Nibble,
    Width,
    WideLane,
    effective_width,
    fmul_2t,
    fmul_4t,
    reduce_to_msb_nibble,
    split_8x8_2t,
    split_8x8_4t,
)
from sysmt_sim.services.verification import check_fmul_narrow, check_fmul_one8x8, check_rounding


@pytest.mark.parametrize("x, signed, bits, value", [
    (59, False, 0b0100, 64),
    (-59, True, 0b1100, -64),
    (56, False, 0b0100, 64),
    (-56, True, 0b1101, -48),
    (46, False, 0b0011, 48),
    (0, False, 0b0000, 0),
])
def test_rounding_worked_examples(x, signed, bits, value):
    nib = reduce_to_msb_nibble(x, signed)
    assert nib.bits == bits
    assert nib.shifted
    assert nib.reconstruct() == value


def test_rounding_saturates_at_nibble_maximum():
    for x in range(0xF8, 0x100):
        nib = reduce_to_msb_nibble(x)
        assert (nib.bits, nib.saturated, nib.reconstruct()) == (0xF, True, 240)
    for x in range(0x78, 0x80):
        nib = reduce_to_msb_nibble(x, signed=True)
        assert (nib.bits, nib.saturated, nib.reconstruct()) == (0x7, True, 112)


def test_signed_minus_eight_rounds_to_zero():
    nib = reduce_to_msb_nibble(-8, signed=True)
    assert nib.reconstruct() == 0
    assert not nib.saturated


def test_rounding_idempotent_on_multiples_of_16():
    for x in range(0, 241, 16):
        assert reduce_to_msb_nibble(x).reconstruct() == x
    for x in range(-128, 113, 16):
        assert reduce_to_msb_nibble(x, signed=True).reconstruct() == x


def test_rounding_error_bound():
    for signed, values in ((False, range(256)), (True, range(-128, 128))):
        for x in values:
            nib = reduce_to_msb_nibble(x, signed)
            bound = 15 if nib.saturated else 8
            assert abs(nib.reconstruct() - x) <= bound


def test_rounding_oracle_is_clean():
    cases, counterexample = check_rounding()
    assert counterexample is None
    assert cases == 512


def test_effective_width_examples():
    assert effective_width(14) is Width.FITS4
    assert effective_width(178) is Width.NEEDS8
    assert effective_width(-8, signed=True) is Width.FITS4
    assert effective_width(-9, signed=True) is Width.NEEDS8


def test_signed_width_matches_sign_extension():
    for x in range(-128, 128):
        pattern = x & 0xFF
        msb = pattern >> 4
        lsb_sign = (pattern >> 3) & 1
        sign_extended = msb == (0xF if lsb_sign else 0x0)
        assert (effective_width(x, signed=True) is Width.FITS4) == sign_extended


def test_fmul_2t_collision_with_rounded_activations():
    lane0 = WideLane(reduce_to_msb_nibble(46), 23, port8_signed=False)
    lane1 = WideLane(reduce_to_msb_nibble(178), 242, port8_signed=False)
    assert fmul_2t(lane0, lane1, FMulMode.TWO_4X8) == (1104, 42592)


def test_fmul_2t_exact_single_thread():
    lanes = split_8x8_2t(178, 242, w_signed=False)
    assert sum(fmul_2t(lanes[0], lanes[1], FMulMode.ONE_8X8)) == 43076


def test_fmul_2t_accepts_unsplit_pair():
    assert sum(fmul_2t((178, -14), None, FMulMode.ONE_8X8)) == -2492


def test_fmul_2t_mixed_shift_lanes():
    lane0 = WideLane(Nibble(0b1110, shifted=True), 23, port8_signed=False)
    lane1 = WideLane(Nibble(0b0010), 242, port8_signed=False)
    products = fmul_2t(lane0, lane1, FMulMode.TWO_4X8)
    assert products == (5152, 484)
    assert sum(products) == 5636


def test_fmul_4t_recomposes_exact_product():
    assert sum(fmul_4t(split_8x8_4t(178, -14), FMulMode.ONE_8X8)) == -2492


def test_fmul_4t_four_narrow_lanes():
    lanes = (
        NarrowLane(Nibble(3, shifted=True), Nibble(7)),
        NarrowLane(Nibble(11), Nibble(2)),
        NarrowLane(Nibble(1), Nibble(1)),
        NarrowLane(Nibble(15), Nibble(8, signed=True)),
    )
    assert fmul_4t(lanes, FMulMode.FOUR_4X4) == (336, 22, 1, -120)


def test_fmul_4t_zero_lanes():
    lanes = [NarrowLane(Nibble(0), Nibble(b)) for b in (1, 5, 9, 15)]
    assert fmul_4t(lanes, FMulMode.FOUR_4X4) == (0, 0, 0, 0)


def test_fmul_2t_rejects_four_lane_mode():
    lane = WideLane(Nibble(1), 1)
    with pytest.raises(FMulContractError):
        fmul_2t(lane, lane, FMulMode.FOUR_4X4)


def test_fmul_2t_rejects_bad_one8x8_shifts():
    lane = WideLane(Nibble(1), 1)
    with pytest.raises(FMulContractError):
        fmul_2t(lane, lane, FMulMode.ONE_8X8)


def test_fmul_4t_rejects_inconsistent_one8x8_lanes():
    lanes = list(split_8x8_4t(178, -14))
    lanes[3] = NarrowLane(Nibble(1), lanes[3].b)
    with pytest.raises(FMulContractError):
        fmul_4t(lanes, FMulMode.ONE_8X8)


def test_fmul_4t_rejects_unpaired_two4x8_lanes():
    lanes = [NarrowLane(Nibble(a), Nibble(1)) for a in (1, 2, 3, 4)]
    with pytest.raises(FMulContractError):
        fmul_4t(lanes, FMulMode.TWO_4X8)


def test_wide_lane_range_checked():
    with pytest.raises(FMulContractError):
        WideLane(Nibble(1), 242)
    with pytest.raises(FMulContractError):
        Nibble(16)


def test_exhaustive_one8x8_recomposition():
    cases, counterexample = check_fmul_one8x8()
    assert counterexample is None
    assert cases == 65536


def test_exhaustive_narrow_lane_products():
    cases, counterexample = check_fmul_narrow()
    assert counterexample is None
    assert cases == 16 * 2 * 256


@given(
    a=st.integers(0, 15), sa=st.booleans(), w0=st.integers(-128, 127),
    b=st.integers(0, 15), sb=st.booleans(), w1=st.integers(-128, 127), w1_alt=st.integers(-128, 127),
)
def test_lane_independence(a, sa, w0, b, sb, w1, w1_alt):
    lane0 = WideLane(Nibble(a, shifted=sa), w0)
    first = fmul_2t(lane0, WideLane(Nibble(b, shifted=sb), w1), FMulMode.TWO_4X8)
    second = fmul_2t(lane0, WideLane(Nibble(b, shifted=sb), w1_alt), FMulMode.TWO_4X8)
    assert first[0] == second[0]
