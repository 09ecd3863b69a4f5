import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binaural_tse.errors import GeometryError, InfeasibleAcousticsError, SingularityError, SizingError
from binaural_tse.hrtf import Direction, HrtfSet, SphericalPos, nearest_direction
from binaural_tse.room import (
    ImageSource,
    ImageSourceList,
    ListenerPose,
    RoomSpec,
    direct_path,
    estimate_t60,
    expand_images,
    required_fft_size,
    schroeder_decay,
    synthesize_brir,
    t60_to_reflection,
)

FS = 16000


def impulse_hrtf():
    irs = np.zeros((1, 2, 4))
    irs[0, :, 0] = 1.0
    return HrtfSet([0.0], [0.0], irs, FS, 1.0)


def triple_loop(room, src_world, listener_pos, beta, max_order, c=343.0):
    """Naive enumeration over per-axis image indices."""
    out = []
    r = range(-max_order, max_order + 1)
    for a, b, cc in itertools.product(r, r, r):
        order = abs(a) + abs(b) + abs(cc)
        if order > max_order:
            continue
        p = []
        for idx, length, s in zip((a, b, cc), room, src_world):
            p.append(idx * length + (s if idx % 2 == 0 else length - s))
        d = math.dist(p, listener_pos)
        out.append((d / c * FS, beta**order / d))
    return sorted(out)


class TestReflection:
    def test_sabine_example(self):
        room = RoomSpec((5.0, 4.0, 3.0), t60_s=0.5)
        assert room.volume == 60.0 and room.surface == 94.0
        absorption = 0.161 * 60 / 0.5 / 94
        assert absorption == pytest.approx(0.2055, abs=1e-4)
        assert t60_to_reflection(room) == pytest.approx(0.8913, abs=1e-4)
        assert t60_to_reflection(room) == pytest.approx(math.sqrt(1 - 19.32 / 94), abs=1e-12)

    def test_anechoic(self):
        room = RoomSpec((5.0, 4.0, 3.0), anechoic=True, max_order=7)
        assert t60_to_reflection(room) == 0.0
        assert room.effective_order == 0

    def test_lossless_limit(self):
        assert t60_to_reflection(RoomSpec((5.0, 4.0, 3.0), t60_s=1e9)) == pytest.approx(1.0, abs=1e-8)

    def test_infeasible(self):
        with pytest.raises(InfeasibleAcousticsError):
            t60_to_reflection(RoomSpec((2.0, 2.0, 2.0), t60_s=0.05))


class TestExpand:
    listener = ListenerPose((2.0, 1.5, 1.2), 0.0)
    source = SphericalPos(Direction(30.0, 10.0), 1.2)

    def test_counts(self):
        for m, expected in ((0, 1), (1, 7), (2, 25)):
            assert len(expand_images(RoomSpec((5.0, 4.0, 3.0), max_order=m), self.source, self.listener, FS)) == expected

    def test_order_two_matches_triple_loop(self):
        room = RoomSpec((5.0, 4.0, 3.0), t60_s=0.6, max_order=2)
        images = expand_images(room, self.source, self.listener, FS)
        src_world = np.asarray(self.listener.position_m) + self.source.cartesian()
        oracle = triple_loop(room.dimensions_m, src_world, self.listener.position_m, t60_to_reflection(room), 2)
        mine = sorted(zip(images.delays, images.gains))
        assert len(mine) == len(oracle)
        assert np.allclose(mine, oracle, rtol=0, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(
        dims=st.tuples(st.floats(2.5, 9), st.floats(2.5, 9), st.floats(2.2, 4)),
        frac=st.tuples(st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(0.1, 0.9)),
        m=st.integers(0, 4),
    )
    def test_count_matches_enumeration(self, dims, frac, m):
        listener = ListenerPose(tuple(d * f for d, f in zip(dims, frac)))
        room = RoomSpec(dims, t60_s=0.4, max_order=m)
        if room.volume * 0.161 / 0.4 >= room.surface:
            return
        images = expand_images(room, SphericalPos(Direction(0, 0), 0.05), listener, FS)
        brute = sum(1 for a, b, c in itertools.product(range(-m, m + 1), repeat=3) if abs(a) + abs(b) + abs(c) <= m)
        assert len(images) == brute == (2 * m + 1) * (2 * m * m + 2 * m + 3) // 3

    def test_gains_positive_and_decreasing_in_order(self):
        room = RoomSpec((6.0, 5.0, 3.0), t60_s=0.5, max_order=6)
        images = expand_images(room, self.source, self.listener, FS)
        assert np.all(images.gains > 0)
        attenuation = images.gains * images.distances  # beta ** order
        for k in range(6):
            assert attenuation[images.orders == k].min() >= attenuation[images.orders == k + 1].max() - 1e-15

    def test_direct_image_matches_source(self):
        images = expand_images(RoomSpec((5.0, 4.0, 3.0), max_order=3), self.source, self.listener, FS)
        d = images.direct
        assert d.order == 0
        assert d.direction.azimuth_deg == pytest.approx(30.0)
        assert d.direction.elevation_deg == pytest.approx(10.0)
        assert d.gain == pytest.approx(1 / 1.2)

    def test_yaw_rotates_arrival_direction(self):
        listener = ListenerPose((2.5, 2.0, 1.5), yaw_deg=90.0)
        images = expand_images(RoomSpec((5.0, 4.0, 3.0), max_order=0), SphericalPos(Direction(0, 0), 1.0), listener, FS)
        assert images.direct.direction.azimuth_deg == pytest.approx(0.0, abs=1e-9)
        # source placed 1 m along world +y appears at the listener's front when yawed by 90 deg
        src = np.asarray(listener.position_m) + listener.rotation() @ np.array([1.0, 0.0, 0.0])
        assert np.allclose(src, [2.5, 3.0, 1.5])

    def test_errors(self):
        room = RoomSpec((5.0, 4.0, 3.0))
        with pytest.raises(GeometryError):
            expand_images(room, SphericalPos(Direction(0, 0), 10.0), self.listener, FS)
        with pytest.raises(GeometryError):
            expand_images(room, self.source, ListenerPose((6.0, 1.0, 1.0)), FS)
        with pytest.raises(SingularityError):
            expand_images(room, SphericalPos(Direction(0, 0), 1e-12), self.listener, FS)

    def test_iteration_and_from_images(self):
        images = expand_images(RoomSpec((5.0, 4.0, 3.0), max_order=1), self.source, self.listener, FS)
        rebuilt = ImageSourceList.from_images(list(images), FS)
        assert np.allclose(rebuilt.delays, images.delays) and np.allclose(rebuilt.gains, images.gains)


class TestDirectPath:
    def test_examples(self):
        assert direct_path(SphericalPos(Direction(10, 5), 2.0)).gain == 0.5
        dp = direct_path(SphericalPos(Direction(10, 5), 1.715), FS, 343.0)
        assert dp.delay_samples == pytest.approx(80.0, abs=1e-12)
        assert dp.direction == Direction(10, 5) and dp.order == 0

    @given(st.floats(0.1, 50))
    def test_delay_reciprocity(self, r):
        d1 = direct_path(SphericalPos(Direction(0, 0), r)).delay_samples
        d2 = direct_path(SphericalPos(Direction(0, 0), 2 * r)).delay_samples
        assert d2 == pytest.approx(2 * d1, rel=1e-15)


class TestSynthesize:
    def test_single_direct_image_is_hrir(self, hrtf):
        images = ImageSourceList.from_images([ImageSource(Direction(60, 0), 1.0, 0.0, 0)], FS)
        brir = synthesize_brir(images, hrtf, 512)
        _, i = nearest_direction(hrtf, Direction(60, 0))
        assert np.allclose(brir.pair[:, : hrtf.ir_length], hrtf.irs[i], atol=1e-9)
        assert np.allclose(brir.pair[:, hrtf.ir_length:], 0.0, atol=1e-9)

    def test_two_tap_oracle(self):
        images = ImageSourceList.from_images(
            [ImageSource(Direction(0, 0), 1.0, 0.0, 0), ImageSource(Direction(0, 0), 0.5, 100.0, 1)], FS)
        brir = synthesize_brir(images, impulse_hrtf(), 256)
        expected = np.zeros(256)
        expected[0], expected[100] = 1.0, 0.5
        assert np.allclose(brir.left, expected, atol=1e-12)
        assert np.allclose(brir.right, expected, atol=1e-12)

    def test_order_two_matches_shift_and_add(self, hrtf):
        room = RoomSpec((5.0, 4.0, 3.0), t60_s=0.5, max_order=2)
        images = expand_images(room, SphericalPos(Direction(75, 5), 1.4), ListenerPose((2.2, 1.9, 1.4), 20.0), FS)
        n = required_fft_size(images, hrtf.ir_length)
        brir = synthesize_brir(images, hrtf, n)
        # time domain: each HRIR circularly shifted by a periodic-sinc kernel
        m = np.arange(n)

        def shift_kernel(tau):
            v = m - tau
            out = np.ones(n)
            nz = np.abs(np.sin(np.pi * v / n)) > 1e-12
            out[nz] = np.sin(np.pi * v[nz]) / (n * np.tan(np.pi * v[nz] / n))
            return out

        oracle = np.zeros((2, n))
        for img_i in range(len(images)):
            _, idx = nearest_direction(hrtf, Direction(images.azimuths[img_i], images.elevations[img_i]))
            kern = shift_kernel(images.delays[img_i])
            for ch in range(2):
                hr = np.zeros(n)
                hr[: hrtf.ir_length] = hrtf.irs[idx, ch]
                oracle[ch] += images.gains[img_i] * np.real(np.fft.ifft(np.fft.fft(hr) * np.fft.fft(kern)))
        err = np.sum((brir.pair - oracle) ** 2) / np.sum(oracle**2)
        assert 10 * np.log10(err) < -60

    def test_sizing_error(self, hrtf):
        images = ImageSourceList.from_images([ImageSource(Direction(0, 0), 1.0, 500.0, 0)], FS)
        with pytest.raises(SizingError):
            synthesize_brir(images, hrtf, 512)

    def test_anechoic_cue_fidelity(self, hrtf):
        room = RoomSpec((8.0, 8.0, 4.0), anechoic=True)
        pos = SphericalPos(Direction(96, 3), 1.3)
        images = expand_images(room, pos, ListenerPose((4.0, 4.0, 2.0)), FS)
        n = 1024
        brir = synthesize_brir(images, hrtf, n)
        _, i = nearest_direction(hrtf, pos.direction)
        dp = images.direct
        k = np.arange(n // 2 + 1)
        undone = np.fft.rfft(brir.pair, axis=-1) / (dp.gain * np.exp(-2j * np.pi * k * dp.delay_samples / n))
        # Nyquist excluded: a real signal cannot carry a fractional shift there
        assert np.allclose(undone[:, :-1], np.fft.rfft(hrtf.irs[i], n, axis=-1)[:, :-1], atol=1e-9)


class TestDecay:
    def test_schroeder_of_exponential(self):
        t = np.arange(FS) / FS
        ir = np.exp(-6.9078 * t / 0.4) * np.random.default_rng(0).standard_normal(FS)
        assert schroeder_decay(ir)[0] == 0.0
        assert estimate_t60(ir, FS) == pytest.approx(0.4, rel=0.05)

    @pytest.mark.slow
    def test_brir_t60_within_tolerance(self, hrtf):
        room = RoomSpec((6.0, 5.0, 3.0), t60_s=0.5, max_order=20)
        images = expand_images(room, SphericalPos(Direction(200, 0), 1.5), ListenerPose((3.4, 2.2, 1.6), 45.0), FS)
        t60 = estimate_t60(synthesize_brir(images, hrtf).pair, FS)
        assert abs(t60 - 0.5) <= 0.125
