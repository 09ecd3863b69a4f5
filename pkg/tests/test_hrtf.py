import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binaural_tse.errors import FormatError, IntegrityError, InvalidInputError
from binaural_tse.hrtf import (
    Direction,
    HrtfSet,
    Hrir,
    SphericalPos,
    angular_distance,
    get_clue,
    grid_resolution,
    load_hrtf_set,
    nearest_direction,
    save_hrtf_set,
    synthetic_hrtf_set,
)
from binaural_tse.metrics import cue_histograms
from binaural_tse.dsp import BinauralClip, convolve

azimuths = st.floats(0, 360, allow_nan=False, exclude_max=True)
elevations = st.floats(-90, 90, allow_nan=False)
directions = st.builds(Direction, azimuths, elevations)


def vector_angle(a, b):
    """Angle from atan2(|u x v|, u . v), well conditioned at 0 and 180 deg."""
    u, v = a.unit_vector(), b.unit_vector()
    return math.degrees(math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v)))


def linear_scan(hrtf, query):
    best, index = None, None
    for i, d in enumerate(hrtf.directions):
        dist = angular_distance(d, query)
        if best is None or dist < best - 1e-12:
            best, index = dist, i
    return index


def impulse_set(directions, length=8, fs=16000):
    irs = np.zeros((len(directions), 2, length))
    irs[:, :, 0] = 1.0
    return HrtfSet([d[0] for d in directions], [d[1] for d in directions], irs, fs, 1.5)


class TestDirection:
    def test_azimuth_wraps(self):
        assert Direction(-90, 0).azimuth_deg == 270.0
        assert Direction(720.5, 0).azimuth_deg == pytest.approx(0.5)

    def test_elevation_bounds(self):
        with pytest.raises(InvalidInputError):
            Direction(0, 91)

    def test_left_is_positive_y(self):
        assert np.allclose(Direction(90, 0).unit_vector(), [0, 1, 0])
        assert np.allclose(SphericalPos(Direction(0, 90), 2.0).cartesian(), [0, 0, 2])

    @given(directions)
    def test_vector_round_trip(self, d):
        back = Direction.from_vector(d.unit_vector())
        assert vector_angle(back, d) < 1e-6


class TestAngularDistance:
    def test_examples(self):
        assert angular_distance(Direction(10, 20), Direction(10, 20)) == 0.0
        assert angular_distance(Direction(0, 0), Direction(90, 0)) == pytest.approx(90.0, abs=1e-12)

    def test_high_precision_oracle(self):
        from decimal import Decimal, getcontext

        getcontext().prec = 50
        # extended-precision cosine via Taylor series, then arccos by bisection
        def dsin(x):
            x, term, total, n = Decimal(x), Decimal(x), Decimal(0), 1
            while abs(term) > Decimal(10) ** -45:
                total += term
                term = -term * x * x / ((n + 1) * (n + 2))
                n += 2
            return total

        pi = Decimal("3.14159265358979323846264338327950288419716939937510")

        def dcos(x):
            return dsin(pi / 2 - Decimal(x))

        rad = lambda deg: Decimal(deg) * pi / 180  # noqa: E731
        a_az, a_el, b_az, b_el = rad(30), rad(20), rad(75), rad(-10)
        c = dsin(a_el) * dsin(b_el) + dcos(a_el) * dcos(b_el) * dcos(a_az - b_az)
        lo, hi = Decimal(0), pi
        for _ in range(200):
            mid = (lo + hi) / 2
            if dcos(mid) > c:
                lo = mid
            else:
                hi = mid
        expected = float(lo * 180 / pi)
        assert abs(angular_distance(Direction(30, 20), Direction(75, -10)) - expected) < 1e-9

    @given(directions, directions)
    def test_symmetric(self, a, b):
        assert angular_distance(a, b) == angular_distance(b, a)

    @given(directions, directions, directions)
    def test_triangle_inequality(self, a, b, c):
        assert angular_distance(a, c) <= angular_distance(a, b) + angular_distance(b, c) + 1e-9

    @given(directions, directions)
    def test_range_and_vector_agreement(self, a, b):
        d = angular_distance(a, b)
        assert 0.0 <= d <= 180.0
        assert d == pytest.approx(vector_angle(a, b), abs=1e-5)


class TestHrtfSet:
    def test_full_grid_count(self, hrtf):
        assert len(hrtf) == 60 * 61
        assert grid_resolution(hrtf) == (6.0, 3.0)

    def test_single_entry_is_valid(self):
        s = impulse_set([(0.0, 0.0)])
        assert len(s) == 1 and s.ir_length == 8

    def test_duplicate_direction(self):
        with pytest.raises(IntegrityError):
            impulse_set([(10.0, 0.0), (370.0, 0.0)])

    def test_shape_validation(self):
        with pytest.raises(InvalidInputError):
            HrtfSet([0.0], [0.0], np.zeros((1, 1, 8)), 16000, 1.5)
        with pytest.raises(InvalidInputError):
            HrtfSet([0.0], [0.0], np.zeros((1, 2, 8)), 16000, 0.0)

    def test_irs_immutable(self, coarse_hrtf):
        with pytest.raises(ValueError):
            coarse_hrtf.irs[0, 0, 0] = 1.0

    def test_from_entries(self):
        entries = [(Direction(0, 0), Hrir([1.0, 0.0], [0.5, 0.0], 16000)),
                   (Direction(90, 0), Hrir([0.0, 1.0], [1.0, 0.0], 16000))]
        s = HrtfSet.from_entries(entries, 16000, 1.2, "pair")
        assert np.array_equal(s.hrir(1).pair, [[0, 1], [1, 0]])
        with pytest.raises(InvalidInputError):
            HrtfSet.from_entries([(Direction(0, 0), Hrir([1.0], [1.0], 8000))], 16000, 1.0)


class TestNearest:
    def test_on_grid(self, hrtf):
        d, i = nearest_direction(hrtf, Direction(42, 6))
        assert (d.azimuth_deg, d.elevation_deg) == (42.0, 6.0)
        assert hrtf.distances_to(Direction(42, 6))[i] < 1e-6

    def test_equator_discretization(self):
        ring = impulse_set([(az, 0.0) for az in range(0, 360, 6)])
        assert nearest_direction(ring, Direction(2.9, 0))[0].azimuth_deg == 0.0
        assert nearest_direction(ring, Direction(3.1, 0))[0].azimuth_deg == 6.0

    def test_tie_goes_to_lowest_index(self):
        ring = impulse_set([(6.0, 0.0), (0.0, 0.0)])
        assert nearest_direction(ring, Direction(3.0, 0.0))[1] == 0

    def test_random_queries_match_linear_scan(self, coarse_hrtf):
        rng = np.random.default_rng(0)
        az = rng.uniform(0, 360, 1000)
        el = np.degrees(np.arcsin(rng.uniform(-1, 1, 1000)))
        vec = coarse_hrtf.nearest_indices(az, el)
        for a, e, v in zip(az, el, vec):
            q = Direction(a, e)
            assert nearest_direction(coarse_hrtf, q)[1] == linear_scan(coarse_hrtf, q) == v

    @settings(max_examples=50)
    @given(directions)
    def test_idempotent(self, q):
        s = synthetic_hrtf_set(azimuth_step=45, elevation_step=45, ir_length=16)
        d, i = nearest_direction(s, q)
        assert nearest_direction(s, d)[1] == i

    @settings(max_examples=200, deadline=None)
    @given(directions)
    def test_error_bounded_by_half_cell_diagonal(self, hrtf, q):
        d, _ = nearest_direction(hrtf, q)
        # half-diagonal of the widest (equatorial) 6 x 3 degree cell
        half_diag = angular_distance(Direction(0, -1.5), Direction(3, 0))
        assert angular_distance(d, q) <= half_diag + 1e-9

    @settings(max_examples=200, deadline=None)
    @given(azimuths)
    def test_azimuth_error_at_equator(self, hrtf, az):
        d, _ = nearest_direction(hrtf, Direction(az, 0))
        assert d.elevation_deg == 0.0
        assert angular_distance(d, Direction(az, 0)) <= 3.0 + 1e-9


class TestClue:
    def test_on_grid_clue_is_entry_spectrum(self, hrtf):
        _, i = nearest_direction(hrtf, Direction(120, -9))
        clue = get_clue(hrtf, Direction(120, -9), 512)
        assert np.array_equal(clue, np.fft.rfft(hrtf.irs[i], 512, axis=-1))

    def test_identity_hrir(self):
        clue = get_clue(impulse_set([(0.0, 0.0)]), Direction(33, 3), 64)
        assert np.allclose(clue, np.ones((2, 33)))

    def test_matches_naive_dft(self, hrtf):
        clue = get_clue(hrtf, Direction(250, 30), 256)
        _, i = nearest_direction(hrtf, Direction(250, 30))
        n = np.arange(hrtf.ir_length)
        for ch in range(2):
            oracle = [np.sum(hrtf.irs[i, ch] * np.exp(-2j * np.pi * k * n / 256)) for k in range(129)]
            assert np.max(np.abs(clue[ch] - oracle)) < 1e-10


class TestInterchange:
    def test_round_trip_is_bit_exact(self, tmp_path, coarse_hrtf):
        path = save_hrtf_set(coarse_hrtf, tmp_path / "subj")
        once = load_hrtf_set(path)
        save_hrtf_set(once, tmp_path / "again")
        twice = load_hrtf_set(tmp_path / "again.hrtfset.f32")
        assert (tmp_path / "subj.hrtfset.f32").read_bytes() == (tmp_path / "again.hrtfset.f32").read_bytes()
        assert np.array_equal(once.irs, twice.irs)
        assert np.array_equal(once.irs, coarse_hrtf.irs.astype(np.float32))
        assert (twice.subject_id, twice.sample_rate, twice.radius_m) == ("synthetic", 16000, 1.5)

    def _write(self, tmp_path, meta, n_floats):
        (tmp_path / "x.hrtfset.json").write_text(json.dumps(meta))
        np.zeros(n_floats, "<f4").tofile(tmp_path / "x.hrtfset.f32")
        return tmp_path / "x"

    def _meta(self, entries):
        return {"subject_id": "x", "sample_rate": 16000, "radius_m": 1.0, "ir_length": 4, "entries": entries}

    def test_schema_violation_reports_field(self, tmp_path):
        meta = self._meta([{"azimuth_deg": 0, "elevation_deg": 0, "offset": -8}])
        with pytest.raises(FormatError) as err:
            load_hrtf_set(self._write(tmp_path, meta, 8))
        assert err.value.field == "$.entries[0].offset"

    def test_missing_key(self, tmp_path):
        meta = self._meta([{"azimuth_deg": 0, "elevation_deg": 0, "offset": 0}])
        del meta["sample_rate"]
        with pytest.raises(FormatError):
            load_hrtf_set(self._write(tmp_path, meta, 8))

    def test_short_blob(self, tmp_path):
        meta = self._meta([{"azimuth_deg": 0, "elevation_deg": 0, "offset": 0},
                           {"azimuth_deg": 90, "elevation_deg": 0, "offset": 8}])
        with pytest.raises(FormatError) as err:
            load_hrtf_set(self._write(tmp_path, meta, 12))
        assert err.value.field == "$.entries[1].offset"

    def test_duplicate_on_load(self, tmp_path):
        meta = self._meta([{"azimuth_deg": 0, "elevation_deg": 0, "offset": 0},
                           {"azimuth_deg": 360, "elevation_deg": 0, "offset": 8}])
        with pytest.raises(IntegrityError):
            load_hrtf_set(self._write(tmp_path, meta, 16))

    def test_missing_files(self, tmp_path):
        with pytest.raises(FormatError):
            load_hrtf_set(tmp_path / "nothing")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(FormatError):
            load_hrtf_set(tmp_path / "x", format="sofa")


class TestSyntheticSet:
    def test_left_source_leads_left_ear(self, hrtf):
        _, i = nearest_direction(hrtf, Direction(90, 0))
        left, right = hrtf.irs[i]
        assert np.argmax(np.abs(left)) < np.argmax(np.abs(right))
        assert np.sum(left**2) > np.sum(right**2)

    def test_lateral_target_itd_sign(self, hrtf):
        _, i = nearest_direction(hrtf, Direction(90, 0))
        noise = np.random.default_rng(3).standard_normal(16000)
        clip = BinauralClip.from_array(convolve(noise, hrtf.irs[i])[:, :16000], 16000)
        itd, ild = cue_histograms(clip)
        assert itd.peak() > 0.3
        assert np.sum(ild.weights * ild.centers) > 0

    def test_median_plane_is_diotic(self, hrtf):
        _, i = nearest_direction(hrtf, Direction(0, 0))
        assert np.allclose(hrtf.irs[i, 0], hrtf.irs[i, 1], atol=1e-12)

    def test_front_back_differ(self, hrtf):
        _, f = nearest_direction(hrtf, Direction(30, 0))
        _, b = nearest_direction(hrtf, Direction(150, 0))
        sf, sb = np.fft.rfft(hrtf.irs[f], axis=-1), np.fft.rfft(hrtf.irs[b], axis=-1)
        assert np.max(np.abs(np.abs(sf[0] / sf[1]) - np.abs(sb[0] / sb[1]))) > 0.1
