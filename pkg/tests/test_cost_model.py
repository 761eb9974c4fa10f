import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bltnet.cost_model import (
    DetectorProfile,
    ProfileFormatError,
    flops_baseline,
    flops_bltnet,
    get_profile,
    load_profiles,
    parse_profiles,
    reduction_factor,
)

N = 2048 * 1024
HEADER = "name,gflops_at_ref,ref_width,ref_height,role,h\n"


@pytest.fixture(scope="module")
def profiles():
    return load_profiles()


def half_up(x):
    return math.floor(x + 0.5)


class TestBaseline:
    def test_full_image(self, profiles):
        assert flops_baseline(profiles["pedestron-hrnet"], N) / 1e9 == pytest.approx(596.8, rel=1e-12)

    def test_half_image(self, profiles):
        assert flops_baseline(profiles["pedestron-hrnet"], N / 2) / 1e9 == pytest.approx(298.4, rel=1e-12)

    def test_alfnet(self, profiles):
        assert flops_baseline(profiles["alfnet-mv1"], N) / 1e9 == pytest.approx(171, rel=1e-12)

    def test_lower_resolution(self, profiles):
        # 640x480 frames scale the per-pixel cost linearly
        assert flops_baseline(profiles["pedestron-hrnet"], 640 * 480) / 1e9 == pytest.approx(87.4, abs=0.05)

    def test_rejects_empty_image(self, profiles):
        with pytest.raises(ValueError):
            flops_baseline(profiles["cs"], 0)


class TestTwoStage:
    def test_cs_hrnet(self, profiles):
        got = flops_bltnet(profiles["cs"], profiles["pedestron-hrnet"], N, 0.091 * N) / 1e9
        assert got == pytest.approx(27.5 + 0.091 * 596.8, rel=1e-12)
        assert round(got, 2) == 81.81

    def test_no_crops(self, profiles):
        assert flops_bltnet(profiles["cs"], profiles["pedestron-hrnet"], N, 0) / 1e9 == pytest.approx(27.5)

    def test_mv2_pair(self, profiles):
        got = flops_bltnet(profiles["cascade-mv2"], profiles["pedestron-mv2"], N, 0.096 * N) / 1e9
        assert round(got, 2) == 50.17

    def test_negative_m(self, profiles):
        with pytest.raises(ValueError):
            flops_bltnet(profiles["cs"], profiles["pedestron-hrnet"], N, -1)


class TestReductionFactor:
    def test_cs_hrnet(self, profiles):
        r = reduction_factor(profiles["cs"], profiles["pedestron-hrnet"], N, 0.091 * N)
        assert r.reduction_factor == pytest.approx(1 / (27.5 / 596.8 + 0.091), rel=1e-12)
        assert round(r.reduction_factor, 1) == 7.3

    def test_free_proposer(self):
        free = DetectorProfile("free", 1e-300, 2048, 1024, "stage1")
        a = DetectorProfile("a", 100.0, 2048, 1024)
        assert reduction_factor(free, a, N, 0.25 * N).reduction_factor == pytest.approx(4.0, rel=1e-12)

    def test_acsp_inverted_row(self, profiles):
        m_over_n = (136.7 - 27.5) / 730.5
        r = reduction_factor(profiles["cs"], profiles["acsp-rn101"], N, m_over_n * N)
        assert r.bltnet_gflops == pytest.approx(136.7, rel=1e-12)
        assert round(r.reduction_factor, 1) == 5.3

    @given(
        st.floats(1, 1000), st.floats(1, 1000), st.integers(1, 4096), st.integers(1, 4096), st.floats(0, 1),
    )
    def test_identity(self, b, a, w, h, frac):
        s1 = DetectorProfile("b", b, 2048, 1024, "stage1")
        s2 = DetectorProfile("a", a, 2048, 1024)
        r = reduction_factor(s1, s2, w * h, frac * w * h)
        assert r.baseline_flops / r.bltnet_flops == pytest.approx(r.reduction_factor, rel=1e-12)
        assert r.reduction_factor == pytest.approx(1 / (b / a + frac), rel=1e-12)

    @given(st.floats(0, 0.9), st.floats(0.001, 0.1))
    def test_monotone_in_m(self, frac, step):
        s1 = DetectorProfile("b", 27.5, 2048, 1024, "stage1")
        s2 = DetectorProfile("a", 596.8, 2048, 1024)
        lo = reduction_factor(s1, s2, N, frac * N)
        hi = reduction_factor(s1, s2, N, (frac + step) * N)
        assert hi.bltnet_flops > lo.bltnet_flops
        assert hi.reduction_factor < lo.reduction_factor

    @given(st.floats(0.01, 100))
    def test_scale_invariant(self, c):
        s1 = DetectorProfile("b", 27.5, 2048, 1024, "stage1")
        s2 = DetectorProfile("a", 596.8, 2048, 1024)
        s1c = DetectorProfile("b", 27.5 * c, 2048, 1024, "stage1")
        s2c = DetectorProfile("a", 596.8 * c, 2048, 1024)
        base = reduction_factor(s1, s2, N, 0.1 * N).reduction_factor
        assert reduction_factor(s1c, s2c, N, 0.1 * N).reduction_factor == pytest.approx(base, rel=1e-12)


class TestProfileData:
    # detector benchmark at 2048x1024, in whole GFLOPs
    BENCHMARK = {
        "alfnet-mv1": 171, "reploss-rn50": 183, "pedestron-mv2": 262, "apd-dla34": 283,
        "pedhunter-rn50": 409, "pedestron-hrnet": 597, "csp-mv1": 352, "alfnet-rn50": 377,
        "crowdhuman-rn50": 409, "csp-rn50": 657, "acsp-rn101": 731, "citypersons-vgg16": 867,
        "adaptivenms-vgg16": 867, "orcnn-vgg16": 867, "pscnet-vgg16": 867, "mgan-vgg16": 894,
    }

    def test_benchmark_rows(self, profiles):
        for name, gflops in self.BENCHMARK.items():
            assert half_up(flops_baseline(profiles[name], N) / 1e9) == gflops, name

    def test_stage_roles(self, profiles):
        assert {n for n, p in profiles.items() if p.role == "stage1"} == {"cs", "cascade-mv2"}
        assert profiles["acsp-rn101"].required_crop_height_h == 320
        assert profiles["alfnet-mv1"].required_crop_height_h is None

    def test_unknown_profile_lists_available(self, profiles):
        with pytest.raises(KeyError, match="pedestron-hrnet"):
            get_profile(profiles, "yolo")

    def test_role_check(self, profiles):
        with pytest.raises(ValueError):
            get_profile(profiles, "cs", role="stage2")


class TestParsing:
    def test_minimal(self):
        p = parse_profiles(HEADER + "x,10,100,100,stage1,\n")
        assert p["x"].flops_per_pixel == pytest.approx(1e6)

    def test_comments_and_blanks(self):
        p = parse_profiles("# c\n\n" + HEADER + "# more\nx,10,100,100,stage2,256\n")
        assert p["x"].required_crop_height_h == 256

    @pytest.mark.parametrize(
        "body, lineno",
        [
            ("x,10,100,100,stage1\n", 2),
            ("x,abc,100,100,stage1,\n", 2),
            ("x,10,100,100,stage3,\n", 2),
            ("x,10,100,100,stage1,\ny,-1,100,100,stage2,\n", 3),
            ("x,10,100,100,stage1,\nx,10,100,100,stage1,\n", 3),
        ],
    )
    def test_errors_carry_line_numbers(self, body, lineno):
        with pytest.raises(ProfileFormatError, match=f"f.csv:{lineno}:"):
            parse_profiles(HEADER + body, source="f.csv")

    def test_bad_header(self):
        with pytest.raises(ProfileFormatError, match=":1:"):
            parse_profiles("name,gflops\n", source="f.csv")

    def test_empty(self):
        with pytest.raises(ProfileFormatError):
            parse_profiles("# nothing\n")

    def test_env_override(self, tmp_path, monkeypatch):
        f = tmp_path / "mine.csv"
        f.write_text(HEADER + "mine,1,10,10,stage2,\n")
        monkeypatch.setenv("BLTNET_PROFILES", str(f))
        assert set(load_profiles()) == {"mine"}

    def test_explicit_path_wins(self, tmp_path, monkeypatch):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text(HEADER + "a,1,10,10,stage2,\n")
        b.write_text(HEADER + "b,1,10,10,stage2,\n")
        monkeypatch.setenv("BLTNET_PROFILES", str(a))
        assert set(load_profiles(b)) == {"b"}
