import random
import threading
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bltnet.cost_model import load_profiles
from bltnet.formats import default_detector_config, default_proposer_config
from bltnet.geometry import Box, ImageMeta, iou
from bltnet.metrics import Detection, GtBox
from bltnet.pcmad import MRoi, PcmadParams, Proposal
from bltnet.pipeline import (
    DatasetError,
    PipelineParams,
    Sample,
    StageError,
    global_nms,
    remap_detection,
    run_dataset,
    run_image,
    to_crop_frame,
)
from bltnet.simulation import OracleDetector, OracleProposer, SceneConfig, generate_corpus, noiseless
from oracles import brute_force_nms

IMG = ImageMeta("img", 2048, 1024)
PROFILES = load_profiles()
CS, HRNET = PROFILES["cs"], PROFILES["pedestron-hrnet"]


def crop(box, scale):
    b = Box(*box)
    return MRoi(b, frozenset([0]), 0, scale, int(np.ceil(b.width * scale)), int(np.ceil(b.height * scale)))


def isolated_scenes(n, seed=0, lam=9.0):
    return generate_corpus(SceneConfig(cluster_fraction=0.0, objects_lambda=lam, seed=seed), n)


def max_gt_iou(scene):
    boxes = [g.box for g in scene.gt]
    return max((iou(a, b) for i, a in enumerate(boxes) for b in boxes[i + 1:]), default=0.0)


class TestRemap:
    def test_example(self):
        d = Detection(Box(10, 10, 20, 30), 0.7)
        r = remap_detection(d, crop((100, 200, 200, 300), 0.5))
        assert r.box == Box(120, 220, 140, 260) and r.score == 0.7

    def test_identity(self):
        d = Detection(Box(10, 10, 20, 30), 0.7)
        assert remap_detection(d, crop((0, 0, 100, 100), 1.0)).box == d.box

    def test_outside_crop(self):
        with pytest.raises(ValueError, match="outside"):
            remap_detection(Detection(Box(10, 10, 60, 30), 0.7), crop((100, 200, 200, 300), 0.5))

    @given(
        st.floats(0, 1000), st.floats(0, 500), st.floats(50, 900), st.floats(50, 500),
        st.sampled_from([1.0, 2 / 3, 0.5, 0.4, 1 / 3, 2 / 7, 0.25]),
        st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1), st.floats(0.01, 1),
    )
    def test_round_trip(self, x, y, w, h, scale, fx, fy, fw, fh):
        m = crop((x, y, x + w, y + h), scale)
        gx0, gy0 = x + fx * w * 0.5, y + fy * h * 0.5
        g = Box(gx0, gy0, gx0 + fw * w * 0.5, gy0 + fh * h * 0.5)
        back = remap_detection(Detection(to_crop_frame(g, m), 1.0), m).box
        assert np.allclose(back.as_tuple(), g.as_tuple(), rtol=0, atol=1e-9)


class TestNms:
    def test_identical(self):
        kept = global_nms([Detection(Box(0, 0, 10, 10), 0.8), Detection(Box(0, 0, 10, 10), 0.9)])
        assert kept == [Detection(Box(0, 0, 10, 10), 0.9)]

    def test_disjoint(self):
        dets = [Detection(Box(0, 0, 10, 10), 0.8), Detection(Box(20, 0, 30, 10), 0.9)]
        assert len(global_nms(dets)) == 2

    def test_equal_scores_prefer_larger(self):
        dets = [Detection(Box(0, 0, 10, 18), 0.9), Detection(Box(0, 0, 10, 20), 0.9)]
        assert global_nms(dets) == [dets[1]]

    def test_equal_scores_and_areas_keep_input_order(self):
        dets = [Detection(Box(0, 0, 10, 20), 0.9), Detection(Box(1, 0, 11, 20), 0.9)]
        assert global_nms(dets) == [dets[0]]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            raw = []
            for _ in range(20):
                x, y = rng.uniform(0, 60, 2)
                raw.append(((x, y, x + rng.uniform(5, 30), y + rng.uniform(5, 30)), float(rng.integers(0, 5)) / 4))
            dets = [Detection(Box(*b), s) for b, s in raw]
            thr = float(rng.choice([0.3, 0.5, 0.7]))
            assert global_nms(dets, thr) == [dets[i] for i in brute_force_nms(raw, thr)]

    def test_antichain(self):
        rng = np.random.default_rng(4)
        dets = []
        for _ in range(200):
            x, y = rng.uniform(0, 300, 2)
            dets.append(Detection(Box(x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40)), float(rng.random())))
        kept = global_nms(dets, 0.5)
        assert all(iou(a, b) < 0.5 for i, a in enumerate(k.box for k in kept) for b in [k.box for k in kept][i + 1:])


class TestRunImage:
    def test_noiseless_identity(self):
        det = OracleDetector(noiseless())
        prop = OracleProposer(noiseless())
        checked = 0
        for scene in isolated_scenes(30, seed=5):
            if not scene.gt or max_gt_iou(scene) >= 0.5:
                continue
            res = run_image(prop, det, scene.image, scene)
            assert len(res.detections) == len(scene.gt)
            for g in scene.gt:
                assert max(iou(g.box, d.box) for d in res.detections) == pytest.approx(1.0, abs=1e-9)
            checked += 1
        assert checked >= 20

    def test_no_proposals(self):
        res = run_image(lambda image, scene: [], OracleDetector(noiseless()), IMG, None)
        assert res.detections == () and res.plan.m_pixels == 0

    def test_split_object_single_detection(self):
        g = GtBox(Box(100, 100, 140, 200))
        # two proposals in different height buckets, both covering the object
        props = [Proposal(0, Box(90, 90, 150, 210)), Proposal(1, Box(60, 50, 180, 350))]
        seen = []

        def detector(m, scene):
            d = Detection(to_crop_frame(g.box, m), 0.9)
            seen.append(remap_detection(d, m))
            return [d]

        res = run_image(lambda image, scene: props, detector, IMG, [g])
        assert len(res.plan.mrois) == 2 and len(seen) == 2
        raw = [(d.box.as_tuple(), d.score) for d in seen]
        assert len(res.detections) == len(brute_force_nms(raw, 0.5)) == 1

    def test_detections_inside_image(self):
        scene = generate_corpus(SceneConfig(seed=3), 1)[0]
        res = run_image(OracleProposer(default_proposer_config()), OracleDetector(default_detector_config()),
                        scene.image, scene)
        assert all(IMG.bounds.contains(d.box) for d in res.detections)

    def test_stage_error_wraps(self):
        def boom(image, scene):
            raise RuntimeError("no weights")

        with pytest.raises(StageError, match="no weights"):
            run_image(boom, OracleDetector(noiseless()), IMG, None)

    def test_scale_forced_to_one_is_equivalent(self):
        det = OracleDetector(noiseless())
        prop = OracleProposer(noiseless())
        for scene in generate_corpus(SceneConfig(seed=2, height_mu=np.log(300.0)), 15):
            a = run_image(prop, det, scene.image, scene)
            b = run_image(prop, det, scene.image, scene, PipelineParams(pcmad=PcmadParams(downscale=False)))
            assert len(a.detections) == len(b.detections)
            for x, y in zip(a.detections, b.detections):
                assert x.score == y.score
                assert np.allclose(x.box.as_tuple(), y.box.as_tuple(), rtol=0, atol=1e-9)


class TestRunDataset:
    def test_noiseless(self):
        scenes = [s for s in isolated_scenes(40, seed=7) if max_gt_iou(s) < 0.5]
        res = run_dataset(OracleProposer(noiseless()), OracleDetector(noiseless()),
                          [s.as_sample() for s in scenes], CS, HRNET)
        assert res.eval.sensitivity == 1.0 and res.eval.mr2 == 0.0
        assert res.eval.mroi_per_object <= 1.0
        assert res.cost.reduction_factor > 1

    def test_errors_aggregated(self):
        scenes = isolated_scenes(6)
        bad = {scenes[1].image.image_id, scenes[4].image.image_id}

        def proposer(image, scene):
            if image.image_id in bad:
                raise ValueError("corrupt frame")
            return []

        with pytest.raises(DatasetError) as info:
            run_dataset(proposer, OracleDetector(noiseless()), [s.as_sample() for s in scenes], CS, HRNET)
        assert set(info.value.failures) == bad

    def test_order_independent(self):
        samples = [s.as_sample() for s in generate_corpus(SceneConfig(seed=1), 30)]
        args = (OracleProposer(default_proposer_config()), OracleDetector(default_detector_config()))
        a = run_dataset(*args, samples, CS, HRNET, max_workers=1)
        shuffled = list(samples)
        random.Random(0).shuffle(shuffled)
        b = run_dataset(*args, shuffled, CS, HRNET, max_workers=8)
        assert a.eval == b.eval
        assert a.cost == b.cost
        assert a.detections == b.detections

    def test_single_use_stage_serialized(self):
        active, peak = [0], [0]
        lock = threading.Lock()

        class Proposer:
            single_use = True

            def __call__(self, image, scene):
                with lock:
                    active[0] += 1
                    peak[0] = max(peak[0], active[0])
                time.sleep(0.002)
                with lock:
                    active[0] -= 1
                return []

        samples = [Sample(ImageMeta(f"i{k}", 64, 64), (GtBox(Box(0, 0, 5, 10)),)) for k in range(16)]
        run_dataset(Proposer(), OracleDetector(noiseless()), samples, CS, HRNET, max_workers=8)
        assert peak[0] == 1

    def test_rejects_duplicates_and_empty(self):
        s = Sample(IMG, (GtBox(Box(0, 0, 5, 10)),))
        with pytest.raises(ValueError):
            run_dataset(OracleProposer(noiseless()), OracleDetector(noiseless()), [s, s], CS, HRNET)
        with pytest.raises(ValueError):
            run_dataset(OracleProposer(noiseless()), OracleDetector(noiseless()), [], CS, HRNET)

    def test_nms_iou_range(self):
        with pytest.raises(ValueError):
            PipelineParams(nms_iou=1.0)
