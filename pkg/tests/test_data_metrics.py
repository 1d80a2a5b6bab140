import numpy as np
import pytest

from fusenet.data import (
    DatasetError, Detection, GroundTruthBox, SceneSpec, SpecError,
    _background, generate_dataset, generate_scene, load_dataset,
    read_annotations, read_ppm, write_annotations, write_ppm,
)
from fusenet.metrics import (
    EvaluationError, average_precision, iou, mean_ap, precision_recall,
)


def det(cid, score, cx, cy, w, h):
    return Detection(cid, score, cx, cy, w, h)


def box(cid, cx, cy, w, h):
    return GroundTruthBox(cid, cx, cy, w, h)


# -- independent oracle ------------------------------------------------------

def greedy_tp_flags(dets, truths, thr):
    """Reference matching, written against the metric's definition and kept
    separate from the library's vectorized path."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    used = [False] * len(truths)
    flags = []
    for i in order:
        best, best_j = 0.0, -1
        for j, t in enumerate(truths):
            if used[j]:
                continue
            v = iou(dets[i], t)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= thr:
            used[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def brute_force_ap(dets, truths, thr):
    """Enumerate every rank cutoff; integrate the precision envelope."""
    if not truths or not dets:
        return 0.0
    flags = greedy_tp_flags(dets, truths, thr)
    n = len(flags)
    precisions, recalls = [], []
    for k in range(1, n + 1):
        tp = sum(flags[:k])
        precisions.append(tp / k)
        recalls.append(tp / len(truths))
    ap, r_prev = 0.0, 0.0
    for k in range(n):
        envelope = max(precisions[k:])
        ap += (recalls[k] - r_prev) * envelope
        r_prev = recalls[k]
    return ap


def random_case(rng, n_det=20, n_truth=10, n_classes=1):
    dets = [det(int(rng.integers(n_classes)), float(rng.random()),
                float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.2, 0.8)),
                float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.05, 0.3)))
            for _ in range(int(rng.integers(1, n_det + 1)))]
    truths = [box(int(rng.integers(n_classes)),
                  float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.2, 0.8)),
                  float(rng.uniform(0.05, 0.3)), float(rng.uniform(0.05, 0.3)))
              for _ in range(int(rng.integers(1, n_truth + 1)))]
    return dets, truths


class TestIou:
    def test_identical(self):
        b = det(0, 1.0, 0.5, 0.5, 0.2, 0.2)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(det(0, 1, 0.2, 0.2, 0.1, 0.1),
                   det(0, 1, 0.8, 0.8, 0.1, 0.1)) == 0.0

    def test_half_overlap(self):
        unit = det(0, 1, 0.5, 0.5, 1.0, 1.0)
        right_half = det(0, 1, 0.75, 0.5, 0.5, 1.0)
        assert iou(unit, right_half) == pytest.approx(0.5)


class TestAveragePrecision:
    def test_single_perfect_match(self):
        truths = [box(0, 0.5, 0.5, 0.2, 0.2)]
        dets = [det(0, 0.9, 0.5, 0.5, 0.2, 0.2)]
        assert average_precision(dets, truths) == 1.0

    def test_no_detections(self):
        assert average_precision([], [box(0, 0.5, 0.5, 0.2, 0.2)]) == 0.0

    def test_hand_case_matches_oracle(self):
        truths = [box(0, 0.3, 0.3, 0.2, 0.2), box(0, 0.7, 0.7, 0.2, 0.2)]
        dets = [det(0, 0.9, 0.3, 0.3, 0.2, 0.2),      # TP
                det(0, 0.8, 0.1, 0.9, 0.05, 0.05),    # FP
                det(0, 0.7, 0.7, 0.7, 0.2, 0.2)]      # TP
        ap = average_precision(dets, truths)
        assert ap == pytest.approx(brute_force_ap(dets, truths, 0.5), abs=1e-12)
        # rank 1: P=1, R=0.5; rank 3: P=2/3, R=1.0
        assert ap == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3))

    def test_randomized_oracle_equivalence(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            dets, truths = random_case(rng)
            for thr in (0.3, 0.5, 0.75):
                got = average_precision(dets, truths, thr)
                want = brute_force_ap(dets, truths, thr)
                assert got == pytest.approx(want, abs=1e-9)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            dets, truths = random_case(rng)
            aps = [average_precision(dets, truths, t)
                   for t in (0.3, 0.5, 0.7, 0.9)]
            assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))

    def test_duplicates_never_raise_ap(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            dets, truths = random_case(rng)
            base = average_precision(dets, truths)
            doubled = average_precision(dets + dets, truths)
            assert doubled <= base + 1e-12

    def test_score_scale_invariance(self):
        rng = np.random.default_rng(8)
        dets, truths = random_case(rng, n_det=15)
        scaled = [det(d.class_id, d.score * 0.37, d.cx, d.cy, d.w, d.h)
                  for d in dets]
        assert average_precision(scaled, truths) == \
            pytest.approx(average_precision(dets, truths), abs=1e-12)


class TestMeanAp:
    def test_perfect_single_class(self):
        truths = [[box(0, 0.5, 0.5, 0.2, 0.2)]]
        dets = [[det(0, 0.9, 0.5, 0.5, 0.2, 0.2)]]
        report = mean_ap(dets, truths)
        assert report.map50 == 1.0
        assert report.map50_90 == 1.0

    def test_two_class_hand_case(self):
        # class 0 detected perfectly, class 1 missed entirely -> mAP 0.5
        truths = [[box(0, 0.3, 0.3, 0.2, 0.2), box(1, 0.7, 0.7, 0.2, 0.2)]]
        dets = [[det(0, 0.9, 0.3, 0.3, 0.2, 0.2)]]
        report = mean_ap(dets, truths)
        assert report.per_class_ap50 == {0: 1.0, 1: 0.0}
        assert report.map50 == 0.5

    def test_map_is_mean_of_per_class(self):
        rng = np.random.default_rng(17)
        dets, truths = random_case(rng, n_classes=3)
        report = mean_ap([dets], [truths])
        classes = sorted(report.per_class_ap50)
        assert report.map50 == pytest.approx(
            np.mean([report.per_class_ap50[c] for c in classes]), abs=1e-12)

    def test_cross_check_second_implementation(self):
        # per-image, per-class matching re-derived from scratch
        rng = np.random.default_rng(23)
        dets_by_image, truths_by_image = [], []
        for _ in range(4):
            d, t = random_case(rng, n_det=8, n_truth=5, n_classes=2)
            dets_by_image.append(d)
            truths_by_image.append(t)
        report = mean_ap(dets_by_image, truths_by_image)

        classes = sorted({t.class_id for ts in truths_by_image for t in ts})
        ap50 = {}
        for cid in classes:
            # pool class detections across images, sort globally by score,
            # match each inside its own image
            pool = [(d.score, img, d) for img, ds in enumerate(dets_by_image)
                    for d in ds if d.class_id == cid]
            pool.sort(key=lambda x: -x[0])
            used = [set() for _ in truths_by_image]
            flags = []
            n_truth = sum(1 for ts in truths_by_image for t in ts
                          if t.class_id == cid)
            for score, img, d in pool:
                cand = [(j, t) for j, t in enumerate(truths_by_image[img])
                        if t.class_id == cid and j not in used[img]]
                best, best_j = 0.0, -1
                for j, t in cand:
                    v = iou(d, t)
                    if v > best:
                        best, best_j = v, j
                if best_j >= 0 and best >= 0.5:
                    used[img].add(best_j)
                    flags.append(True)
                else:
                    flags.append(False)
            # integrate the envelope by cutoff enumeration
            ap, r_prev = 0.0, 0.0
            for k in range(len(flags)):
                tp = sum(flags[:k + 1])
                prec_env = max((sum(flags[:m + 1]) / (m + 1)
                                for m in range(k, len(flags))))
                r = tp / n_truth if n_truth else 0.0
                ap += (r - r_prev) * prec_env
                r_prev = r
            ap50[cid] = ap
        for cid in classes:
            assert report.per_class_ap50[cid] == \
                pytest.approx(ap50[cid], abs=1e-9)

    def test_no_truth_classes_rejected(self):
        with pytest.raises(EvaluationError):
            mean_ap([[det(0, 0.5, 0.5, 0.5, 0.1, 0.1)]], [[]])


class TestPrecisionRecall:
    def test_threshold_filters_detections(self):
        truths = [[box(0, 0.5, 0.5, 0.2, 0.2)]]
        dets = [[det(0, 0.9, 0.5, 0.5, 0.2, 0.2),
                 det(0, 0.1, 0.1, 0.1, 0.1, 0.1)]]
        p, r = precision_recall(dets, truths, conf_threshold=0.25)
        assert (p, r) == (1.0, 1.0)
        p, r = precision_recall(dets, truths, conf_threshold=0.05)
        assert p == 0.5 and r == 1.0


class TestScenes:
    def test_empty_object_range(self):
        spec = SceneSpec(seed=1, min_objects=0, max_objects=0)
        img, truths = generate_scene(spec)
        assert truths == []
        assert img.shape == (3, 64, 64)

    def test_seed_determinism_byte_level(self, tmp_path):
        spec = SceneSpec(seed=7)
        for i in range(2):
            img, _ = generate_scene(spec)
            write_ppm(tmp_path / f"scene{i}.ppm", img)
        a = (tmp_path / "scene0.ppm").read_bytes()
        b = (tmp_path / "scene1.ppm").read_bytes()
        assert a == b

    def test_different_seeds_differ(self):
        img1, _ = generate_scene(SceneSpec(seed=1))
        img2, _ = generate_scene(SceneSpec(seed=2))
        assert not np.array_equal(img1, img2)

    def test_rasterization_audit(self):
        # every pixel an object touched must lie inside some truth box
        for seed in range(100):
            spec = SceneSpec(seed=seed, occlusion_prob=0.3)
            img, truths = generate_scene(spec)
            bg = _background(np.random.default_rng(seed), spec.image_size,
                             spec.clutter)
            changed = np.any(img != bg, axis=0)
            size = spec.image_size
            allowed = np.zeros_like(changed)
            for t in truths:
                x0 = int(np.floor((t.cx - t.w / 2) * size)) - 1
                x1 = int(np.ceil((t.cx + t.w / 2) * size)) + 1
                y0 = int(np.floor((t.cy - t.h / 2) * size)) - 1
                y1 = int(np.ceil((t.cy + t.h / 2) * size)) + 1
                allowed[max(y0, 0):y1, max(x0, 0):x1] = True
            assert not np.any(changed & ~allowed), f"stray pixels at seed {seed}"

    def test_size_range_validation(self):
        with pytest.raises(SpecError):
            SceneSpec(max_size_frac=1.5)


class TestDiskFormat:
    def test_ppm_round_trip(self, tmp_path):
        img, _ = generate_scene(SceneSpec(seed=3))
        path = tmp_path / "x.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        # quantization to 8 bits is the only loss
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12

    def test_annotation_round_trip(self, tmp_path):
        truths = [box(1, 0.5, 0.25, 0.1, 0.2), box(0, 0.75, 0.75, 0.05, 0.05)]
        path = tmp_path / "x.txt"
        write_annotations(path, truths)
        back = read_annotations(path)
        assert [b.class_id for b in back] == [1, 0]
        assert back[0].cx == pytest.approx(0.5, abs=1e-6)

    def test_zero_area_box_rejected_at_load(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 0.5 0.5 0.0 0.1\n")
        with pytest.raises(DatasetError):
            read_annotations(path)

    def test_dataset_round_trip(self, tmp_path):
        generate_dataset(tmp_path / "ds", 3, SceneSpec(seed=0))
        scenes = load_dataset(tmp_path / "ds")
        assert len(scenes) == 3
        img, truths = scenes[0]
        assert img.shape == (3, 64, 64)
        assert all(isinstance(t, GroundTruthBox) for t in truths)
