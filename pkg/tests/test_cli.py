import json
from pathlib import Path

from pairbox.cli import main
from pairbox.evaluation import FrameDetections
from pairbox.formats import (
    Dataset,
    read_dataset,
    read_detections,
    write_dataset,
    write_detections,
)
from pairbox.evaluation import FrameAnnotations
from pairbox.pairnms import Detection

from scenes import det_at, gt

SAMPLE = Path(__file__).parent / "data" / "sample_dataset.jsonl"


def gt_as_detections(dataset_path, out_path):
    ds = read_dataset(dataset_path)
    dets = [
        FrameDetections(f.frame_id, tuple(Detection(o.pair, 1.0) for o in f.objects))
        for f in ds.frames
    ]
    write_detections(dets, out_path)
    return dets


class TestEvaluateCommand:
    def test_gt_as_detections_all_zero(self, tmp_path, capsys):
        det_path = tmp_path / "dets.jsonl"
        gt_as_detections(SAMPLE, det_path)
        rc = main(["evaluate", str(SAMPLE), str(det_path)])
        out = capsys.readouterr().out
        assert rc == 0
        rows = out.strip().splitlines()
        assert rows[0].startswith("variant")
        assert len(rows) == 7
        assert all("0.0000" in r for r in rows[1:])

    def test_writes_table_csv_and_svg(self, tmp_path):
        det_path = tmp_path / "dets.jsonl"
        gt_as_detections(SAMPLE, det_path)
        out_dir = tmp_path / "out"
        rc = main([
            "evaluate", str(SAMPLE), str(det_path),
            "--out", str(out_dir), "--format", "svg",
        ])
        assert rc == 0
        assert (out_dir / "eval_table.txt").exists()
        csv_text = (out_dir / "eval_curves.csv").read_text(encoding="utf-8")
        assert csv_text.startswith("variant,iou_thresh,score_thresh,fppi,miss_rate\n")
        svg = (out_dir / "eval_curves.svg").read_text(encoding="utf-8")
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    def test_fixture_table_matches_hand_computed_mr(self, tmp_path, capsys):
        from scenes import FOUR_FRAME_LAMR, four_frame_fixture

        anns, dets = four_frame_fixture()
        gt_path = tmp_path / "gt.jsonl"
        det_path = tmp_path / "dets.jsonl"
        write_dataset(Dataset(frames=tuple(anns)), gt_path)
        write_detections(dets, det_path)
        rc = main(["evaluate", str(gt_path), str(det_path)])
        assert rc == 0
        out = capsys.readouterr().out
        expected = f"{FOUR_FRAME_LAMR:.4f}"  # 0.5291
        assert out.count(expected) == 6

    def test_missing_detection_file_exits_2(self, tmp_path, capsys):
        rc = main(["evaluate", str(SAMPLE), str(tmp_path / "nope.jsonl")])
        assert rc == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_no_evaluable_gts_exits_1(self, tmp_path, capsys):
        ds_path = tmp_path / "short.jsonl"
        frames = (FrameAnnotations(0, (gt(10, 10, h=30),)),)
        write_dataset(Dataset(frames=frames), ds_path)
        det_path = tmp_path / "dets.jsonl"
        gt_as_detections(ds_path, det_path)
        rc = main(["evaluate", str(ds_path), str(det_path)])
        assert rc == 1
        assert "evaluable" in capsys.readouterr().err

    def test_unknown_frame_exits_1(self, tmp_path, capsys):
        det_path = tmp_path / "dets.jsonl"
        write_detections([FrameDetections("ghost", (det_at(0, 0, 0.5),))], det_path)
        rc = main(["evaluate", str(SAMPLE), str(det_path)])
        assert rc == 1
        assert "ghost" in capsys.readouterr().err


class TestNmsCommand:
    def test_duplicate_thermal_boxes_one_survivor(self, tmp_path, capsys):
        det_path = tmp_path / "dets.jsonl"
        dets = [
            FrameDetections(
                0,
                (
                    Detection(det_at(100, 100, 0.9).pair, 0.9),
                    Detection(det_at(100, 100, 0.8).pair, 0.8),
                ),
            )
        ]
        write_detections(dets, det_path)
        out_path = tmp_path / "kept.jsonl"
        rc = main(["nms", str(det_path), "--iou-thresh", "0.5", "--out", str(out_path)])
        assert rc == 0
        kept = read_detections(out_path)
        assert len(kept[0].detections) == 1
        assert kept[0].detections[0].score == 0.9


class TestAssignCommand:
    def test_anchor_at_070_is_positive(self, tmp_path):
        ds_path = tmp_path / "gt.jsonl"
        # GT box (0,0,17,10); anchor (3,0,17,10) overlaps at exactly 14/20 = 0.7
        frames = (FrameAnnotations(0, (gt(0, 0, w=17, h=70),)),)
        write_dataset(Dataset(frames=frames), ds_path)
        anchors_path = tmp_path / "anchors.json"
        anchors_path.write_text(
            json.dumps(
                {
                    "anchors": [
                        {"v": [3, 0, 17, 70], "t": [3, 0, 17, 70]},
                        {"v": [300, 300, 17, 70], "t": [300, 300, 17, 70]},
                    ]
                }
            ),
            encoding="utf-8",
        )
        out_path = tmp_path / "labels.jsonl"
        rc = main([
            "assign", str(ds_path), "--anchors", str(anchors_path), "--out", str(out_path),
        ])
        assert rc == 0
        record = json.loads(out_path.read_text(encoding="utf-8").splitlines()[0])
        assert record["labels"] == [1, 0]
        assert record["matched_gt"] == [0, -1]
        assert record["max_ioum"][0] == 0.7

    def test_sampling_deterministic(self, tmp_path):
        ds_path = tmp_path / "gt.jsonl"
        frames = (FrameAnnotations(0, (gt(100, 100, w=20, h=70),)),)
        write_dataset(Dataset(frames=frames), ds_path)
        outs = []
        for name in ("a.jsonl", "b.jsonl"):
            out_path = tmp_path / name
            rc = main([
                "assign", str(ds_path), "--out", str(out_path),
                "--sample-batch", "32", "--seed", "11",
            ])
            assert rc == 0
            outs.append(out_path.read_bytes())
        assert outs[0] == outs[1]
        record = json.loads(outs[0].decode().splitlines()[0])
        assert "selected" in record
        assert len(record["selected"]) <= 32


class TestGenerateCommand:
    def test_seeded_runs_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for p in (p1, p2):
            rc = main([
                "generate", "--frames", "12", "--seed", "7",
                "--misalign", "-4", "4", "--out", str(p),
            ])
            assert rc == 0
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seed_differs(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        main(["generate", "--frames", "12", "--seed", "7", "--out", str(p1)])
        main(["generate", "--frames", "12", "--seed", "8", "--out", str(p2)])
        assert p1.read_bytes() != p2.read_bytes()

    def test_output_parses_as_dataset(self, tmp_path):
        p = tmp_path / "ds.jsonl"
        main(["generate", "--frames", "6", "--seed", "1", "--name", "demo", "--out", str(p)])
        ds = read_dataset(p)
        assert ds.meta.name == "demo"
        assert len(ds.frames) == 6


class TestShiftSweepCommand:
    def test_paired_mock_constant_zero(self, tmp_path, capsys):
        ds_path = tmp_path / "gt.jsonl"
        main([
            "generate", "--frames", "20", "--seed", "3", "--width", "30",
            "--out", str(ds_path),
        ])
        rc = main([
            "shift-sweep", str(ds_path), "--shift", "0", "5", "10", "15", "20",
            "--mock", "paired", "--seed", "5",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        rows = out.strip().splitlines()[1:]
        assert len(rows) == 5
        for row in rows:
            cells = row.split()
            assert cells[1] == "0.0000"
            assert cells[2] == "0.0000"

    def test_single_box_mock_saturates(self, tmp_path, capsys):
        ds_path = tmp_path / "gt.jsonl"
        main([
            "generate", "--frames", "20", "--seed", "3", "--width", "30",
            "--out", str(ds_path),
        ])
        rc = main([
            "shift-sweep", str(ds_path), "--shift", "20", "--mock", "single_box",
            "--iou-thresh", "0.7", "--format", "csv",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "shift_dx,iou_thresh,lamr"
        assert out.splitlines()[1] == "20,0.7,1"

    def test_writes_output_files(self, tmp_path):
        ds_path = tmp_path / "gt.jsonl"
        main(["generate", "--frames", "8", "--seed", "3", "--out", str(ds_path)])
        out_dir = tmp_path / "sweep"
        rc = main([
            "shift-sweep", str(ds_path), "--shift", "0", "10",
            "--out", str(out_dir),
        ])
        assert rc == 0
        assert (out_dir / "shift_sweep.txt").exists()
        csv_lines = (out_dir / "shift_sweep.csv").read_text(encoding="utf-8").splitlines()
        assert csv_lines[0] == "shift_dx,iou_thresh,lamr"
        assert len(csv_lines) == 1 + 2 * 2

    def test_dets_pattern_loads_files(self, tmp_path, capsys):
        ds_path = tmp_path / "gt.jsonl"
        main(["generate", "--frames", "5", "--seed", "3", "--out", str(ds_path)])
        for dx in (0, 10):
            from pairbox.simulation import ShiftSpec, apply_shift

            ds = read_dataset(ds_path)
            shifted = apply_shift(ds.frames, ShiftSpec(float(dx)))
            dets = [
                FrameDetections(f.frame_id, tuple(Detection(o.pair, 1.0) for o in f.objects))
                for f in shifted
            ]
            write_detections(dets, tmp_path / f"dets_{dx}.jsonl")
        rc = main([
            "shift-sweep", str(ds_path), "--shift", "0", "10",
            "--dets-pattern", str(tmp_path / "dets_{dx}.jsonl"), "--format", "csv",
        ])
        assert rc == 0
        for line in capsys.readouterr().out.splitlines()[1:]:
            assert line.endswith(",0")


class TestLossesCommand:
    def _write_samples(self, tmp_path):
        payload = {
            "rpn": {
                "cfg": {"lambda": 1.0, "n_cls": 2, "n_reg": 2},
                "samples": [
                    {
                        "logit": 0.0, "label": 1,
                        "pred_v": [0.5, 0, 0, 0], "pred_t": [0, 0, 0, 0],
                        "target_v": [0, 0, 0, 0], "target_t": [0, 0, 0, 0],
                    },
                    {"logit": -1.0, "label": 0},
                ],
            },
            "detector": {
                "lambda": 1.0,
                "samples": [
                    {
                        "scores": [0.0, 0.0], "true_class": 1,
                        "pred_v": [0.5, 0, 0, 0], "pred_t": [0, 0, 0, 0],
                        "target_v": [0, 0, 0, 0], "target_t": [0, 0, 0, 0],
                    }
                ],
            },
        }
        p = tmp_path / "samples.json"
        p.write_text(json.dumps(payload), encoding="utf-8")
        return p

    def test_values_and_grad_check(self, tmp_path, capsys):
        p = self._write_samples(tmp_path)
        rc = main(["losses", str(p), "--grad-check"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "detector_loss[0] 0.818147181" in out
        assert "rpn_loss" in out
        for line in out.splitlines():
            if line.startswith("grad_check"):
                err = float(line.rsplit("max_abs_err=", 1)[1])
                assert err < 1e-6

    def test_malformed_file_exits_2(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{oops", encoding="utf-8")
        rc = main(["losses", str(p)])
        assert rc == 2

    def test_out_file_written(self, tmp_path):
        p = self._write_samples(tmp_path)
        out = tmp_path / "losses.txt"
        rc = main(["losses", str(p), "--out", str(out)])
        assert rc == 0
        assert "rpn_loss" in out.read_text(encoding="utf-8")
