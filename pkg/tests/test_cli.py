import json
from pathlib import Path

import pytest

from phenopipe import ml, sheet
from phenopipe.cli import eval_ocr, main
from phenopipe.raster import load_gray, save_png
from phenopipe.sheet import ResultsSheet, SheetRow

from synth import GRAY_BG, blank, ellipse_mask, paint


@pytest.fixture
def images(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    texts = {"a": "C B1 R2 P3 BESC-10", "b": "D B2 R4 P5 BESC-11", "c": ""}
    for name, text in texts.items():
        img = blank(160, 120, GRAY_BG)
        paint(img, ellipse_mask(160, 120, (80, 60), (30, 22)), (110, 180, 50))
        save_png(d / f"{name}.png", img)
        (d / f"{name}.txt").write_text(text + "\n")
    return d


def test_read_labels_stub(images, tmp_path):
    out = tmp_path / "sheet.csv"
    assert main(["read-labels", "--images", str(images), "--ocr-stub", str(images), "--out", str(out)]) == 0
    loaded = sheet.read_sheet(out)
    rows = loaded.by_filename()
    assert rows["a.png"].treatment == "C"
    assert rows["b.png"].block == 2
    assert rows["c.png"].treatment is None


def test_read_labels_requires_backend(images, tmp_path):
    rc = main(["read-labels", "--images", str(images), "--out", str(tmp_path / "s.csv")])
    assert rc == 2


def test_missing_images_dir_is_data_error(tmp_path):
    rc = main(["read-labels", "--images", str(tmp_path / "none"), "--ocr-stub", ".", "--out", str(tmp_path / "s.csv")])
    assert rc == 2


def test_usage_error_exit_code():
    assert main(["locate"]) == 1  # missing required flags
    assert main(["no-such-command"]) == 1


def test_locate_writes_jsonl(images, tmp_path):
    out = tmp_path / "candidates.jsonl"
    assert main(["locate", "--images", str(images), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    for line in lines:
        obj = json.loads(line)
        assert set(obj) == {"filename", "candidates"}
        for cand in obj["candidates"]:
            assert set(cand) == {"bbox", "midpoint", "mean_green", "area"}


def test_segment_and_crops(images, tmp_path):
    candidates = tmp_path / "candidates.jsonl"
    masks = tmp_path / "masks"
    crops = tmp_path / "crops"
    assert main(["locate", "--images", str(images), "--out", str(candidates)]) == 0
    assert main([
        "segment", "--images", str(images), "--candidates", str(candidates),
        "--masks-dir", str(masks), "--predictor", "regiongrow", "--seed", "3",
    ]) == 0
    mask_files = sorted(masks.glob("*.png"))
    assert len(mask_files) == 3
    composite = load_gray(mask_files[0])
    assert composite.max() > 0
    assert main(["crops", "--images", str(images), "--masks-dir", str(masks), "--out-dir", str(crops)]) == 0
    crop_files = sorted(crops.glob("*.png"))
    assert crop_files, "no crops emitted"
    for crop in crop_files:
        stem, leaf_id = crop.stem.rsplit("_", 1)
        assert stem in ("a", "b", "c")
        assert leaf_id.isdigit()


def test_unknown_predictor_is_usage_like_error(images, tmp_path):
    rc = main([
        "segment", "--images", str(images), "--candidates", str(tmp_path / "x.jsonl"),
        "--masks-dir", str(tmp_path / "m"), "--predictor", "teleport",
    ])
    assert rc == 2


def _treatment_sheet(tmp_path):
    rows = []
    splotches = ("none", "low", "medium", "high")
    for i in range(20):
        s = splotches[i % 4]
        rows.append(SheetRow(
            filename=f"r{i}.png",
            treatment=("C" if s in ("none", "low") else "D") if i != 7 else None,
            leaf_color="light_green",
            leaf_shape="ovate",
            brown_splotches=s,
        ))
    path = tmp_path / "in.csv"
    sheet.write_sheet(ResultsSheet(rows), path)
    return path


def test_train_and_predict_treatment_cli(tmp_path):
    sheet_path = _treatment_sheet(tmp_path)
    model_path = tmp_path / "tmodel.json"
    out_path = tmp_path / "final.csv"
    assert main(["train", "treatment", "--sheet", str(sheet_path), "--out", str(model_path), "--trees", "20"]) == 0
    saved = json.loads(model_path.read_text())
    assert saved["format"] == "phenopipe-model-v1"
    assert main(["predict-treatment", "--sheet", str(sheet_path), "--model", str(model_path), "--out", str(out_path)]) == 0
    filled = sheet.read_sheet(out_path)
    flags = [r.treatment_source for r in filled]
    assert flags.count("predicted") == 1
    assert filled.rows[7].treatment == "D"  # splotches high


def test_train_treatment_needs_sheet(tmp_path):
    assert main(["train", "treatment", "--out", str(tmp_path / "m.json")]) == 2


def test_info_output(tmp_path, capsys):
    sheet_path = _treatment_sheet(tmp_path)
    assert main(["info", "--sheet", str(sheet_path)]) == 0
    out = capsys.readouterr().out
    assert "RangeIndex: 20 entries" in out
    assert "treatment" in out


def test_eval_ocr_identical(tmp_path):
    rows = [SheetRow(f"f{i}.png", "C", 1, i, 3, "BESC-1") for i in range(4)]
    path = tmp_path / "full.csv"
    sheet.write_sheet(ResultsSheet(rows), path)
    assert eval_ocr(path, path) == (1.0, 1.0, 1.0)


def test_eval_ocr_hand_counted(tmp_path):
    truth_rows = [SheetRow(f"f{i}.png", "C", 1, 2, 3, "BESC-1") for i in range(4)]
    pred_rows = [SheetRow(f"f{i}.png", "C", 1, 2, 3, "BESC-1") for i in range(4)]
    pred_rows[0].genotype = None  # one null among 20 fields
    truth, pred = tmp_path / "t.csv", tmp_path / "p.csv"
    sheet.write_sheet(ResultsSheet(truth_rows), truth)
    sheet.write_sheet(ResultsSheet(pred_rows), pred)
    with_nulls, without_nulls, fraction = eval_ocr(truth, pred)
    assert with_nulls == pytest.approx(0.95)
    assert without_nulls == pytest.approx(1.0)
    assert fraction == 1.0


def test_eval_ocr_filename_mismatch(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    sheet.write_sheet(ResultsSheet([SheetRow("x.png")]), a)
    sheet.write_sheet(ResultsSheet([SheetRow("y.png")]), b)
    assert main(["eval", "ocr", str(a), str(b)]) == 2


def test_eval_ocr_random_vs_loop_oracle(tmp_path):
    import random

    rng = random.Random(3)
    fields = ("treatment", "block", "row", "position", "genotype")
    truth_rows, pred_rows = [], []
    for i in range(30):
        t = SheetRow(f"f{i}.png", rng.choice(["C", "D"]), rng.randrange(5), rng.randrange(5), rng.randrange(5), "AB-1")
        p = SheetRow(
            f"f{i}.png",
            rng.choice(["C", "D", None]),
            rng.choice([None, t.block]),
            rng.choice([None, t.row, 9]),
            t.position,
            rng.choice([None, "AB-1"]),
        )
        truth_rows.append(t)
        pred_rows.append(p)
    truth, pred = tmp_path / "t.csv", tmp_path / "p.csv"
    sheet.write_sheet(ResultsSheet(truth_rows), truth)
    sheet.write_sheet(ResultsSheet(pred_rows), pred)
    with_nulls, without_nulls, fraction = eval_ocr(truth, pred)

    matches = non_null = total = read = 0
    for t, p in zip(truth_rows, pred_rows):
        any_field = False
        for f in fields:
            total += 1
            pv, tv = p.get(f), t.get(f)
            if pv is not None:
                non_null += 1
                any_field = True
                if pv == tv:
                    matches += 1
        read += any_field
    assert with_nulls == pytest.approx(matches / total)
    assert without_nulls == pytest.approx(matches / non_null)
    assert fraction == pytest.approx(read / 30)


def test_exif_outputs(images, tmp_path):
    out, gps, report = tmp_path / "exif.csv", tmp_path / "gps.csv", tmp_path / "report.txt"
    assert main(["exif", "--images", str(images), "--out", str(out), "--gps-out", str(gps), "--report", str(report)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 4  # header + 3 all-null rows (PNGs carry no EXIF)
    assert gps.read_text().splitlines()[-1] == "# bbox none"
    assert "not estimable" in report.read_text()


def test_run_all_empty_dir(tmp_path):
    images = tmp_path / "empty"
    images.mkdir()
    out = tmp_path / "run"
    rc = main(["run-all", "--images", str(images), "--out-dir", str(out), "--ocr-stub", str(images)])
    assert rc == 0
    final = (out / "final.csv").read_text()
    assert final == ",".join(sheet.COLUMNS) + "\n"
    gps_lines = (out / "gps.csv").read_text().splitlines()
    assert gps_lines == ["filename,latitude,longitude", "# bbox none"]
    assert json.loads((out / "manifest.json").read_text())["seed"] == 0


def test_run_all_requires_dirs(tmp_path):
    assert main(["run-all", "--out-dir", str(tmp_path / "x")]) == 1


def test_run_all_stage_failure_names_stage(tmp_path, capsys):
    images = tmp_path / "imgs"
    images.mkdir()
    save_png(images / "a.png", blank(10, 10))
    (images / "a.txt").write_text("C B1\n")
    out = tmp_path / "run"
    rc = main([
        "run-all", "--images", str(images), "--out-dir", str(out),
        "--ocr-stub", str(images), "--treat-model", str(tmp_path / "missing.json"),
    ])
    assert rc == 3
    err = capsys.readouterr().err
    assert "stage predict-treatment failed" in err
    # earlier artifacts are retained
    assert (out / "sheet.csv").exists()
    assert (out / "manifest.json").exists()
