"""The ``pheno`` command line tool.

Every pipeline stage is an individual subcommand, and ``run-all`` composes
them over one run directory with a manifest that makes the run
reproducible. Exit codes: 0 success, 1 usage error, 2 data/schema error,
3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import exifmeta, locator, ml, morphology, ocr, raster, segment, sheet, treatment
from .annotate import AnnotationService, make_server
from .errors import ModelError, PhenoError, SchemaError, StageError
from .labels import LabelRecord
from .sheet import ResultsSheet, SheetRow

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _iter_images(images_dir) -> list[Path]:
    images_dir = Path(images_dir)
    if not images_dir.is_dir():
        raise SchemaError(f"image directory not found: {images_dir}")
    return sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _backend_provider(args):
    if getattr(args, "ocr_stub", None):
        return ocr.stub_backend_provider(args.ocr_stub)
    if getattr(args, "ocr_model", None):
        return ocr.model_backend_provider(args.ocr_model)
    raise SchemaError("an OCR backend is required: pass --ocr-stub DIR or --ocr-model PATH")


def _make_predictor(spec: str, tolerance: float) -> segment.MaskPredictor:
    if spec == "regiongrow":
        return segment.RegionGrowPredictor(tolerance)
    if spec.startswith("model:"):
        paths = spec[len("model:") :].split(",")
        if len(paths) != 2:
            raise SchemaError("--predictor model: expects <encoder.onnx>,<decoder.onnx>")
        return segment.OnnxMaskPredictor(paths[0], paths[1])
    raise SchemaError(f"unknown predictor {spec!r}; use 'regiongrow' or 'model:enc,dec'")


def _record_to_row(record: LabelRecord) -> SheetRow:
    return SheetRow(
        filename=record.filename,
        treatment=record.treatment,
        block=record.block,
        row=record.row,
        position=record.position,
        genotype=record.genotype,
    )


# --- stage implementations, shared by subcommands and run-all ---


def stage_read_labels(images_dir, out_path, args) -> ResultsSheet:
    paths = _iter_images(images_dir)
    provider = _backend_provider(args)
    records, results = ocr.read_labels_batch(
        paths,
        provider,
        jobs=args.jobs,
        threshold_block=args.threshold_block,
        threshold_offset=args.threshold_offset,
    )
    for result in results:
        if result.error:
            print(f"warning: {result.filename}: {result.error}", file=sys.stderr)
    out = ResultsSheet([_record_to_row(r) for r in records])
    sheet.write_sheet(out, out_path)
    return out


def _locator_config(args) -> locator.LocatorConfig:
    hsv = locator.HsvRange(*args.hsv) if args.hsv else locator.HsvRange()
    return locator.LocatorConfig(
        hsv=hsv,
        edge_lo=args.edge_lo,
        edge_hi=args.edge_hi,
        dilate_kernel=args.dilate_kernel,
        dilate_iterations=args.dilate_iterations,
        min_frac=args.min_frac,
        min_green=args.min_green,
    )


def stage_locate(images_dir, out_path, cfg) -> None:
    with open(out_path, "w", encoding="utf-8") as fh:
        for path in _iter_images(images_dir):
            candidates = locator.find_candidates(raster.load_rgb(path), cfg)
            fh.write(
                json.dumps(
                    {
                        "filename": path.name,
                        "candidates": [locator.candidate_to_json(c) for c in candidates],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def _load_candidates(path) -> dict[str, list[locator.LeafCandidate]]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[obj["filename"]] = [locator.candidate_from_json(c) for c in obj["candidates"]]
    return out


def stage_segment(images_dir, candidates_path, masks_dir, predictor, seed) -> None:
    by_name = _load_candidates(candidates_path)
    masks_dir = Path(masks_dir)
    masks_dir.mkdir(parents=True, exist_ok=True)
    for path in _iter_images(images_dir):
        candidates = by_name.get(path.name, [])
        image = raster.load_rgb(path)
        composite = segment.segment_image(image, candidates, predictor, seed, path.name)
        for index, message in composite.errors:
            print(f"warning: {path.name}: candidate {index}: {message}", file=sys.stderr)
        raster.save_png(masks_dir / (path.stem + ".png"), composite.raster)


def stage_crops(images_dir, masks_dir, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    masks_dir = Path(masks_dir)
    for path in _iter_images(images_dir):
        mask_path = masks_dir / (path.stem + ".png")
        if not mask_path.exists():
            continue
        composite_raster = raster.load_gray(mask_path)
        values = sorted(int(v) for v in np.unique(composite_raster) if v)
        composite = segment.CompositeMask(
            raster=composite_raster, leaf_ids={v: i for i, v in enumerate(values)}
        )
        image = raster.load_rgb(path)
        for value in values:
            leaf = segment.isolate_leaf(image, composite, value, path.name)
            raster.save_png(out_dir / f"{path.stem}_{value}.png", leaf.crop)


def leaf_from_crop_png(path) -> segment.IsolatedLeaf:
    """Rebuild an IsolatedLeaf from a crop PNG: mask = non-black pixels."""
    crop = raster.load_rgb(path)
    mask = crop.any(axis=2)
    return segment.IsolatedLeaf(crop=crop, mask_crop=mask, source=(Path(path).name, 0), angle=0.0)


def _crops_for_stem(crops_dir: Path, stem: str) -> list[Path]:
    return sorted(p for p in crops_dir.glob(f"{stem}_*.png") if p.name.rsplit("_", 1)[0] == stem)


def stage_classify(sheet_in, crops_dir, suit_model, morph_model, out_path) -> ResultsSheet:
    data = sheet.read_sheet(sheet_in)
    crops_dir = Path(crops_dir)
    rows = []
    for row in data:
        stem = Path(row.filename).stem
        leaves = [leaf_from_crop_png(p) for p in _crops_for_stem(crops_dir, stem)]
        label = morphology.label_for_image(leaves, suit_model, morph_model) if leaves else None
        row = replace(row)
        if label is not None:
            row.leaf_color = label.color
            row.leaf_shape = label.shape
            row.brown_splotches = label.splotches
        rows.append(row)
    out = ResultsSheet(rows)
    sheet.write_sheet(out, out_path)
    return out


def stage_predict_treatment(sheet_in, model_path, out_path) -> ResultsSheet:
    data = sheet.read_sheet(sheet_in)
    model = ml.load_model(model_path)
    filled = treatment.fill_treatments(data, model)
    sheet.write_sheet(filled, out_path)
    return filled


def stage_exif(images_dir, out_path, gps_path, report_path) -> None:
    records = [exifmeta.read_exif(p) for p in _iter_images(images_dir)]
    for record in records:
        record.filename = Path(record.filename).name
    header = (
        "filename,width_px,height_px,x_resolution,y_resolution,focal_length_mm,"
        "focal_plane_x_res,focal_plane_y_res,focal_plane_unit,subject_distance_m,"
        "latitude_deg,longitude_deg"
    )
    lines = [header]
    for r in records:
        cells = [
            r.filename,
            r.width_px,
            r.height_px,
            r.x_resolution,
            r.y_resolution,
            r.focal_length_mm,
            r.focal_plane_x_res,
            r.focal_plane_y_res,
            r.focal_plane_unit,
            r.subject_distance_m,
            None if r.latitude_deg is None else repr(r.latitude_deg),
            None if r.longitude_deg is None else repr(r.longitude_deg),
        ]
        lines.append(",".join("" if c is None else str(c) for c in cells))
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if gps_path:
        Path(gps_path).write_text(exifmeta.render_gps_csv(records), encoding="utf-8")
    if report_path:
        report = exifmeta.build_feasibility_report(records)
        Path(report_path).write_text(exifmeta.render_report(report), encoding="utf-8")


def eval_ocr(truth_path, pred_path) -> tuple[float, float, float]:
    """Field-level accuracy with and without nulls, plus fraction read."""
    truth = sheet.read_sheet(truth_path).by_filename()
    pred = sheet.read_sheet(pred_path).by_filename()
    if set(truth) != set(pred):
        raise SchemaError("truth and prediction filename sets differ")
    fields = ("treatment", "block", "row", "position", "genotype")
    truth_values, pred_values = [], []
    read_count = 0
    for name in sorted(truth):
        t_row, p_row = truth[name], pred[name]
        row_values = [p_row.get(f) for f in fields]
        if any(v is not None for v in row_values):
            read_count += 1
        truth_values.extend(t_row.get(f) for f in fields)
        pred_values.extend(row_values)
    with_nulls = ml.accuracy_score(truth_values, pred_values, skip_nulls=False)
    without_nulls = ml.accuracy_score(truth_values, pred_values, skip_nulls=True)
    return with_nulls, without_nulls, read_count / len(truth) if truth else 0.0


# --- label-store training helpers ---


def _load_store_records(store_path, task):
    records = []
    with open(store_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                if record["task"] == task:
                    records.append(record)
    return records


def train_suitability(store_path, crops_dir, out_path, n_trees, seed) -> None:
    records = _load_store_records(store_path, "suitability")
    rows, flags = [], []
    for record in records:
        crop = Path(crops_dir) / f"{record['crop_id']}.png"
        rows.append(morphology.extract_features(leaf_from_crop_png(crop)))
        flags.append(bool(record["labels"]["good"]))
    if len(rows) < 2:
        raise ModelError("need at least 2 suitability labels to train")
    ds = morphology.build_suitability_dataset(rows, flags)
    model = ml.fit(ds, "bagged", {"n_trees": n_trees}, seed, morphology.suitability_encoder())
    ml.save_model(model, out_path)


def train_morphology(store_path, crops_dir, out_path, n_rounds, seed) -> None:
    records = _load_store_records(store_path, "morphology")
    rows, labels = [], []
    for record in records:
        crop = Path(crops_dir) / f"{record['crop_id']}.png"
        rows.append(morphology.extract_features(leaf_from_crop_png(crop)))
        labels.append(morphology.MorphologyLabel(**record["labels"]))
    if len(rows) < 2:
        raise ModelError("need at least 2 morphology labels to train")
    ds = morphology.build_morphology_dataset(rows, labels)
    model = ml.fit_multi(
        ds, "boosted", {"n_rounds": n_rounds}, seed, morphology.morphology_encoders()
    )
    ml.save_model(model, out_path)


# --- run-all ---

RUN_ALL_DEFAULTS = {
    "images": None,
    "out_dir": None,
    "ocr_stub": None,
    "ocr_model": None,
    "predictor": "regiongrow",
    "tolerance": 0.12,
    "suit_model": None,
    "morph_model": None,
    "treat_model": None,
    "seed": 0,
    "jobs": 1,
    "threshold_block": ocr.THRESHOLD_BLOCK,
    "threshold_offset": ocr.THRESHOLD_OFFSET,
    "edge_lo": 50.0,
    "edge_hi": 150.0,
    "dilate_kernel": 9,
    "dilate_iterations": 3,
    "min_frac": 0.05,
    "min_green": 100.0,
    "hsv": None,
}


def run_all(config: dict) -> None:
    images = config["images"]
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", "utf-8")

    args = argparse.Namespace(**config)

    def run_stage(name, fn, *fn_args):
        try:
            return fn(*fn_args)
        except Exception as exc:
            raise StageError(f"stage {name} failed: {exc}") from exc

    sheet_path = out_dir / "sheet.csv"
    run_stage("read-labels", stage_read_labels, images, sheet_path, args)
    run_stage("locate", stage_locate, images, out_dir / "candidates.jsonl", _locator_config(args))
    predictor = _make_predictor(config["predictor"], config["tolerance"])
    run_stage(
        "segment",
        stage_segment,
        images,
        out_dir / "candidates.jsonl",
        out_dir / "masks",
        predictor,
        config["seed"],
    )
    run_stage("crops", stage_crops, images, out_dir / "masks", out_dir / "crops")

    classified_path = out_dir / "classified.csv"
    if config["suit_model"] and config["morph_model"]:
        suit = ml.load_model(config["suit_model"])
        morph = ml.load_model(config["morph_model"])
        run_stage(
            "classify", stage_classify, sheet_path, out_dir / "crops", suit, morph, classified_path
        )
    else:
        classified_path = sheet_path

    final_path = out_dir / "final.csv"
    if config["treat_model"]:
        run_stage(
            "predict-treatment", stage_predict_treatment, classified_path, config["treat_model"], final_path
        )
    else:
        final_path.write_bytes(Path(classified_path).read_bytes())

    run_stage(
        "exif", stage_exif, images, out_dir / "exif.csv", out_dir / "gps.csv", out_dir / "report.txt"
    )


# --- argument parsing ---


def _add_locator_flags(p):
    p.add_argument("--edge-lo", type=float, default=50.0)
    p.add_argument("--edge-hi", type=float, default=150.0)
    p.add_argument("--dilate-kernel", type=int, default=9)
    p.add_argument("--dilate-iterations", type=int, default=3)
    p.add_argument("--min-frac", type=float, default=0.05)
    p.add_argument("--min-green", type=float, default=100.0)
    p.add_argument(
        "--hsv",
        type=lambda s: tuple(float(x) for x in s.split(",")),
        default=None,
        metavar="H_LO,H_HI,S_LO,S_HI,V_LO,V_HI",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="pheno", description=__doc__)
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--config", default=None, help="JSON manifest with option defaults")

    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("read-labels", parents=[common])
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ocr-stub", default=None)
    p.add_argument("--ocr-model", default=None)
    p.add_argument("--threshold-block", type=int, default=ocr.THRESHOLD_BLOCK)
    p.add_argument("--threshold-offset", type=float, default=ocr.THRESHOLD_OFFSET)

    p = sub.add_parser("locate", parents=[common])
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    _add_locator_flags(p)

    p = sub.add_parser("segment", parents=[common])
    p.add_argument("--images", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--predictor", default="regiongrow")
    p.add_argument("--tolerance", type=float, default=0.12)

    p = sub.add_parser("crops", parents=[common])
    p.add_argument("--images", required=True)
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("annotate", parents=[common])
    p.add_argument("--crops", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--ui", default=None)

    p = sub.add_parser("train", parents=[common])
    p.add_argument("target", choices=["suitability", "morphology", "treatment"])
    p.add_argument("--labels", default=None)
    p.add_argument("--crops", default=None)
    p.add_argument("--sheet", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--rounds", type=int, default=100)

    p = sub.add_parser("classify", parents=[common])
    p.add_argument("--suit-model", required=True)
    p.add_argument("--morph-model", required=True)
    p.add_argument("--crops", required=True)
    p.add_argument("--sheet", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict-treatment", parents=[common])
    p.add_argument("--sheet", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("exif", parents=[common])
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gps-out", default=None)
    p.add_argument("--report", default=None)

    p = sub.add_parser("eval", parents=[common])
    p.add_argument("what", choices=["ocr"])
    p.add_argument("truth")
    p.add_argument("pred")

    p = sub.add_parser("info", parents=[common])
    p.add_argument("--sheet", required=True)

    p = sub.add_parser("run-all", parents=[common])
    p.add_argument("--images", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--ocr-stub", default=None)
    p.add_argument("--ocr-model", default=None)
    p.add_argument("--predictor", default=None)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--suit-model", default=None)
    p.add_argument("--morph-model", default=None)
    p.add_argument("--treat-model", default=None)
    p.add_argument("--threshold-block", type=int, default=None)
    p.add_argument("--threshold-offset", type=float, default=None)
    p.add_argument("--edge-lo", type=float, default=None)
    p.add_argument("--edge-hi", type=float, default=None)
    p.add_argument("--dilate-kernel", type=int, default=None)
    p.add_argument("--dilate-iterations", type=int, default=None)
    p.add_argument("--min-frac", type=float, default=None)
    p.add_argument("--min-green", type=float, default=None)
    p.add_argument(
        "--hsv", type=lambda s: tuple(float(x) for x in s.split(",")), default=None
    )

    return parser


def _dispatch(args) -> int:
    if args.command == "read-labels":
        stage_read_labels(args.images, args.out, args)
    elif args.command == "locate":
        stage_locate(args.images, args.out, _locator_config(args))
    elif args.command == "segment":
        predictor = _make_predictor(args.predictor, args.tolerance)
        stage_segment(args.images, args.candidates, args.masks_dir, predictor, args.seed)
    elif args.command == "crops":
        stage_crops(args.images, args.masks_dir, args.out_dir)
    elif args.command == "annotate":
        service = AnnotationService(args.crops, args.store, seed=args.seed)
        server = make_server(service, args.port, args.ui)
        print(f"listening on http://127.0.0.1:{server.server_address[1]}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    elif args.command == "train":
        if args.target == "suitability":
            if not (args.labels and args.crops):
                raise SchemaError("train suitability needs --labels and --crops")
            train_suitability(args.labels, args.crops, args.out, args.trees, args.seed)
        elif args.target == "morphology":
            if not (args.labels and args.crops):
                raise SchemaError("train morphology needs --labels and --crops")
            train_morphology(args.labels, args.crops, args.out, args.rounds, args.seed)
        else:
            if not args.sheet:
                raise SchemaError("train treatment needs --sheet")
            data = sheet.read_sheet(args.sheet)
            model = treatment.train_treatment_model(data, {"n_trees": args.trees}, args.seed)
            ml.save_model(model, args.out)
    elif args.command == "classify":
        suit = ml.load_model(args.suit_model)
        morph = ml.load_model(args.morph_model)
        stage_classify(args.sheet, args.crops, suit, morph, args.out)
    elif args.command == "predict-treatment":
        stage_predict_treatment(args.sheet, args.model, args.out)
    elif args.command == "exif":
        stage_exif(args.images, args.out, args.gps_out, args.report)
    elif args.command == "eval":
        with_nulls, without_nulls, fraction_read = eval_ocr(args.truth, args.pred)
        print(f"accuracy_with_nulls {with_nulls:.6f}")
        print(f"accuracy_without_nulls {without_nulls:.6f}")
        print(f"fraction_read {fraction_read:.6f}")
    elif args.command == "info":
        print(sheet.render_info(sheet.read_sheet(args.sheet)), end="")
    elif args.command == "run-all":
        config = dict(RUN_ALL_DEFAULTS)
        if args.config:
            config.update(json.loads(Path(args.config).read_text("utf-8")))
        for key in RUN_ALL_DEFAULTS:
            value = getattr(args, key, None)
            if value is not None:
                config[key] = value
        if config["hsv"] is not None:
            config["hsv"] = tuple(config["hsv"])
        if not config["images"] or not config["out_dir"]:
            raise SystemExit(_usage_error("run-all requires --images and --out-dir"))
        run_all(config)
    else:
        build_parser().print_help()
        return 1
    return 0


def _usage_error(message) -> int:
    print(f"pheno: error: {message}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (SchemaError, ModelError) as exc:
        print(f"pheno: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"pheno: error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"pheno: {exc}", file=sys.stderr)
        return 3
    except PhenoError as exc:
        print(f"pheno: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
