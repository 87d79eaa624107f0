"""Keypoint dataset ingestion and result serialization.

Both file kinds are JSON documents carrying a format_version field
(currently "1"). Dataset files store pixel coordinates plus per-image canvas
sizes; loading divides each axis by the respective width/height so all
in-memory coordinates are normalized. Results files echo the run
configuration and hold per-pair PCK, fitted transforms and loss traces;
numeric fields round-trip bit-exactly (floats serialize via shortest
round-trip decimal representation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import transform_to_dict
from .synth import PairSample

FORMAT_VERSION = "1"


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: top level must be an object")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported format_version {version!r}")
    return payload


def _write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _as_size(value, pair_id: str, label: str) -> tuple:
    try:
        w, h = float(value[0]), float(value[1])
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"pair {pair_id!r}: {label} must be [width, height]") from exc
    if w <= 0 or h <= 0:
        raise ValidationError(f"pair {pair_id!r}: {label} must be positive, got {value}")
    return (w, h)


def _as_keypoints(value, size, pair_id: str, label: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParseError(f"pair {pair_id!r}: {label} must be a list of [x, y] pairs")
    if arr.shape[0] == 0:
        raise ValidationError(f"pair {pair_id!r}: {label} must contain at least one keypoint")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"pair {pair_id!r}: {label} contains non-finite coordinates")
    w, h = size
    if np.any(arr[:, 0] < 0) or np.any(arr[:, 0] > w) or np.any(arr[:, 1] < 0) or np.any(arr[:, 1] > h):
        raise ValidationError(
            f"pair {pair_id!r}: {label} coordinates fall outside the [0, {w}] x [0, {h}] canvas"
        )
    return arr / np.array([w, h])


def load_dataset(path) -> list:
    """Parse a dataset file into normalized PairSamples.

    Raises ParseError for malformed structure, ValidationError for contents
    that violate the format (out-of-canvas coordinates, bad correspondence
    indices), and OSError for file-system problems.
    """
    payload = _read_json(path)
    records = payload.get("pairs")
    if not isinstance(records, list):
        raise ParseError(f"{path}: 'pairs' must be a list")
    samples = []
    for pos, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ParseError(f"{path}: pair record {pos} must be an object")
        pair_id = rec.get("pair_id")
        if not isinstance(pair_id, str) or not pair_id:
            raise ParseError(f"{path}: pair record {pos} needs a nonempty string pair_id")
        missing = [k for k in ("source_keypoints", "target_keypoints", "source_size", "target_size") if k not in rec]
        if missing:
            raise ParseError(f"pair {pair_id!r}: missing fields {missing}")
        source_size = _as_size(rec["source_size"], pair_id, "source_size")
        target_size = _as_size(rec["target_size"], pair_id, "target_size")
        source = _as_keypoints(rec["source_keypoints"], source_size, pair_id, "source_keypoints")
        target = _as_keypoints(rec["target_keypoints"], target_size, pair_id, "target_keypoints")
        try:
            sample = PairSample(
                source=source,
                target=target,
                category=rec.get("category"),
                correspondence=rec.get("correspondence"),
                source_size=source_size,
                target_size=target_size,
                pair_id=pair_id,
                source_id=rec.get("source_id", ""),
                target_id=rec.get("target_id", ""),
            )
        except ValueError as exc:
            raise ValidationError(f"pair {pair_id!r}: {exc}") from exc
        samples.append(sample)
    return samples


def save_dataset(samples, path) -> None:
    """Write PairSamples back to the dataset format (pixel coordinates)."""
    records = []
    for sample in samples:
        w_s, h_s = sample.source_size
        w_t, h_t = sample.target_size
        src_px = sample.source * np.array([w_s, h_s])
        tgt_px = sample.target * np.array([w_t, h_t])
        for label, px, w, h in (("source", src_px, w_s, h_s), ("target", tgt_px, w_t, h_t)):
            if np.any(px < 0) or np.any(px[:, 0] > w) or np.any(px[:, 1] > h):
                raise ValidationError(
                    f"pair {sample.pair_id!r}: {label} keypoints leave the canvas; "
                    "cannot be represented in the dataset format"
                )
        rec = {
            "pair_id": sample.pair_id,
            "category": sample.category,
            "source_id": sample.source_id,
            "target_id": sample.target_id,
            "source_size": [float(w_s), float(h_s)],
            "target_size": [float(w_t), float(h_t)],
            "source_keypoints": [[float(x), float(y)] for x, y in src_px],
            "target_keypoints": [[float(x), float(y)] for x, y in tgt_px],
        }
        if sample.correspondence is not None:
            rec["correspondence"] = [[int(i), int(j)] for i, j in sample.correspondence]
        records.append(rec)
    _write_json({"format_version": FORMAT_VERSION, "pairs": records}, path)


@dataclass
class PairRecord:
    """Per-pair slice of a results file."""

    pair_id: str
    category: Optional[str]
    pck: Optional[float]
    final_loss: float
    iterations: int
    converged: bool
    loss_trace: list
    theta_ab: dict
    theta_ba: dict


@dataclass
class ResultsDocument:
    """Everything one registration run writes: config echo, PCK aggregates,
    per-pair traces and fitted transforms."""

    config: dict = field(default_factory=dict)
    mean_pck: Optional[float] = None
    per_category: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)
    format_version: str = FORMAT_VERSION


def build_results_document(config: dict, results, samples, pck_values=None) -> ResultsDocument:
    """Assemble a ResultsDocument from parallel lists of RegistrationResults
    and PairSamples.

    pck_values, when given, is aligned with the pairs; entries may be None
    for pairs without ground truth. Aggregates cover the scored pairs only.
    """
    if pck_values is None:
        pck_values = [None] * len(results)
    pairs = []
    by_category: dict = {}
    scored = []
    for result, sample, fraction in zip(results, samples, pck_values):
        if fraction is not None:
            fraction = float(fraction)
            scored.append(fraction)
            label = sample.category if sample.category is not None else "uncategorized"
            by_category.setdefault(label, []).append(fraction)
        pairs.append(
            PairRecord(
                pair_id=sample.pair_id,
                category=sample.category,
                pck=fraction,
                final_loss=float(result.final_loss),
                iterations=int(result.iterations_used),
                converged=bool(result.converged),
                loss_trace=[float(v) for v in result.loss_trace],
                theta_ab=transform_to_dict(result.theta_ab),
                theta_ba=transform_to_dict(result.theta_ba),
            )
        )
    return ResultsDocument(
        config=dict(config),
        mean_pck=float(np.mean(scored)) if scored else None,
        per_category={k: float(np.mean(v)) for k, v in sorted(by_category.items())},
        pairs=pairs,
    )


def save_results(document: ResultsDocument, path) -> None:
    """Serialize a ResultsDocument; categories appear in sorted order and the
    output is byte-deterministic for identical documents."""
    payload = {
        "format_version": document.format_version,
        "config": document.config,
        "mean_pck": document.mean_pck,
        "per_category": {k: document.per_category[k] for k in sorted(document.per_category)},
        "pairs": [
            {
                "pair_id": rec.pair_id,
                "category": rec.category,
                "pck": rec.pck,
                "final_loss": rec.final_loss,
                "iterations": rec.iterations,
                "converged": rec.converged,
                "loss_trace": rec.loss_trace,
                "theta_ab": rec.theta_ab,
                "theta_ba": rec.theta_ba,
            }
            for rec in document.pairs
        ],
    }
    _write_json(payload, path)


def load_results(path) -> ResultsDocument:
    """Read a results file back; numeric fields are bit-exact."""
    payload = _read_json(path)
    try:
        pairs = [
            PairRecord(
                pair_id=rec["pair_id"],
                category=rec["category"],
                pck=rec["pck"],
                final_loss=rec["final_loss"],
                iterations=rec["iterations"],
                converged=rec["converged"],
                loss_trace=rec["loss_trace"],
                theta_ab=rec["theta_ab"],
                theta_ba=rec["theta_ba"],
            )
            for rec in payload.get("pairs", [])
        ]
        return ResultsDocument(
            config=payload["config"],
            mean_pck=payload["mean_pck"],
            per_category=payload["per_category"],
            pairs=pairs,
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed results file ({exc})") from exc
