"""
Structured records: cameras, trajectories, motion trees, binary tables, loss history.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from src.backend.core.geometry import Camera
from src.backend.core.motion import BindingTable, MotionTree
from src.backend.core.scene import CanonicalScene
from src.backend.core.tracking.tracking_schema import Trajectory3D
from .image_io import StorageError

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["iteration", "frame", "rgb", "mask", "depth", "track2d", "arap", "total"]


def dump_json(path, data: Any) -> Path:
    """Deterministic JSON (sorted keys, repr floats)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def load_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except Exception as e:
        logger.error(f"Cannot parse {path}: {e}")
        raise RecordFormatError(f"Cannot parse {path}: {e}")


# cameras

def write_cameras(path, cams: Sequence[Camera]) -> Path:
    return dump_json(path, {"cameras": [cam.to_dict() for cam in cams]})


def read_cameras(path) -> List[Camera]:
    data = load_json(path)
    try:
        return [Camera.from_dict(entry) for entry in data["cameras"]]
    except Exception as e:
        raise RecordFormatError(f"{path}: invalid camera record: {e}")


# trajectories

def _nullable(array: np.ndarray) -> list:
    """Nested list with NaN written as null."""
    array = np.asarray(array, dtype=np.float64)
    return np.where(np.isfinite(array), array, None).tolist()


def _from_nullable(values) -> np.ndarray:
    return np.array([[np.nan if v is None else v for v in row] for row in values], dtype=np.float64)


def trajectory_to_dict(track: Trajectory3D) -> Dict[str, Any]:
    return {
        "id": int(track.point_id),
        "positions": _nullable(track.positions),
        "visibility": track.visibility.astype(int).tolist(),
        "confidence": track.confidence.tolist(),
        "mask": track.mask.astype(int).tolist(),
        "pixels": _nullable(track.pixels),
        "partial": bool(track.partial),
    }


def trajectory_from_dict(data: Dict[str, Any]) -> Trajectory3D:
    return Trajectory3D(
        point_id=int(data["id"]),
        positions=_from_nullable(data["positions"]),
        visibility=np.asarray(data["visibility"], dtype=bool),
        confidence=np.asarray(data.get("confidence"), dtype=np.float64) if data.get("confidence") is not None else None,
        mask=np.asarray(data["mask"], dtype=bool) if data.get("mask") is not None else None,
        pixels=_from_nullable(data["pixels"]) if data.get("pixels") is not None else None,
        partial=bool(data.get("partial", False)),
    )


def write_trajectories(path, tracks: Sequence[Trajectory3D]) -> Path:
    """One JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as handle:
        for track in tracks:
            handle.write(json.dumps(trajectory_to_dict(track), sort_keys=True) + "\n")
    return path


def read_trajectories(path) -> List[Trajectory3D]:
    tracks = []
    with Path(path).open() as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                tracks.append(trajectory_from_dict(json.loads(line)))
            except Exception as e:
                logger.error(f"{path}:{number}: invalid trajectory: {e}")
                raise RecordFormatError(f"{path}:{number}: invalid trajectory: {e}")
    return tracks


# motion tree

def write_motion_tree(path, tree: MotionTree) -> Path:
    return dump_json(path, tree.to_dict())


def read_motion_tree(path) -> MotionTree:
    try:
        return MotionTree.from_dict(load_json(path))
    except RecordFormatError:
        raise
    except Exception as e:
        raise RecordFormatError(f"{path}: invalid motion tree: {e}")


# binary tables

def write_table(path, arrays: Dict[str, np.ndarray], meta: Dict[str, Any] = None) -> Tuple[Path, Path]:
    """
    Concatenate little-endian arrays into `path` and describe them in `path`.json.

    Returns:
        (binary path, sidecar path)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns, chunks, offset = [], [], 0
    for name, array in arrays.items():
        array = np.asarray(array)
        dtype = "<i8" if np.issubdtype(array.dtype, np.integer) or array.dtype == bool else "<f8"
        payload = np.ascontiguousarray(array, dtype=dtype).tobytes()
        columns.append({"name": name, "dtype": dtype, "shape": list(array.shape), "offset": offset})
        chunks.append(payload)
        offset += len(payload)
    path.write_bytes(b"".join(chunks))
    sidecar = dump_json(path.with_suffix(path.suffix + ".json"), {"columns": columns, "meta": meta or {},
                                                                   "nbytes": offset})
    return path, sidecar


def read_table(path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Raises:
        RecordFormatError: If the binary size disagrees with the sidecar
    """
    path = Path(path)
    sidecar = load_json(path.with_suffix(path.suffix + ".json"))
    data = path.read_bytes()
    if len(data) != sidecar["nbytes"]:
        raise RecordFormatError(f"{path}: expected {sidecar['nbytes']} bytes, found {len(data)}")
    arrays = {}
    for column in sidecar["columns"]:
        count = int(np.prod(column["shape"])) if column["shape"] else 1
        arrays[column["name"]] = np.frombuffer(data, dtype=column["dtype"], count=count,
                                               offset=column["offset"]).reshape(column["shape"]).copy()
    return arrays, sidecar["meta"]


def write_gaussians(path, scene: CanonicalScene):
    return write_table(path, {
        "means": scene.means, "scales": scene.scales, "rotations": scene.rotations,
        "opacities": scene.opacities, "sh": scene.sh, "source_ids": scene.source_ids,
    }, {"canonical_frame": scene.canonical_frame, "background": scene.background.tolist(),
        "sh_degree": scene.sh_degree, "num_gaussians": scene.num_gaussians})


def read_gaussians(path) -> CanonicalScene:
    arrays, meta = read_table(path)
    return CanonicalScene(arrays["means"], arrays["scales"], arrays["rotations"], arrays["opacities"],
                          arrays["sh"], int(meta["canonical_frame"]), np.asarray(meta["background"]),
                          arrays["source_ids"])


def write_bindings(path, bindings: BindingTable):
    return write_table(path, {"indices": bindings.indices, "weights": bindings.weights},
                       {"radius": float(bindings.radius)})


def read_bindings(path) -> BindingTable:
    arrays, meta = read_table(path)
    return BindingTable(arrays["indices"], arrays["weights"], float(meta["radius"]))


def write_moments(path, moments: Dict[str, Dict[str, np.ndarray]]):
    """Adam moments, flattened to '<group>.exp_avg' / '<group>.exp_avg_sq' columns."""
    arrays = {f"{group}.{key}": value for group in sorted(moments) for key, value in sorted(moments[group].items())}
    return write_table(path, arrays, {"groups": sorted(moments)})


def read_moments(path) -> Dict[str, Dict[str, np.ndarray]]:
    arrays, _ = read_table(path)
    out: Dict[str, Dict[str, np.ndarray]] = {}
    for name, value in arrays.items():
        group, key = name.rsplit(".", 1)
        out.setdefault(group, {})[key] = value
    return out


# loss history

def write_loss_csv(path, history: Sequence[Dict[str, float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LOSS_COLUMNS)
        for row in history:
            writer.writerow([int(row["iteration"]), int(row["frame"])]
                            + [repr(float(row[c])) for c in LOSS_COLUMNS[2:]])
    return path


def read_loss_csv(path) -> List[Dict[str, float]]:
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != LOSS_COLUMNS:
            raise RecordFormatError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{k: (int(v) if k in ("iteration", "frame") else float(v)) for k, v in row.items()}
                for row in reader]


# CUSTOM EXCEPTIONS
class RecordFormatError(StorageError):
    """Malformed JSON, JSON-lines or table file."""
    pass
