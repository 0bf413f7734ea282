"""Versioned single-file model container.

Layout: 8-byte magic, uint32 format version, uint64 header length, a
JSON header (metadata plus all scalar model state), then the numeric
arrays named in ``header["arrays"]``, each as a uint64-length-prefixed
.npy blob. Every byte is a pure function of the models, so identical
models serialize identically. The version is checked before anything
else is parsed.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArtifactError
from .iforest import IsolationForestModel, IsolationTree, ThresholdConfig, c_factor
from .preprocess import ColumnRole, PreprocessConfig, PreprocessModel
from .svm import KernelParams, SvmModel

MAGIC = b"FSMODEL\x00"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelArtifact:
    preprocess: PreprocessModel
    forest: IsolationForestModel
    svm: SvmModel
    threshold: ThresholdConfig
    meta: dict  # seed, config_hash, and any caller-supplied extras


def _role_to_json(role: ColumnRole) -> dict:
    return {"kind": role.kind, "period": role.period, "encoding": role.encoding}


def _preprocess_to_json(model: PreprocessModel) -> dict:
    cfg = model.config
    return {
        "config": {
            "roles": {name: _role_to_json(r) for name, r in cfg.roles.items()},
            "group_by": cfg.group_by,
            "one_hot_max_cardinality": cfg.one_hot_max_cardinality,
            "missing_drop_threshold": cfg.missing_drop_threshold,
            "correlation_drop_threshold": cfg.correlation_drop_threshold,
            "target_smoothing": cfg.target_smoothing,
        },
        "schema_names": list(model.schema_names),
        "schema_kinds": list(model.schema_kinds),
        "missing_filtered": list(model.missing_filtered),
        "imputation": model.imputation,
        "encoders": model.encoders,
        "scalers": {k: list(v) for k, v in model.scalers.items()},
        "output_names_all": list(model.output_names_all),
        "correlation_filtered": list(model.correlation_filtered),
        "retained_outputs": list(model.retained_outputs),
    }


def _preprocess_from_json(d: dict) -> PreprocessModel:
    cfg = d["config"]
    roles = {
        name: ColumnRole(r["kind"], r["period"], r["encoding"])
        for name, r in cfg["roles"].items()
    }
    return PreprocessModel(
        config=PreprocessConfig(
            roles=roles,
            group_by=cfg["group_by"],
            one_hot_max_cardinality=cfg["one_hot_max_cardinality"],
            missing_drop_threshold=cfg["missing_drop_threshold"],
            correlation_drop_threshold=cfg["correlation_drop_threshold"],
            target_smoothing=cfg["target_smoothing"],
        ),
        schema_names=tuple(d["schema_names"]),
        schema_kinds=tuple(d["schema_kinds"]),
        missing_filtered=tuple(d["missing_filtered"]),
        imputation=d["imputation"],
        encoders=d["encoders"],
        scalers={k: tuple(v) for k, v in d["scalers"].items()},
        output_names_all=tuple(d["output_names_all"]),
        correlation_filtered=tuple(d["correlation_filtered"]),
        retained_outputs=tuple(d["retained_outputs"]),
    )


def _forest_arrays(forest: IsolationForestModel) -> dict[str, np.ndarray]:
    return {
        "iforest/split_feature": np.concatenate([t.split_feature for t in forest.trees]),
        "iforest/split_value": np.concatenate([t.split_value for t in forest.trees]),
        "iforest/left": np.concatenate([t.left for t in forest.trees]),
        "iforest/right": np.concatenate([t.right for t in forest.trees]),
        "iforest/leaf_size": np.concatenate([t.leaf_size for t in forest.trees]),
        "iforest/node_depth": np.concatenate([t.node_depth for t in forest.trees]),
    }


def _rebuild_forest(scalars: dict, arrays: dict[str, np.ndarray]) -> IsolationForestModel:
    counts = scalars["tree_node_counts"]
    height_limit = scalars["height_limit"]
    trees = []
    offset = 0
    for c in counts:
        sl = slice(offset, offset + c)
        trees.append(
            IsolationTree(
                arrays["iforest/split_feature"][sl],
                arrays["iforest/split_value"][sl],
                arrays["iforest/left"][sl],
                arrays["iforest/right"][sl],
                arrays["iforest/leaf_size"][sl],
                arrays["iforest/node_depth"][sl],
                height_limit,
            )
        )
        offset += c
    psi = scalars["subsample_size"]
    return IsolationForestModel(
        trees=tuple(trees),
        subsample_size=psi,
        n_trees=scalars["n_trees"],
        normalizer=scalars["normalizer"],
        seed=scalars["seed"],
        n_features=scalars["n_features"],
        leaf_adjust=np.array([c_factor(k) for k in range(psi + 1)]),
    )


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_artifact(path, artifact: ModelArtifact) -> None:
    forest = artifact.forest
    svm = artifact.svm
    arrays = dict(_forest_arrays(forest))
    arrays["svm/support_vectors"] = svm.support_vectors
    arrays["svm/dual_coeffs"] = svm.dual_coeffs
    header = {
        "format_version": FORMAT_VERSION,
        "meta": artifact.meta,
        "preprocess": _preprocess_to_json(artifact.preprocess),
        "threshold": {
            "alpha": artifact.threshold.alpha,
            "contamination": artifact.threshold.contamination,
        },
        "iforest": {
            "tree_node_counts": [t.n_nodes for t in forest.trees],
            "height_limit": forest.trees[0].height_limit if forest.trees else 0,
            "subsample_size": forest.subsample_size,
            "n_trees": forest.n_trees,
            "normalizer": forest.normalizer,
            "seed": forest.seed,
            "n_features": forest.n_features,
        },
        "svm": {
            "bias": svm.bias,
            "gamma": svm.params.gamma,
            "C": svm.params.C,
            "class_weight_fraud": svm.params.class_weight_fraud,
            "class_weight_legit": svm.params.class_weight_legit,
            "max_abs_decision_on_train": svm.max_abs_decision_on_train,
            "kkt_violation": svm.kkt_violation,
            "converged": svm.converged,
        },
        "arrays": sorted(arrays),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name in header["arrays"]:
            blob = _npy_bytes(arrays[name])
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)


def load_artifact(path) -> ModelArtifact:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    with fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ArtifactError(f"{path}: not a model artifact (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ArtifactError(
                f"{path}: unsupported artifact format version {version} "
                f"(this build reads version {FORMAT_VERSION})"
            )
        (header_len,) = struct.unpack("<Q", fh.read(8))
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ArtifactError(f"{path}: corrupt header: {exc}") from exc
        arrays = {}
        for name in header["arrays"]:
            raw = fh.read(struct.unpack("<Q", fh.read(8))[0])
            arrays[name] = np.lib.format.read_array(io.BytesIO(raw), allow_pickle=False)

    sv = header["svm"]
    svm = SvmModel(
        support_vectors=arrays["svm/support_vectors"],
        dual_coeffs=arrays["svm/dual_coeffs"],
        bias=sv["bias"],
        params=KernelParams(
            sv["gamma"], sv["C"], sv["class_weight_fraud"], sv["class_weight_legit"]
        ),
        max_abs_decision_on_train=sv["max_abs_decision_on_train"],
        kkt_violation=sv["kkt_violation"],
        converged=sv["converged"],
    )
    return ModelArtifact(
        preprocess=_preprocess_from_json(header["preprocess"]),
        forest=_rebuild_forest(header["iforest"], arrays),
        svm=svm,
        threshold=ThresholdConfig(**header["threshold"]),
        meta=header["meta"],
    )
