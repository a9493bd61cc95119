"""File formats: MDP and policy/occupancy JSON documents, (state, action)
datasets, result documents and CSV traces. Writes are atomic."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .mdp import TabularMdp

MDP_FILE_ATOL = 1e-9


def read_json(path):
    with open(path) as f:
        return json.load(f)


def load_mdp(path) -> tuple[TabularMdp, np.ndarray | None]:
    """Read ``{num_states, num_actions, transition, mu0, gamma[, reward]}``."""
    doc = read_json(path)
    try:
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        T = np.asarray(doc["transition"], dtype=float)
        mu0 = np.asarray(doc["mu0"], dtype=float)
        gamma = float(doc["gamma"])
    except KeyError as e:
        raise ValueError(f"{path}: missing field {e.args[0]!r}") from None
    if T.shape != (S, A, S):
        raise ValueError(f"{path}: transition shape {T.shape} does not match ({S}, {A}, {S})")
    # renormalize what passed the file tolerance so the in-memory model is exact
    mdp = TabularMdp(T, mu0, gamma, prob_atol=MDP_FILE_ATOL)
    mdp = TabularMdp(T / T.sum(axis=2, keepdims=True), mu0 / mu0.sum(), gamma)
    reward = None
    if doc.get("reward") is not None:
        reward = np.asarray(doc["reward"], dtype=float)
        if reward.shape != (S, A):
            raise ValueError(f"{path}: reward shape {reward.shape} != ({S}, {A})")
    return mdp, reward


def mdp_document(mdp: TabularMdp, reward=None) -> dict:
    doc = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "transition": mdp.transition.tolist(),
        "mu0": mdp.mu0.tolist(),
        "gamma": mdp.gamma,
    }
    if reward is not None:
        doc["reward"] = np.asarray(reward, dtype=float).tolist()
    return doc


def save_mdp(path, mdp: TabularMdp, reward=None) -> None:
    write_json(path, mdp_document(mdp, reward))


def load_table(source, shape: tuple[int, int], key: str) -> np.ndarray:
    """An (S, A) table given inline or as a JSON document ``{key: ...}``.

    Flat vectors of length S*A are reshaped row-major.
    """
    if isinstance(source, (str, os.PathLike)):
        doc = read_json(source)
        source = doc[key] if isinstance(doc, dict) else doc
    arr = np.asarray(source, dtype=float)
    if arr.size != shape[0] * shape[1]:
        raise ValueError(f"{key} has {arr.size} entries, expected {shape[0]} x {shape[1]}")
    return arr.reshape(shape)


def load_policy(source, shape):
    return load_table(source, shape, "policy")


def load_occupancy(source, shape):
    return load_table(source, shape, "occupancy")


def read_dataset(path) -> np.ndarray:
    """Newline-delimited ``state_index,action_index`` records."""
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'state,action'")
            rows.append((int(parts[0]), int(parts[1])))
    return np.asarray(rows, dtype=int).reshape(-1, 2)


def dataset_text(data) -> str:
    return "".join(f"{int(s)},{int(a)}\n" for s, a in np.asarray(data).reshape(-1, 2))


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, doc) -> None:
    _atomic_write(path, json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n")


def write_text(path, text: str) -> None:
    _atomic_write(path, text)


def write_trace_csv(path, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "utility_value", "fw_gap", "exploitability"])
    for r in rows:
        w.writerow([r.iteration, repr(r.utility_value), repr(r.fw_gap), repr(r.exploitability)])
    _atomic_write(path, buf.getvalue())
