"""Checkpoint files: every network's weights plus a JSON meta record.

One .npz holds row-major float64 arrays keyed by net prefix and layer
index, and a ``meta`` JSON string carrying the scenario config hash, the
training configuration, and progress counters. Loading verifies the hash
when the caller supplies one.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigError, SchemaMismatch
from .curiosity import Curiosity
from .gail import Discriminator
from .nets import MLP
from .policy import GaussianPolicy, ValueNet

_PREFIXES = ("policy", "value", "disc", "enc", "fwd", "inv")


def _net_params(prefix: str, net: MLP) -> dict:
    out = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}_w{i}"] = w
        out[f"{prefix}_b{i}"] = b
    return out


def _read_params(data, prefix: str) -> List[np.ndarray]:
    out = []
    i = 0
    while f"{prefix}_w{i}" in data:
        out.append(np.asarray(data[f"{prefix}_w{i}"], dtype=np.float64))
        out.append(np.asarray(data[f"{prefix}_b{i}"], dtype=np.float64))
        i += 1
    if not out:
        raise ConfigError(f"checkpoint has no '{prefix}' arrays")
    return out


def save_checkpoint(
    path,
    policy: GaussianPolicy,
    value_net: ValueNet,
    disc: Discriminator,
    curiosity: Curiosity,
    meta: dict,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    arrays.update(_net_params("policy", policy.net))
    arrays.update(_net_params("value", value_net.net))
    arrays.update(_net_params("disc", disc.net))
    arrays.update(_net_params("enc", curiosity.encoder))
    arrays.update(_net_params("fwd", curiosity.forward_net))
    arrays.update(_net_params("inv", curiosity.inverse_net))
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(
    path, expect_hash: Optional[str] = None
) -> Tuple[GaussianPolicy, ValueNet, Discriminator, Curiosity, dict]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        data = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as err:
        raise ConfigError(f"unreadable checkpoint {path}: {err}")
    if "meta" not in data:
        raise ConfigError(f"checkpoint {path} has no meta record")
    meta = json.loads(str(data["meta"]))
    if expect_hash is not None and meta.get("config_hash") != expect_hash:
        raise SchemaMismatch(
            f"{path}: checkpoint for config {meta.get('config_hash')!r}, "
            f"expected {expect_hash!r}"
        )
    params = {prefix: _read_params(data, prefix) for prefix in _PREFIXES}
    obs_dim = params["policy"][0].shape[0]
    hidden = params["policy"][0].shape[1]
    rng = np.random.default_rng(0)  # shapes only; weights are overwritten
    policy = GaussianPolicy(obs_dim, rng, hidden=hidden)
    value_net = ValueNet(obs_dim, rng, hidden=hidden)
    disc = Discriminator(obs_dim, rng, hidden=params["disc"][0].shape[1])
    curiosity = Curiosity(obs_dim, rng, hidden=params["enc"][0].shape[1])
    policy.net.load_parameters(params["policy"])
    value_net.net.load_parameters(params["value"])
    disc.net.load_parameters(params["disc"])
    curiosity.encoder.load_parameters(params["enc"])
    curiosity.forward_net.load_parameters(params["fwd"])
    curiosity.inverse_net.load_parameters(params["inv"])
    bounds = meta.get("logstd_bounds")
    if bounds is not None:
        policy.logstd_bounds = (float(bounds[0]), float(bounds[1]))
    scale = meta.get("intrinsic_scale")
    if scale is not None:
        curiosity.intrinsic_scale = float(scale)
    return policy, value_net, disc, curiosity, meta


def load_init_params(path, expect_hash: Optional[str] = None) -> Tuple[dict, dict]:
    """Checkpoint contents as a warm-start dict for :func:`train`."""
    policy, value_net, disc, curiosity, meta = load_checkpoint(path, expect_hash)
    init = {
        "policy": policy.net.copy_parameters(),
        "value": value_net.net.copy_parameters(),
        "disc": disc.net.copy_parameters(),
        "enc": curiosity.encoder.copy_parameters(),
        "fwd": curiosity.forward_net.copy_parameters(),
        "inv": curiosity.inverse_net.copy_parameters(),
    }
    return init, meta
