"""Moment-matched generator network: cost, hand-derived backprop, training.

A fixed-depth MLP is trained to map a simple input law (independent standard
normals by default, uniforms as an alternative) onto samples of a target
distribution, with the square-root kernel two-sample statistic as the cost
(a Gaussian-kernel mixture over several bandwidths). Trained generators turn
randomized low-discrepancy point sets into quasi-random samples of the target.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from qrnet import copula as _copula
from qrnet import dist
from qrnet.dist import RngStream
from qrnet.qmc import PointSet

MODEL_SCHEMA = "qrnet-model-v1"

_SIG_EPS = 1e-12

# activation -> (value from preactivation, derivative from (pre, value))
_ACT = {
    "relu": (
        lambda z: np.maximum(z, 0.0),
        lambda z, a: (z > 0.0).astype(float),  # subgradient at 0 is 0
    ),
    "sigmoid": (
        lambda z: np.clip(expit(z), _SIG_EPS, 1.0 - _SIG_EPS),
        lambda z, a: a * (1.0 - a),
    ),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
    "tanh": (lambda z: np.tanh(z), lambda z, a: 1.0 - a * a),
    "softplus": (lambda z: np.logaddexp(0.0, z), lambda z, a: expit(z)),
}


class ModelSchemaError(ValueError):
    """Model file does not carry the expected schema/version."""


@dataclass
class NetParams:
    weights: list[np.ndarray]  # W_l of shape (d_l, d_{l-1})
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must align")
        for name in self.activations:
            if name not in _ACT:
                raise ValueError(f"unknown activation {name!r}")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {l}: bias length does not match weight rows")
            if l and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: shape chain broken")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]


@dataclass
class KernelSpec:
    bandwidths: tuple[float, ...] = (0.001, 0.01, 0.15, 0.25, 0.50, 0.75)

    def __post_init__(self):
        if any(s <= 0.0 for s in self.bandwidths):
            raise ValueError("bandwidths must be positive")


@dataclass
class TrainConfig:
    n_trn: int
    n_bat: int
    n_epo: int
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    init_seed: int = 0
    shuffle_seed: int = 1
    mmd_floor: float = 1e-12
    input_law: str = "normal"  # "normal" | "uniform"
    resample_z: bool = True  # False: draw the input sample once and repartition
    objective: str = "mmd"  # "mmd" | "mmd2"

    def __post_init__(self):
        if not 1 <= self.n_bat <= self.n_trn:
            raise ValueError("need 1 <= n_bat <= n_trn")
        if self.n_trn % self.n_bat:
            raise ValueError("n_bat must divide n_trn")
        if self.n_epo < 1:
            raise ValueError("n_epo must be at least 1")
        if self.input_law not in ("normal", "uniform"):
            raise ValueError("input_law must be 'normal' or 'uniform'")
        if self.objective not in ("mmd", "mmd2"):
            raise ValueError("objective must be 'mmd' or 'mmd2'")


#: named presets: (TrainConfig numbers, hidden width)
PRESETS = {
    "paper": dict(n_trn=60_000, n_bat=5_000, n_epo=300, hidden=300),
    "desk": dict(n_trn=20_000, n_bat=2_000, n_epo=100, hidden=64),
}


def preset_config(name: str, **overrides) -> tuple[TrainConfig, int]:
    """TrainConfig plus hidden width for a named preset ('paper' or 'desk')."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}")
    values = dict(PRESETS[name])
    hidden = values.pop("hidden")
    values.update(overrides)
    return TrainConfig(**values), hidden


@dataclass
class TrainedModel:
    params: NetParams
    kernel: KernelSpec
    input_dim: int
    input_law: str = "normal"
    loss_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    provenance: dict = field(default_factory=dict)


def glorot_init(layer_dims, seed: int, activations=None) -> NetParams:
    """Uniform(-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    if activations is None:
        activations = ["relu"] * (len(dims) - 2) + ["sigmoid"]
    if len(activations) != len(dims) - 1:
        raise ValueError("one activation per non-input layer")
    stream = RngStream(seed)
    weights, biases = [], []
    for l in range(1, len(dims)):
        bound = np.sqrt(6.0 / (dims[l] + dims[l - 1]))
        u = np.asarray(stream.uniform((dims[l], dims[l - 1])))
        weights.append(bound * (2.0 * u - 1.0))
        biases.append(np.zeros(dims[l]))
    return NetParams(weights=weights, biases=biases, activations=list(activations))


def _forward_cached(params: NetParams, Z: np.ndarray):
    acts = [np.asarray(Z, dtype=float)]
    pres = []
    for W, b, name in zip(params.weights, params.biases, params.activations):
        z = acts[-1] @ W.T + b
        pres.append(z)
        acts.append(_ACT[name][0](z))
    return acts, pres


def forward(params: NetParams, Z: np.ndarray) -> np.ndarray:
    """Row-wise network evaluation."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != params.layer_dims[0]:
        raise ValueError("input must be (n, p) with p matching the first layer")
    if Z.shape[0] == 0:
        return np.empty((0, params.layer_dims[-1]))
    return _forward_cached(params, Z)[0][-1]


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = np.einsum("ij,ij->i", A, A)
    bb = np.einsum("ij,ij->i", B, B)
    D = aa[:, None] + bb[None, :] - 2.0 * (A @ B.T)
    np.maximum(D, 0.0, out=D)
    return D


def _kernel_pair_sum(A, B, bandwidths, chunk=1024) -> float:
    total = 0.0
    for lo in range(0, A.shape[0], chunk):
        D = _sq_dists(A[lo : lo + chunk], B)
        for s in bandwidths:
            total += float(np.exp(-D / (2.0 * s * s)).sum())
    return total


def mmd(X: np.ndarray, Y: np.ndarray, kernel: KernelSpec | None = None) -> float:
    """Square-root kernel two-sample statistic, biased form with diagonals.

    Requires equally sized samples of equal dimension; a rounding-negative
    radicand is clamped to zero, so mmd(X, X) is exactly 0.
    """
    kernel = kernel or KernelSpec()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError("X and Y must have identical shape (equal n and d)")
    n = X.shape[0]
    if Y.tobytes() < X.tobytes():  # canonical orientation: symmetry holds exactly
        X, Y = Y, X
    sxx = _kernel_pair_sum(X, X, kernel.bandwidths)
    sxy = _kernel_pair_sum(X, Y, kernel.bandwidths)
    syy = _kernel_pair_sum(Y, Y, kernel.bandwidths)
    return float(np.sqrt(max((sxx - 2.0 * sxy + syy) / (n * n), 0.0)))


def mmd_gradient(
    params: NetParams,
    Z: np.ndarray,
    X: np.ndarray,
    kernel: KernelSpec | None = None,
    objective: str = "mmd",
    mmd_floor: float = 1e-12,
    dtype=np.float64,
):
    """Analytic gradient of the two-sample cost w.r.t. all weights and biases.

    Returns (weight grads, bias grads, cost value). The kernel sums give the
    cost's derivative in the generated sample; backpropagation through the
    layers does the rest. The cross-kernel is evaluated through the same
    routine as the generated-sample kernel so the gradient cancels exactly at
    Y == X. dtype=np.float32 keeps kernel matrices in single precision with
    double accumulation (the training hot path; relative gradient error around
    1e-6).
    """
    kernel = kernel or KernelSpec()
    Z = np.asarray(Z, dtype=float)
    X = np.asarray(X, dtype=float)
    acts, pres = _forward_cached(params, Z)
    Y = acts[-1]
    if X.shape != Y.shape:
        raise ValueError("target batch shape must match generated batch shape")
    n = X.shape[0]
    Yk = Y.astype(dtype)
    Xk = X.astype(dtype)
    Dyy = _sq_dists(Yk, Yk)
    Dyx = _sq_dists(Yk, Xk)
    Dxx = _sq_dists(Xk, Xk)
    sxx = sxy = syy = 0.0
    Gk = np.zeros_like(Yk)
    for s in kernel.bandwidths:
        c = dtype(1.0 / (2.0 * s * s))
        Kyy = np.exp(-c * Dyy)
        Kyx = np.exp(-c * Dyx)
        sxx += float(np.exp(-c * Dxx).sum(dtype=np.float64))
        sxy += float(Kyx.sum(dtype=np.float64))
        syy += float(Kyy.sum(dtype=np.float64))
        Gk += ((Kyy @ Yk - Kyy.sum(axis=1)[:, None] * Yk)
               - (Kyx @ Xk - Kyx.sum(axis=1)[:, None] * Yk)) / dtype(s * s)
    G = Gk.astype(np.float64) * (2.0 / (n * n))
    mmd2 = max((sxx - 2.0 * sxy + syy) / (n * n), 0.0)
    value = float(np.sqrt(mmd2))
    if objective == "mmd":
        G /= 2.0 * max(value, mmd_floor)
        cost = value
    else:
        cost = mmd2

    grads_w = [np.empty(0)] * len(params.weights)
    grads_b = [np.empty(0)] * len(params.biases)
    upstream = G
    for l in range(len(params.weights) - 1, -1, -1):
        dphi = _ACT[params.activations[l]][1](pres[l], acts[l + 1])
        delta = upstream * dphi
        grads_w[l] = delta.T @ acts[l]
        grads_b[l] = delta.sum(axis=0)
        if l:
            upstream = delta @ params.weights[l]
    return grads_w, grads_b, value


class _Adam:
    def __init__(self, params: NetParams, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m_w = [np.zeros_like(W) for W in params.weights]
        self.v_w = [np.zeros_like(W) for W in params.weights]
        self.m_b = [np.zeros_like(b) for b in params.biases]
        self.v_b = [np.zeros_like(b) for b in params.biases]

    def step(self, params: NetParams, grads_w, grads_b) -> None:
        c = self.cfg
        self.t += 1
        corr1 = 1.0 - c.beta1**self.t
        corr2 = 1.0 - c.beta2**self.t
        for store_m, store_v, target, grads in (
            (self.m_w, self.v_w, params.weights, grads_w),
            (self.m_b, self.v_b, params.biases, grads_b),
        ):
            for i, g in enumerate(grads):
                store_m[i] = c.beta1 * store_m[i] + (1.0 - c.beta1) * g
                store_v[i] = c.beta2 * store_v[i] + (1.0 - c.beta2) * g * g
                target[i] -= c.lr * (store_m[i] / corr1) / (
                    np.sqrt(store_v[i] / corr2) + c.adam_eps
                )


def _config_hash(config: TrainConfig, layer_dims, kernel: KernelSpec) -> str:
    payload = json.dumps(
        {"config": vars(config), "layer_dims": list(layer_dims), "kernel": kernel.bandwidths},
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _draw_inputs(stream: RngStream, n: int, p: int, law: str) -> np.ndarray:
    u = np.asarray(stream.uniform((n, p)))
    return np.asarray(dist.normal_quantile(u)) if law == "normal" else u


def train(
    X: np.ndarray,
    config: TrainConfig,
    layer_dims=None,
    activations=None,
    kernel: KernelSpec | None = None,
) -> TrainedModel:
    """Mini-batch training of the generator on target sample X.

    Every epoch draws a fresh input sample (unless config.resample_z is off,
    in which case the first draw is repartitioned), shuffles inputs and
    targets into aligned batches and takes one Adam step per batch. Fully
    deterministic given the config seeds.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be an (n, d) matrix")
    if X.shape[0] != config.n_trn:
        raise ValueError(f"X has {X.shape[0]} rows, config.n_trn = {config.n_trn}")
    if np.any(X <= 0.0) or np.any(X >= 1.0):
        raise ValueError("training sample must lie strictly inside (0, 1)")
    d = X.shape[1]
    if layer_dims is None:
        layer_dims = [d, 300, d]
    p = layer_dims[0]
    kernel = kernel or KernelSpec()
    params = glorot_init(layer_dims, config.init_seed, activations)
    adam = _Adam(params, config)
    n_batches = config.n_trn // config.n_bat
    trace = np.empty(config.n_epo)
    z_cached = None
    for epoch in range(config.n_epo):
        if config.resample_z or z_cached is None:
            z_stream = RngStream(config.shuffle_seed, stream_id=2 * epoch)
            z_cached = _draw_inputs(z_stream, config.n_trn, p, config.input_law)
        perm_stream = RngStream(config.shuffle_seed, stream_id=2 * epoch + 1)
        x_perm = perm_stream.permutation(config.n_trn)
        z_perm = perm_stream.permutation(config.n_trn)
        losses = np.empty(n_batches)
        for b in range(n_batches):
            rows = slice(b * config.n_bat, (b + 1) * config.n_bat)
            gw, gb, value = mmd_gradient(
                params,
                z_cached[z_perm[rows]],
                X[x_perm[rows]],
                kernel,
                objective=config.objective,
                mmd_floor=config.mmd_floor,
                dtype=np.float32,
            )
            adam.step(params, gw, gb)
            losses[b] = value
        trace[epoch] = losses.mean()
    provenance = {
        "config_hash": _config_hash(config, layer_dims, kernel),
        "config": {k: v for k, v in vars(config).items()},
        "layer_dims": list(layer_dims),
    }
    return TrainedModel(
        params=params,
        kernel=kernel,
        input_dim=p,
        input_law=config.input_law,
        loss_trace=trace,
        provenance=provenance,
    )


# -- sampling through the trained generator ------------------------------------


def _invert_input_law(model: TrainedModel, U: np.ndarray) -> np.ndarray:
    if model.input_law == "uniform":
        return U
    return np.asarray(dist.normal_quantile(U))


def generate_pseudo(
    model: TrainedModel, n: int, stream: RngStream, pseudo_obs: bool = False
) -> np.ndarray:
    """Pseudo-random sample of size n through the trained generator."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.empty((0, model.params.layer_dims[-1]))
    u = np.asarray(stream.uniform((n, model.input_dim)))
    Y = forward(model.params, _invert_input_law(model, u))
    return _copula.pseudo_observations(Y) if pseudo_obs else Y


def generate_quasi(
    model: TrainedModel,
    point_set: PointSet,
    n: int | None = None,
    pseudo_obs: bool = False,
) -> np.ndarray:
    """Quasi-random sample: the generator applied to a randomized point set.

    Raw point sets are refused: they may contain the origin, which maps to
    -inf under the normal quantile of the input law.
    """
    if point_set.randomization == "raw":
        raise ValueError(
            "raw point sets are refused: randomize first (the origin maps to "
            "-inf under the input-law quantile)"
        )
    if point_set.dimension != model.input_dim:
        raise ValueError(
            f"point set dimension {point_set.dimension} != model input dim {model.input_dim}"
        )
    pts = point_set.points if n is None else point_set.points[:n]
    if n is not None and pts.shape[0] < n:
        raise ValueError("point set has fewer points than requested")
    # digital shifts can produce an exact 0 with probability 2^-32 per entry
    u = np.clip(pts, 2.0**-64, 1.0 - 2.0**-53)
    Y = forward(model.params, _invert_input_law(model, u))
    return _copula.pseudo_observations(Y) if pseudo_obs else Y


# -- persistence -----------------------------------------------------------------


def _fmt_array(a: np.ndarray) -> str:
    return " ".join("%.17g" % x for x in np.asarray(a, dtype=float).ravel())


def _parse_array(s: str, shape=None) -> np.ndarray:
    out = np.fromiter((float(t) for t in s.split()), dtype=float)
    if shape is None:
        return out
    if out.size != int(np.prod(shape)):
        raise ModelSchemaError("array length does not match declared shape")
    return out.reshape(shape)


def save_model(model: TrainedModel, path) -> None:
    """Versioned text serialization; round-trips all parameters bitwise."""
    doc = {
        "schema": MODEL_SCHEMA,
        "layer_dims": model.params.layer_dims,
        "activations": model.params.activations,
        "input_dim": model.input_dim,
        "input_law": model.input_law,
        "kernel_bandwidths": list(model.kernel.bandwidths),
        "weights": [_fmt_array(W) for W in model.params.weights],
        "biases": [_fmt_array(b) for b in model.params.biases],
        "loss_trace": _fmt_array(model.loss_trace),
        "provenance": model.provenance,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelSchemaError(f"not a model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        raise ModelSchemaError(
            f"expected schema {MODEL_SCHEMA!r}, found {doc.get('schema')!r}"
        )
    try:
        dims = [int(x) for x in doc["layer_dims"]]
        weights = [
            _parse_array(s, (dims[l + 1], dims[l]))
            for l, s in enumerate(doc["weights"])
        ]
        biases = [
            _parse_array(s, (dims[l + 1],)) for l, s in enumerate(doc["biases"])
        ]
        params = NetParams(weights=weights, biases=biases, activations=list(doc["activations"]))
        trace = _parse_array(doc["loss_trace"]) if doc["loss_trace"] else np.empty(0)
        return TrainedModel(
            params=params,
            kernel=KernelSpec(tuple(doc["kernel_bandwidths"])),
            input_dim=int(doc["input_dim"]),
            input_law=doc["input_law"],
            loss_trace=trace,
            provenance=doc.get("provenance", {}),
        )
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, ModelSchemaError):
            raise
        raise ModelSchemaError(f"malformed model file: {exc}") from exc
