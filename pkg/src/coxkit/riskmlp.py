"""Deep Cox risk network: a multilayer perceptron whose single output node
estimates a patient's log-risk, trained on the negative log partial
likelihood.

Forward, loss, and gradients are hand-derived numpy; no autodiff. The loss
gradient with respect to the per-patient risks is computed in O(n) after
sorting, via prefix sums over descending-time order and suffix sums over the
per-event inverse denominators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from coxkit.data import SortedSurvivalView, SurvivalDataset

SELU_ALPHA = 1.6732632423543772
SELU_LAMBDA = 1.0507009873554805

ACTIVATIONS = ("relu", "selu")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and regularization of the risk network."""

    hidden_layers: int = 1
    nodes_per_layer: int = 8
    activation: str = "selu"
    dropout_rate: float = 0.0
    l2_coefficient: float = 0.0

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.nodes_per_layer < 1:
            raise ValueError("nodes_per_layer must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.l2_coefficient < 0.0:
            raise ValueError("l2_coefficient must be non-negative")


@dataclass
class RiskNetwork:
    """Layer weights/biases; the final layer maps to one output node."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: NetworkConfig

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ValueError("bias width must match weight columns")
        dims = [w.shape for w in self.weights]
        for (_, out_prev), (in_next, _) in zip(dims, dims[1:]):
            if out_prev != in_next:
                raise ValueError("layer dimensions do not chain")
        if dims[-1][1] != 1:
            raise ValueError("final layer must map to a single output node")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "RiskNetwork":
        return RiskNetwork(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            config=self.config,
        )


@dataclass(frozen=True)
class LossGradients:
    """Gradient of the loss with respect to risks and all parameters."""

    d_risk: np.ndarray
    weight_grads: list[np.ndarray] = field(default_factory=list)
    bias_grads: list[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class ForwardCache:
    """Intermediates of one train-mode forward pass, reused by backward."""

    layer_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    dropout_masks: list[np.ndarray | None]


def init_network(config: NetworkConfig, d: int, seed: int) -> RiskNetwork:
    """Glorot-style symmetric uniform weights, zero biases, per-seed deterministic."""
    if d < 1:
        raise ValueError("input width must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [d] + [config.nodes_per_layer] * config.hidden_layers + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return RiskNetwork(weights=weights, biases=biases, config=config)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    # exp argument clamped at 0: the positive branch never uses it, and
    # np.where evaluates both branches
    return SELU_LAMBDA * np.where(
        z > 0.0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0))
    )


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(float)
    return SELU_LAMBDA * np.where(
        z > 0.0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0))
    )


def _run_forward(net, x, train, rng):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.input_dim:
        raise ValueError(f"input has {x.shape[1]} columns, network expects {net.input_dim}")
    p = net.config.dropout_rate
    inputs, pre_acts, masks = [], [], []
    a = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w + b
        h = _activate(z, net.config.activation)
        mask = None
        if train and p > 0.0:
            mask = (rng.random(h.shape) >= p) / (1.0 - p)
            h = h * mask
        inputs.append(a)
        pre_acts.append(z)
        masks.append(mask)
        a = h
    inputs.append(a)
    risks = (a @ net.weights[-1] + net.biases[-1])[:, 0]
    return risks, ForwardCache(inputs, pre_acts, masks)


def forward(
    net: RiskNetwork, x, mode: str = "infer", dropout_rng=None
) -> np.ndarray:
    """Predicted risks for the rows of `x`.

    Train mode applies inverted dropout to hidden activations (retained units
    scaled by 1/(1-p)); infer mode is deterministic.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    rng = np.random.default_rng(dropout_rng) if mode == "train" else None
    risks, _ = _run_forward(net, x, mode == "train", rng)
    return risks


def forward_cached(
    net: RiskNetwork, x, dropout_rng=None
) -> tuple[np.ndarray, ForwardCache]:
    """Train-mode forward that also returns the cache `backward` needs."""
    rng = np.random.default_rng(dropout_rng)
    return _run_forward(net, x, True, rng)


def _sorted_loss_pieces(risks, ds, view):
    risks = np.asarray(risks, dtype=float)
    if risks.shape != (ds.n,):
        raise ValueError("risks length must match dataset size")
    if ds.n_events == 0:
        raise ValueError("batch has no observed events")
    perm = view.permutation
    starts = view.tie_groups[:, 0]
    stops = view.tie_groups[:, 1]
    h = risks[perm]
    e = ds.events[perm]
    shift = h.max()
    w = np.exp(h - shift)
    deaths = np.add.reduceat(e, starts).astype(float)
    denoms = np.cumsum(w)[stops - 1]
    return h, e, w, shift, starts, stops, deaths, denoms


def cox_loss(
    risks,
    ds: SurvivalDataset,
    view: SortedSurvivalView,
    l2_coefficient: float = 0.0,
    net: RiskNetwork | None = None,
) -> float:
    """Negative log partial likelihood of the risks, plus l2 * sum(weights^2).

    Risk sets are formed within the supplied dataset (the batch), with
    Breslow handling of ties; the log-sum-exp denominators are max-shifted.
    """
    h, e, _, shift, _, _, deaths, denoms = _sorted_loss_pieces(risks, ds, view)
    # a denominator underflows to 0 only for wildly divergent risks; the
    # resulting non-finite loss is the caller's divergence signal
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = h[e == 1].sum() - (deaths * (shift + np.log(denoms))).sum()
    loss = -float(ll)
    if l2_coefficient > 0.0:
        if net is None:
            raise ValueError("l2 penalty requires the network")
        loss += l2_coefficient * sum(float((w**2).sum()) for w in net.weights)
    return loss


def cox_loss_grad(risks, ds: SurvivalDataset, view: SortedSurvivalView) -> np.ndarray:
    """d(loss)/d(risk_k), in original patient order.

    Patient k appears in the denominator of every event at a time <= its own;
    the per-event inverse denominators are suffix-summed over tie groups so
    the whole gradient costs O(n) after sorting.
    """
    _, e, w, _, starts, stops, deaths, denoms = _sorted_loss_pieces(risks, ds, view)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = deaths / denoms
    suffix = np.cumsum(inv[::-1])[::-1]
    per_patient = np.repeat(suffix, stops - starts)
    d_sorted = -e + w * per_patient
    out = np.empty_like(d_sorted, dtype=float)
    out[view.permutation] = d_sorted
    return out


def backward(
    net: RiskNetwork,
    cache: ForwardCache,
    d_risk: np.ndarray,
    l2_coefficient: float = 0.0,
) -> LossGradients:
    """Backpropagate d(loss)/d(risk) through the cached forward pass.

    Adds the weight-decay term 2 * l2 * W to every weight gradient (biases
    are not penalized). The cache must come from `forward_cached` on the same
    inputs so dropout masks line up.
    """
    d_risk = np.asarray(d_risk, dtype=float)
    n_layers = len(net.weights)
    if len(cache.layer_inputs) != n_layers:
        raise ValueError("cache does not match network depth")
    if d_risk.shape != (cache.layer_inputs[0].shape[0],):
        raise ValueError("d_risk length must match cached batch size")

    weight_grads = [None] * n_layers
    bias_grads = [None] * n_layers
    g = d_risk[:, None]
    weight_grads[-1] = cache.layer_inputs[-1].T @ g + 2.0 * l2_coefficient * net.weights[-1]
    bias_grads[-1] = g.sum(axis=0)
    g = g @ net.weights[-1].T
    for layer in range(n_layers - 2, -1, -1):
        mask = cache.dropout_masks[layer]
        if mask is not None:
            g = g * mask
        g = g * _activate_grad(cache.pre_activations[layer], net.config.activation)
        weight_grads[layer] = (
            cache.layer_inputs[layer].T @ g + 2.0 * l2_coefficient * net.weights[layer]
        )
        bias_grads[layer] = g.sum(axis=0)
        if layer > 0:
            g = g @ net.weights[layer].T
    return LossGradients(d_risk=d_risk, weight_grads=weight_grads, bias_grads=bias_grads)


def to_dict(net: RiskNetwork) -> dict:
    """JSON-ready payload: config plus row-major weight/bias arrays per layer."""
    return {
        "config": {
            "hidden_layers": net.config.hidden_layers,
            "nodes_per_layer": net.config.nodes_per_layer,
            "activation": net.config.activation,
            "dropout_rate": net.config.dropout_rate,
            "l2_coefficient": net.config.l2_coefficient,
        },
        "input_dim": net.input_dim,
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }


def from_dict(payload: dict) -> RiskNetwork:
    config = NetworkConfig(**payload["config"])
    weights = [np.asarray(layer["weights"], dtype=float) for layer in payload["layers"]]
    biases = [np.asarray(layer["bias"], dtype=float) for layer in payload["layers"]]
    return RiskNetwork(weights=weights, biases=biases, config=config)
