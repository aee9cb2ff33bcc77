"""Deep attention-only stacks (no skips) and their rank-1 residual decay.

A CSP stack of depth L with per-layer weights W_l and a 1-Lipschitz
pointwise map keeps ``||eps(X_l)||_{1,inf} <= C^{l/2} (lam*beta)^l ||eps(X)||``
with ``beta = max_l norm1(W_l)``; a softmax stack collapses towards rank 1.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import init_attention_params, multi_head_attention
from .csp import CspConfig, csp_forward
from .errors import ConfigError, NumericalError, ShapeError
from .fixtures import gaussian_weights, orthogonal_weights
from .numerics import as_matrix, norm1, residual, singular_spectrum
from .permutation import ShiftSchedule

__all__ = [
    "POINTWISE",
    "StackSpec",
    "DecayCurve",
    "make_csp_stack",
    "make_mha_stack",
    "run_stack",
    "BoundCheck",
    "verify_single_layer_bound",
    "SpectrumReport",
    "spectrum_decay_report",
    "CSV_COLUMNS",
]

POINTWISE = {
    "identity": (lambda z: z, 1.0),
    "relu": (lambda z: np.maximum(z, 0.0), 1.0),
}

CSV_COLUMNS = ("layer", "residual_norm1inf", "bound", "sigma_max", "sigma_min", "method", "seed")


@dataclass(frozen=True)
class StackSpec:
    """A skip-free stack of L attention layers.

    ``weights`` holds L C x C projections for ``kind="csp"`` or L
    AttentionParams for ``kind="mha"``.
    """

    kind: str
    weights: tuple
    pointwise: str = "identity"
    csp_config: CspConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("csp", "mha"):
            raise ConfigError(f"unknown stack kind {self.kind!r}", key="kind")
        if self.pointwise not in POINTWISE:
            raise ConfigError(f"unknown pointwise map {self.pointwise!r}", key="pointwise")
        if self.kind == "csp" and self.csp_config is None:
            raise ConfigError("CSP stacks need a csp_config", key="csp_config")
        object.__setattr__(self, "weights", tuple(self.weights))

    @property
    def depth(self):
        return len(self.weights)

    @property
    def lipschitz(self):
        return POINTWISE[self.pointwise][1]

    @property
    def beta(self):
        if self.kind != "csp" or not self.weights:
            return float("nan") if self.kind != "csp" else 0.0
        return max(norm1(w) for w in self.weights)

    def layer_config(self, layer):
        cfg = self.csp_config
        sched = cfg.schedule
        if sched.kind == "power":
            sched = ShiftSchedule.power(layer, self.depth, sched.base)
        return replace(cfg, schedule=sched, projection=self.weights[layer])


@dataclass
class DecayCurve:
    residuals: np.ndarray
    bounds: np.ndarray
    beta: float
    lipschitz: float
    spectra: list = field(default_factory=list)

    def bound_holds(self, slack=1e-9):
        return bool(np.all(self.residuals <= self.bounds * (1.0 + slack)))


def make_csp_stack(
    c,
    depth,
    seed=0,
    sigma=None,
    weights="gaussian",
    pointwise="identity",
    groups=1,
    schedule=None,
):
    """CSP stack with Gaussian (std ``sigma``, default 0.2/sqrt(C)), orthogonal or identity weights."""
    rng = np.random.default_rng(seed)
    sigma = 0.2 / np.sqrt(c) if sigma is None else sigma
    if weights == "gaussian":
        ws = [gaussian_weights(rng, c, sigma) for _ in range(depth)]
    elif weights == "orthogonal":
        ws = [orthogonal_weights(rng, c) for _ in range(depth)]
    elif weights == "identity":
        ws = [np.eye(c) for _ in range(depth)]
    else:
        raise ConfigError(f"unknown weight family {weights!r}", key="weights")
    cfg = CspConfig(c, groups, schedule or ShiftSchedule.linear())
    return StackSpec("csp", tuple(ws), pointwise, cfg, seed)


def make_mha_stack(c, depth, heads=4, seed=0, scale=None, pointwise="identity"):
    rng = np.random.default_rng(seed)
    params = [init_attention_params(c, heads, rng, scale) for _ in range(depth)]
    return StackSpec("mha", tuple(params), pointwise, None, seed)


def _layer(x, spec, layer):
    f = POINTWISE[spec.pointwise][0]
    if spec.kind == "csp":
        out, _ = csp_forward(x, spec.layer_config(layer), trace=False)
    else:
        out = multi_head_attention(x, spec.weights[layer])
    return f(out)


def run_stack(x, spec, spectra=False):
    """Apply every layer in turn, recording ``||eps||_{1,inf}`` after each."""
    x = as_matrix(x)
    n, c = x.shape
    if spec.kind == "csp":
        if spec.csp_config.channels != c:
            raise ShapeError(f"stack expects {spec.csp_config.channels} channels, got {c}", x.shape)
        if n % spec.csp_config.groups:
            raise ConfigError(f"K={spec.csp_config.groups} does not divide N={n}", key="groups")
    res = [residual(x).norm_1inf]
    specs = [singular_spectrum(x)] if spectra else []
    for layer in range(spec.depth):
        x = _layer(x, spec, layer)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite values after layer {layer + 1}", layer=layer + 1)
        res.append(residual(x).norm_1inf)
        if spectra:
            specs.append(singular_spectrum(x))
    res = np.array(res)
    ell = np.arange(spec.depth + 1)
    if spec.kind == "csp":
        lam, beta = spec.lipschitz, spec.beta
        bounds = c ** (ell / 2.0) * (lam * beta) ** ell * res[0]
    else:
        lam, beta = spec.lipschitz, float("nan")
        bounds = np.full(spec.depth + 1, np.nan)
    return DecayCurve(res, bounds, beta, lam, specs)


@dataclass(frozen=True)
class BoundCheck:
    """Both sides of the single-layer inequality and its two norm chains."""

    lhs: float
    rhs: float
    one_norm: tuple
    inf_norm: tuple
    holds: bool
    one_norm_holds: bool
    inf_norm_holds: bool

    def __bool__(self):
        return self.holds and self.one_norm_holds and self.inf_norm_holds


def verify_single_layer_bound(x, w, cfg, pointwise="identity", slack=1e-9):
    """Check ``||eps(f(CSP_W(X)))||_{1,inf} <= lam sqrt(C) ||W||_1 ||eps(X)||_{1,inf}``.

    The 1-norm chain ``<= lam ||W||_1 ||eps(X)||_1`` and the inf-norm chain
    ``<= lam C ||W||_1 ||eps(X)||_inf`` are checked separately.
    """
    x = as_matrix(x)
    c = x.shape[1]
    f, lam = POINTWISE[pointwise]
    out, _ = csp_forward(x, cfg.with_projection(w), trace=False)
    before = residual(x)
    after = residual(f(out))
    w1 = norm1(w)
    one = (after.norm1, lam * w1 * before.norm1)
    inf = (after.norm_inf, lam * c * w1 * before.norm_inf)
    lhs, rhs = after.norm_1inf, lam * np.sqrt(c) * w1 * before.norm_1inf
    tol = 1.0 + slack
    return BoundCheck(
        lhs=lhs,
        rhs=rhs,
        one_norm=one,
        inf_norm=inf,
        holds=bool(lhs <= rhs * tol),
        one_norm_holds=bool(one[0] <= one[1] * tol),
        inf_norm_holds=bool(inf[0] <= inf[1] * tol),
    )


@dataclass
class SpectrumReport:
    csp: DecayCurve
    mha: DecayCurve
    seed: int

    def rows(self):
        """CSV rows in :data:`CSV_COLUMNS` order, CSP first."""
        out = []
        for method, curve in (("csp", self.csp), ("mha", self.mha)):
            for layer, r in enumerate(curve.residuals):
                s = curve.spectra[layer] if curve.spectra else np.array([np.nan])
                out.append((layer, float(r), float(curve.bounds[layer]), float(s[0]), float(s[-1]), method, self.seed))
        return out


def spectrum_decay_report(x, csp_spec, mha_spec, seed=0):
    """Run both stacks on ``x`` and keep every layer's singular spectrum."""
    return SpectrumReport(
        csp=run_stack(x, csp_spec, spectra=True),
        mha=run_stack(x, mha_spec, spectra=True),
        seed=seed,
    )
