"""Finite-difference gradient suite over every layer type.

Each check builds a small random instance, reduces its output to a scalar
with a fixed random weighting (so no coordinate's gradient cancels by
symmetry) and compares the analytic gradient of every input and parameter
with central differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from .config import NetworkConfig, derive_rng
from .gain_control import GDN, IGDN
from .layers import ChannelAttention, Fusion, Module, ResBlock
from .network import Phase
from .svdo import svdo_loss
from .tensor import Tensor, conv2d, finite_difference_check

TOLERANCE = 1e-4
DEFAULT_SHAPE = (2, 4, 5, 5)


@dataclass
class GradCheckRow:
    layer: str
    target: str
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _weighted(rng, shape) -> Callable[[Tensor], Tensor]:
    r = Tensor(rng.standard_normal(shape))
    return lambda out: (out * r).sum()


def _check(layer: str, fn: Callable[[], Tensor], targets: Iterable[tuple[str, Tensor]],
           module: Module | None, eps: float) -> list[GradCheckRow]:
    rows = []
    for name, t in targets:
        if module is not None:
            module.zero_grad()
        rows.append(GradCheckRow(layer, name, finite_difference_check(lambda _x: fn(), t, eps)))
    return rows


def _module_check(layer: str, module: Module, inputs: list[Tensor], call, rng, eps: float) -> list[GradCheckRow]:
    with_grad = [Tensor(x.data, requires_grad=True) for x in inputs]
    out_shape = call(*with_grad).shape
    reduce = _weighted(rng, out_shape)
    fn = lambda: reduce(call(*with_grad))  # noqa: E731
    names = ["input"] if len(with_grad) == 1 else [f"input{i}" for i in range(len(with_grad))]
    targets = list(zip(names, with_grad)) + list(module.named_parameters())
    return _check(layer, fn, targets, module, eps)


def _wake_attention(module: Module) -> None:
    """Shift squeeze-layer biases positive so the hidden ReLUs are active and fc1 is exercised."""
    for m in module.modules():
        if isinstance(m, ChannelAttention):
            m.fc1.bias.data[...] = abs(m.fc1.bias.data) + 0.5


def run_gradcheck(seed: int = 0, shape: tuple[int, int, int, int] = DEFAULT_SHAPE,
                  eps: float = 1e-6) -> list[GradCheckRow]:
    """Run the suite; one row per (layer, differentiated tensor)."""
    rng = derive_rng(seed, "gradcheck")
    n, c, h, w = shape
    x = lambda: Tensor(rng.standard_normal(shape))  # noqa: E731
    rows: list[GradCheckRow] = []

    # conv2d as a bare op (the module form is covered inside the others)
    xi = Tensor(rng.standard_normal(shape), requires_grad=True)
    wt = Tensor(rng.standard_normal((c, c, 3, 3)) * 0.3, requires_grad=True)
    bt = Tensor(rng.standard_normal(c), requires_grad=True)
    reduce = _weighted(rng, shape)
    rows += _check("conv2d", lambda: reduce(conv2d(xi, wt, bt)), [("input", xi), ("weight", wt), ("bias", bt)],
                   None, eps)

    gdn = GDN(c)
    gdn.params.w.data[...] = rng.uniform(0.0, 0.5, (c, c))
    gdn.params.b.data[...] = rng.uniform(0.5, 1.5, c)
    rows += _module_check("gdn", gdn, [x()], gdn, rng, eps)

    igdn = IGDN(c)
    igdn.params.w.data[...] = rng.uniform(0.0, 0.5, (c, c))
    igdn.params.b.data[...] = rng.uniform(0.5, 1.5, c)
    rows += _module_check("igdn", igdn, [x()], igdn, rng, eps)

    reduction = 2 if c % 2 == 0 else 1
    ca = ChannelAttention(c, reduction, rng=rng)
    _wake_attention(ca)
    rows += _module_check("channel_attention", ca, [x()], ca, rng, eps)

    rb = ResBlock(c, rng=rng)
    rows += _module_check("resblock", rb, [x()], rb, rng, eps)

    fu = Fusion(c, reduction, rng=rng)
    _wake_attention(fu)
    rows += _module_check("fusion", fu, [x(), x()], fu, rng, eps)

    feat = Tensor(rng.standard_normal(shape), requires_grad=True)
    rows += _check("svdo", lambda: svdo_loss(feat), [("input", feat)], None, eps)

    phase = Phase(NetworkConfig(phases=1, channels=c, fd_layers=2, aux_blocks=1, reduction=reduction), rng)
    _wake_attention(phase)
    phase_in = [x(), x()]
    rows += _module_check("phase (fdm+fam)", phase, phase_in, lambda f, r: phase(f, r).features, rng, eps)
    return rows


def format_table(rows: list[GradCheckRow]) -> str:
    width = max(len(r.layer) for r in rows) if rows else 5
    tw = max(len(r.target) for r in rows) if rows else 6
    lines = [f"{'layer':<{width}}  {'tensor':<{tw}}  {'max rel err':>12}  result"]
    for r in rows:
        lines.append(f"{r.layer:<{width}}  {r.target:<{tw}}  {r.max_rel_error:>12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)


def all_passed(rows: list[GradCheckRow]) -> bool:
    return all(r.passed for r in rows)


def worst_by_layer(rows: list[GradCheckRow]) -> dict[str, float]:
    out: dict[str, float] = {}
    for r in rows:
        out[r.layer] = max(out.get(r.layer, 0.0), r.max_rel_error)
    return out


__all__ = ["GradCheckRow", "TOLERANCE", "run_gradcheck", "format_table", "all_passed", "worst_by_layer"]
