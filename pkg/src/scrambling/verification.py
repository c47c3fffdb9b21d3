"""Cross-checks between the three routes to the cluster size on small systems.

Route (a) is the trace of the Iz commutators, route (b) the second moment of
the spectrum recovered by Fourier transforming the simulated echo over phi,
and route (c) the pair sum over the product basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exact, metrics
from .product_basis import k_pair_sum


@dataclass
class CheckResult:
    name: str
    n: int
    max_deviation: float
    tolerance: float
    samples: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.tolerance)


@dataclass
class _Acc:
    dev: dict = field(default_factory=dict)
    count: dict = field(default_factory=dict)

    def add(self, key, value: float) -> None:
        self.dev[key] = max(self.dev.get(key, 0.0), float(value))
        self.count[key] = self.count.get(key, 0) + 1


def three_routes(proto: metrics.EchoProtocol, t: float, sign_fault: bool = False) -> dict[str, float]:
    """Cluster size from each route at time ``t`` (normalised by the echo fidelity)."""
    a = proto.ideal(t)
    b = proto.perturbed(t)
    spec = metrics.fourier_extract(proto.trace(t))
    fid = metrics.fidelity(spec)
    k_comm = metrics.oto_commutator(a, b) / fid
    k_spec = metrics.cluster_size(spec)
    k_pair = k_pair_sum(exact.basis_vector(a, True), exact.basis_vector(b, True), fidelity_norm=fid, sign_fault=sign_fault)
    return {"commutator": k_comm, "spectrum": k_spec, "pair_sum": k_pair}


def run_suite(
    n_values=(2, 3, 4, 5),
    draws: int = 5,
    n_times: int = 10,
    t_max: float = 2.0,
    p_values=(0.1, 0.5),
    seed: int = 0,
    tol: float = 1e-9,
    inject_fault: bool = False,
) -> list[CheckResult]:
    """Run every equivalence and protocol check; one result per (check, n)."""
    rng = np.random.default_rng(seed)
    acc = _Acc()
    for n in n_values:
        for _ in range(draws):
            c = exact.random_gaussian(n, 1.0, int(rng.integers(2**32)))
            times = rng.uniform(0.0, t_max, n_times)
            protos = [(0.0, metrics.EchoProtocol(c, 0.0))]
            protos += [(p, metrics.EchoProtocol(c, p)) for p in p_values]
            for p, proto in protos:
                tag = "ideal" if p == 0 else "perturbed"
                for t in times:
                    k = three_routes(proto, t, sign_fault=inject_fault)
                    acc.add((f"{tag}_commutator_vs_spectrum", n), abs(k["commutator"] - k["spectrum"]))
                    acc.add((f"{tag}_commutator_vs_pair_sum", n), abs(k["commutator"] - k["pair_sum"]))
                    acc.add((f"{tag}_spectrum_vs_pair_sum", n), abs(k["spectrum"] - k["pair_sum"]))
                    tr = proto.trace(t)
                    acc.add(("echo_imaginary_part", n), tr.max_imag())
                    if p == 0:
                        spec = proto.spectrum(t)
                        acc.add(("perfect_echo_fidelity", n), abs(spec.total() - 1))
                        acc.add(("odd_orders_vanish", n), max((abs(spec[m]) for m in range(-n, n + 1) if m % 2), default=0.0))
    tols = {"perfect_echo_fidelity": 1e-10, "odd_orders_vanish": 1e-12}
    return [
        CheckResult(name, n, acc.dev[(name, n)], tols.get(name, tol), acc.count[(name, n)])
        for (name, n) in sorted(acc.dev, key=lambda key: (key[0], key[1]))
    ]
