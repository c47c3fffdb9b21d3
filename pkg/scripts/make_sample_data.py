"""Regenerate the synthetic sample series shipped in ``src/scrambling/data``.

Both files come from the rate model, not from measurements:
``sample_k_trace.csv`` is K(t) for n = 2000, delta = 0.78, d = 1 rad/ms, and
``sample_fidelity_trace.csv`` is the fidelity built from it with a decay law
chi'(K) = 0.02 K**0.96.
"""

from pathlib import Path

import numpy as np

from scrambling import lg_model, scaling

OUT = Path(__file__).resolve().parents[1] / "src" / "scrambling" / "data"


def main():
    n = 2000
    times = np.linspace(0.0, 40.0, 401)
    params = lg_model.LgParams(n, 1.0, 0.78)
    tr = lg_model.evolve_amplitudes(lg_model.upsilon_from_params(params), lg_model.unit_vector(n), times)
    k = scaling.TimeSeries(times, tr.K)
    note = ["synthetic: rate model n=2000 delta=0.78 d=1 rad/ms"]
    scaling.write_series(OUT / "sample_k_trace.csv", k, note)
    fid = scaling.synthetic_fidelity(k, 0.02, 0.96)
    scaling.write_series(OUT / "sample_fidelity_trace.csv", fid, note + ["fidelity from chi'(K) = 0.02 K^0.96"])


if __name__ == "__main__":
    main()
