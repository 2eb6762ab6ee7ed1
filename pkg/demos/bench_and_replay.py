"""
Benchmark runs, trace files and bound replay
============================================

The harness runs a named scheme on a named instance, writes trace.csv and
summary.json, and replays the complexity bounds of the theory on the
recorded trace.  The same steps are available from the command line as
``holdertensor run``, ``holdertensor replay`` and ``holdertensor slope``.
"""

import os
import tempfile

from holdertensor import ExperimentConfig, load_run, replay_bounds, run_experiment, slope_estimate

out = os.path.join(tempfile.mkdtemp(), "alg2-power")
config = ExperimentConfig("power_norm:n=16,degree=3", "alg2", epsilon=1e-10, nu=1.0, seed=0,
                          out=out)
run_experiment(config)
print("files written:", sorted(os.listdir(out)))

# replay reads only the files, so traces can be checked long after the run
trace = load_run(out)
for report in replay_bounds(trace):
    print(report.line())

# log-log slope of the gradient norm over the second half of the run
T = trace.rows[-1][0]
print("tail slope over iterations %d..%d: %.2f" % (T // 2, T, slope_estimate(trace, (T // 2, T))))
