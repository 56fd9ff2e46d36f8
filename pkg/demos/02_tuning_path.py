"""Choose the penalties with the greedy path search.

Starting from a large common penalty, each step shrinks the group penalty,
the interaction penalty or both by the factor delta, moving to whichever of
the three candidates has the lowest criterion. The search stops when the
criterion no longer improves.
"""

from smog import Scenario, generate, greedy_search, tune

train, test, truth = generate(Scenario("III", n=150, d=40, seed=2))

trace = greedy_search(train, criterion="bic", delta=0.9, max_steps=15)
print(f"lambda0 = {trace.lambda0:.3f}")
print(f"{'step':>4} {'lambda1':>9} {'lambda3':>9} {'BIC':>10} {'beta':>4} {'gamma':>5}")
for row in trace.rows:
    print(f"{row['step']:>4} {row['lambda1']:>9.3f} {row['lambda3']:>9.3f} "
          f"{row['criterion']:>10.3f} {row['n_active_beta']:>4} {row['n_active_gamma']:>5}")
print(f"chosen step {trace.chosen}: lambda1={trace.lambda1:.3f}, lambda3={trace.lambda3:.3f}")

# Several damping ratios can be compared; the overall minimizer is kept. The
# cross-validation score is the fold average of the held-out residual sum of squares.
best, traces = tune(train, "cv", deltas=(0.8, 0.9), max_steps=20)
for tr in traces:
    print(f"delta={tr.delta}: held-out squared error per fold {tr.criterion:.3f} "
          f"after {len(tr.rows) - 1} steps")
print(f"selected delta {best.delta}")
