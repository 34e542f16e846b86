"""Pilot: confounded scenarios after fold-level CV revert + stratum folds."""
import sys
import time

import numpy as np

from nuindex.harness import StudyConfig, run_study

scenarios = sys.argv[1].split(",")
reps = int(sys.argv[2])
seed = int(sys.argv[3]) if len(sys.argv) > 3 else 5

t0 = time.time()
cfg = StudyConfig(
    scenarios=tuple(scenarios),
    replicates=reps,
    n=10_000,
    master_seed=seed,
    arms="both",
    workers=1,
)
res = run_study(cfg)
for name in scenarios:
    rows = {}
    for arm in ("balancing", "unadjusted"):
        key = (name, arm)
        s = res.summaries[key] if hasattr(res, "summaries") else None
        rows[arm] = s
    # paired AUC diff from records
    recs = [r for r in res.records if r.scenario == name and r.error is None]
    by_rep = {}
    for r in recs:
        by_rep.setdefault(r.replicate, {})[r.arm] = r
    diffs = [
        d["balancing"].auc_index - d["unadjusted"].auc_index
        for d in by_rep.values()
        if len(d) == 2
    ]
    diffs = np.array(diffs)
    for arm in ("balancing", "unadjusted"):
        sub = [r for r in recs if r.arm == arm]
        med = np.median([r.n_selected for r in sub])
        tpr = np.mean([r.tpr for r in sub])
        tnr = np.mean([r.tnr for r in sub])
        tau = np.nanmean([r.kendall_tau for r in sub])
        aucv = np.mean([r.auc_index for r in sub])
        print(
            f"{name:28s} {arm:10s} med_sel={med:5.1f} tpr={tpr:.3f} "
            f"tnr={tnr:.3f} tau={tau:+.3f} auc={aucv:.4f}"
        )
    print(
        f"{name:28s} paired AUC diff (bal-unadj): mean {diffs.mean():+.4f} "
        f"se {diffs.std(ddof=1) / np.sqrt(len(diffs)):.4f}"
    )
print(f"elapsed {time.time() - t0:.0f}s")
