"""Pilot: medium scenarios, default (auto) arm, raw-score discrimination."""
import sys
import time

import numpy as np

from nuindex.harness import StudyConfig, run_study

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 30
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 1

scenarios = (
    "medium_uncorrelated",
    "medium_non_group_sparse",
    "medium_group_sparse",
)
t0 = time.time()
cfg = StudyConfig(
    scenarios=scenarios,
    replicates=reps,
    n=10_000,
    master_seed=seed,
    arms="auto",
    workers=1,
)
res = run_study(cfg)
stats = {}
for name in scenarios:
    recs = [
        r
        for r in res.records
        if r.scenario == name and r.error is None and r.arm == "balancing"
    ]
    med = np.median([r.n_selected for r in recs])
    tpr = np.mean([r.tpr for r in recs])
    tnr = np.mean([r.tnr for r in recs])
    tau = np.nanmean([r.kendall_tau for r in recs])
    auc_i = np.mean([r.auc_index for r in recs])
    auc_c = np.mean([r.auc_count for r in recs])
    stats[name] = dict(med=med, tnr=tnr, tau=tau, auc_i=auc_i, auc_c=auc_c)
    print(
        f"{name:28s} med_sel={med:5.1f} tpr={tpr:.3f} tnr={tnr:.3f} "
        f"tau={tau:+.3f} auc_index={auc_i:.4f} auc_count={auc_c:.4f}"
    )

unc = stats["medium_uncorrelated"]
ngs = stats["medium_non_group_sparse"]
gs = stats["medium_group_sparse"]
print("\ncriterion 7 clauses:")
print(f"  med_sel ngs>unc>gs : {ngs['med']:.1f} > {unc['med']:.1f} > {gs['med']:.1f}")
print(f"  tnr gs>unc>ngs     : {gs['tnr']:.3f} > {unc['tnr']:.3f} > {ngs['tnr']:.3f}")
print(f"  tau ngs<0.3        : {ngs['tau']:.3f}   tau unc>0.45: {unc['tau']:.3f}")
print("criterion 8 clauses:")
for name in scenarios:
    s = stats[name]
    print(f"  {name:28s} index {s['auc_i']:.4f} vs count {s['auc_c']:.4f}")
drop_c_ngs = unc["auc_c"] - ngs["auc_c"]
drop_i_ngs = unc["auc_i"] - ngs["auc_i"]
drop_c_gs = unc["auc_c"] - gs["auc_c"]
drop_i_gs = unc["auc_i"] - gs["auc_i"]
print(f"  drop unc->ngs: count {drop_c_ngs:+.4f} vs index {drop_i_ngs:+.4f}")
print(f"  drop unc->gs : count {drop_c_gs:+.4f} vs index {drop_i_gs:+.4f}")
print(f"elapsed {time.time() - t0:.0f}s")
