"""Diagnose weighted CV curve stability with and without stratum folds."""
import dataclasses

import numpy as np

from nuindex.datagen import builtin_scenarios, sample_cohort
from nuindex.penalized_glm import compute_balancing_weights, cv_fit

spec = builtin_scenarios()["confound_none_negative"]
for rep in range(4):
    cohort = sample_cohort(dataclasses.replace(spec, seed=900 + rep))
    w = compute_balancing_weights(cohort)
    strata = cohort.stratum_codes()[0]
    for tag, st in (("label-only", None), ("label+stratum", strata)):
        fit = cv_fit(
            cohort.features, cohort.infected, w, ids=cohort.ids,
            seed=900 + rep, strata=st,
        )
        i_min = int(np.argmin(fit.cv_error))
        i_sel = int(np.flatnonzero(fit.lambdas == fit.selected_lambda)[0])
        print(
            f"rep{rep} {tag:14s} cvm[min]={fit.cv_error[i_min]:.4f} "
            f"se[min]={fit.cv_se[i_min]:.5f} i_min={i_min} i_1se={i_sel} "
            f"k={int(np.sum(fit.final_coefficients != 0))}"
        )
