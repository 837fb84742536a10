# %% [markdown]
# # Workers vs. wall-clock time
#
# Fit the saturating law to synthetic observations, then split a fixed
# compute budget C = N * t between parallel workers N and time t.

# %%
import numpy as np

from asyncevo import scaling as S

# %%
pts = S.synthetic_points(S.REFERENCE_FIT, [1, 2, 4, 8], [1, 3, 6, 12, 24, 48, 72])
res = S.fit(pts)
print(res.params, "R2 =", round(res.r_squared, 6))

# %% [markdown]
# With noise the parameters wander a long way even though the curve still fits.

# %%
noisy = S.synthetic_points(S.REFERENCE_FIT, [1, 2, 4, 8], [1, 3, 6, 12, 24, 48, 72],
                           noise_sigma=2.0, rng=np.random.default_rng(0))
print(S.fit(noisy).params)

# %% [markdown]
# Optimal integer allocations along the budget axis.

# %%
for budget in (8, 24, 72, 192, 576):
    n, t = S.optimal_allocation(S.REFERENCE_FIT, budget)
    print(f"C={budget:4d}  N*={n:3d}  t*={t:7.2f}  P={S.predict(S.REFERENCE_FIT, n, t):6.2f}")
