"""Optional numba kernel for the per-unit proposal composition hot path.

Everything here has a pure-numpy fallback in engines.py; the kernel only
changes speed, not the sampling distribution. Randomness stays outside:
callers pass pre-drawn uniforms.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False


if HAS_NUMBA:

    @numba.njit(cache=True)
    def alias_compose(weights_rows, value_rows, u_bucket, u_accept):
        """Draw R values per row from row-wise categorical distributions.

        Builds a Walker alias table per row (exact O(1) sampling), then
        composes the draws into an (R, n) matrix of proposals. weights_rows
        and value_rows are (n, S); the uniforms are (n, R).
        """
        n, n_cat = weights_rows.shape
        n_out = u_bucket.shape[1]
        prob = np.empty(n_cat)
        alias = np.empty(n_cat, dtype=np.int64)
        small = np.empty(n_cat, dtype=np.int64)
        large = np.empty(n_cat, dtype=np.int64)
        out = np.empty((n_out, n))
        for i in range(n):
            w = weights_rows[i]
            n_small = 0
            n_large = 0
            for s in range(n_cat):
                p = w[s] * n_cat
                prob[s] = p
                if p < 1.0:
                    small[n_small] = s
                    n_small += 1
                else:
                    large[n_large] = s
                    n_large += 1
            while n_small > 0 and n_large > 0:
                n_small -= 1
                a = small[n_small]
                g = large[n_large - 1]
                alias[a] = g
                prob[g] = (prob[g] + prob[a]) - 1.0
                if prob[g] < 1.0:
                    n_large -= 1
                    small[n_small] = g
                    n_small += 1
            while n_large > 0:
                n_large -= 1
                s = large[n_large]
                prob[s] = 1.0
                alias[s] = s
            while n_small > 0:
                n_small -= 1
                s = small[n_small]
                prob[s] = 1.0
                alias[s] = s
            row = value_rows[i]
            for r in range(n_out):
                j = int(u_bucket[i, r] * n_cat)
                if j >= n_cat:
                    j = n_cat - 1
                if u_accept[i, r] < prob[j]:
                    out[r, i] = row[j]
                else:
                    out[r, i] = row[alias[j]]
        return out

else:
    alias_compose = None
