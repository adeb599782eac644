#!/usr/bin/env python3
"""How reciprocal nearest-filter selection picks survivors in one layer.

Six filters live in a plane: a tight cluster of three, a looser pair,
and one outlier.  Each filter recommends its k closest peers (itself
included); a filter survives only if every filter in the layer
recommends it.  The walkthrough prints the similarity matrix, grows k
until enough filters are unanimously recommended, then compares the
result against the l1 / random / k-means baseline selectors.
"""

import numpy as np

from clr_rnf import (
    closeness_rank,
    kmeans_select,
    l1_select,
    random_select,
    reciprocal_intersection,
    rnf_select,
    similarity_matrix,
)

FILTERS = np.array(
    [
        [0.0, 0.0],    # 0: cluster
        [0.2, 0.1],    # 1: cluster
        [0.1, -0.1],   # 2: cluster
        [2.0, 2.0],    # 3: pair
        [2.3, 1.8],    # 4: pair
        [6.0, -5.0],   # 5: outlier
    ]
)


def main():
    sim = similarity_matrix(FILTERS)
    print("similarity matrix (rows sum to 1; row max on the diagonal):")
    for j, row in enumerate(sim):
        print(f"  {j}: " + " ".join(f"{v:6.3f}" for v in row))

    print("\ncloseness rank of every filter with respect to filter 0:")
    for h in range(len(FILTERS)):
        print(f"  rank(filter {h} | filter 0) = {closeness_rank(sim, 0, h)}")

    target = 3
    print(f"\ngrowing k until at least {target} filters are in everyone's k-NN set:")
    k = target
    while True:
        members = sorted(reciprocal_intersection(sim, k))
        print(f"  k={k}: unanimous recommendations = {members}")
        if len(members) >= target:
            break
        k += 1

    result = rnf_select(FILTERS, target)
    print(f"\nkept {list(result.kept)} (final k={result.final_k}, "
          f"trimmed {result.trimmed} overshoot)")

    print("\nbaseline selectors on the same layer and target:")
    print(f"  l1 norm : {list(l1_select(FILTERS, target).kept)}")
    print(f"  random  : {list(random_select(FILTERS, target, seed=0).kept)} (seed 0)")
    print(f"  k-means : {list(kmeans_select(FILTERS, target, seed=0).kept)} (seed 0)")
    print("\nthe reciprocal rule favors filters that are close to everything;")
    print("l1 favors large filters, so it keeps the outlier instead.")


if __name__ == "__main__":
    main()
