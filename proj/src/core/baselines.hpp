#pragma once

#include "core/optimizer.hpp"

namespace zopo {

/// Samples the pool uniformly without replacement until the budget is spent.
RunTrace run_random_search(const OptimizerConfig& config,
                           const CandidatePool& pool,
                           const Objective& objective, Rng& rng);

/// Classic two-point zeroth-order ascent restricted to the pool. After the
/// shared random initialization, each step draws a random unit direction u,
/// queries the projections of z +- h u onto unqueried candidates, forms the
/// secant estimate g = (r+ - r-) / (s+ - s-) u from the realized
/// displacements s+- along u, then queries the projection of z + eta g.
/// Three queries per step; budget accounting identical to the optimizer.
/// The probe step h defaults to h_factor times the median nearest-neighbor
/// distance of the pool.
RunTrace run_fd_zoo(const OptimizerConfig& config, const CandidatePool& pool,
                    const Objective& objective, Rng& rng,
                    double h_factor = 0.1);

}  // namespace zopo
