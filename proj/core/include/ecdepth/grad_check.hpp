#pragma once

#include <string>

#include "ecdepth/rng.hpp"
#include "ecdepth/tape.hpp"

namespace ecdepth {

// Central-difference gradient verification for one leaf of a scalar-valued
// tape. Probes `probe_count` random coordinates of the leaf and returns the
// maximum of |analytic - central| / max(|analytic|, |central|, 1e-12).
// Any non-finite intermediate turns the result into +infinity. The caller is
// responsible for binding inputs away from non-smooth points (ties, kinks,
// integer sample coordinates).
double finite_difference_check(Tape<double>& tape, Var<double> out, const std::string& leaf,
                               double step, int probe_count, Rng& rng);

}  // namespace ecdepth
