#include "ecdepth/grad_check.hpp"

#include <cmath>
#include <limits>

namespace ecdepth {

double finite_difference_check(Tape<double>& tape, Var<double> out, const std::string& leaf,
                               double step, int probe_count, Rng& rng) {
  if (numel(tape.node(out.id).shape) != 1)
    fail(ErrorCategory::shape, "finite_difference_check: output must be scalar");
  if (!(step > 0.0)) fail(ErrorCategory::shape, "finite_difference_check: step must be positive");

  constexpr double kInf = std::numeric_limits<double>::infinity();

  Tensor<double> base;
  {
    // Snapshot the leaf as currently bound.
    bool found = false;
    for (const auto& name : tape.leaf_names())
      if (name == leaf) found = true;
    if (!found) fail(ErrorCategory::shape, "finite_difference_check: unknown leaf " + leaf);
  }
  // Locate the node to read its bound value.
  int leaf_id = -1;
  for (int id = 0; id <= out.id; ++id)
    if (tape.node(id).op == Op::leaf && tape.node(id).leaf_name == leaf) leaf_id = id;
  if (leaf_id < 0) fail(ErrorCategory::shape, "finite_difference_check: leaf not upstream of output");
  base = tape.node(leaf_id).value;
  if (base.size() == 0) fail(ErrorCategory::runtime, "finite_difference_check: leaf is unbound");

  Tensor<double> analytic;
  try {
    tape.evaluate(out);
    analytic = tape.backward(out)[leaf];
  } catch (const Error&) {
    return kInf;
  }
  if (!analytic.all_finite()) return kInf;

  auto eval_at = [&](const Tensor<double>& x) -> double {
    tape.bind(leaf, x);
    tape.evaluate(out);
    return tape.value(out).item();
  };

  double max_rel = 0.0;
  Tensor<double> probe = base;
  for (int p = 0; p < probe_count; ++p) {
    int64_t i = rng.uniform_int(0, base.size() - 1);
    double h = step;
    double fp, fm;
    try {
      probe[i] = base[i] + h;
      fp = eval_at(probe);
      probe[i] = base[i] - h;
      fm = eval_at(probe);
    } catch (const Error&) {
      tape.bind(leaf, base);
      return kInf;
    }
    probe[i] = base[i];
    double central = (fp - fm) / (2.0 * h);
    double a = analytic[i];
    if (!std::isfinite(central) || !std::isfinite(a)) {
      tape.bind(leaf, base);
      return kInf;
    }
    double denom = std::max({std::abs(a), std::abs(central), 1e-12});
    max_rel = std::max(max_rel, std::abs(a - central) / denom);
  }
  tape.bind(leaf, base);
  tape.evaluate(out);
  return max_rel;
}

}  // namespace ecdepth
