#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mbd/tape.hpp"

namespace mbd {

// Builds the graph under test. Receives one leaf per input tensor, in
// order, and returns the output node (any shape; the harness contracts it
// with a fixed random seed tensor, so per-element output noise stays
// visible instead of being averaged away).
using GraphBuilder = std::function<Value(Tape&, const std::vector<Value>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_input = -1;          // index into `inputs`
  std::int64_t worst_element = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t elements_checked = 0;
};

// Central finite differences against tape backward.
//
// Perturbations are snapped to float32 (x+eps and x-eps are rounded to f32
// first, and the divisor is their exact double difference), so the numeric
// quotient differentiates the function the float kernels actually compute.
//
// Per-element error is relative to the gradient scale of the whole input,
//   |ga - gn| / (|ga| + |gn| + max_j |ga_j|),
// so elements whose true gradient happens to cancel to ~0 are judged
// against the input's gradient magnitude instead of against f32 rounding
// noise. A systematic adjoint bug still trips the worst element loudly.
GradCheckReport finite_difference_check(const GraphBuilder& f, std::vector<Tensor> inputs, double eps = 1e-3,
                                        int max_elements_per_input = 0, std::uint64_t sample_seed = 0);

struct GradCheckCase {
  std::string name;
  double tol;  // max relative error admitted for this op class
  std::function<GradCheckReport(std::uint64_t seed)> run;
};

// Op coverage shared by `mbd gradcheck`, the unit tests and the acceptance
// gate: primitive tape ops plus the loss compositions. Smooth ops carry a
// 1e-4 tolerance; ops checked at kink-avoiding points carry 1e-3.
std::vector<GradCheckCase> gradcheck_suite();

}  // namespace mbd
