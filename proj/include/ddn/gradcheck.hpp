#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddn/rng.hpp"
#include "ddn/tensor.hpp"

namespace ddn {

// Central finite-difference oracle. `eval` is a pure forward pass over the
// current contents of `params`; `grads` runs one analytic backward and
// returns gradients aligned with `params`. The two paths never share code.
struct FdCheck {
  std::vector<Tensor*> params;
  std::function<double()> eval;
  std::function<std::vector<Tensor>()> grads;
};

// max over checked coordinates of |analytic - numeric| / max(1e-8, |numeric|).
// max_coords > 0 subsamples coordinates (deterministically from `seed`) for
// large composites.
double fd_max_rel_err(FdCheck& check, double step = 1e-5,
                      std::size_t max_coords = 0, std::uint64_t seed = 7);

struct GradCheckCase {
  std::string name;
  double rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Every differentiable op, every block kind, and a tiny full network.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 42);

}  // namespace ddn
