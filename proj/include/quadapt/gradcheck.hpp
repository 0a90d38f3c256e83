#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "quadapt/tensor.hpp"

namespace quadapt {

inline constexpr double kGradcheckTol = 1e-5;
inline constexpr double kGradcheckStep = 1e-5;

// Central-difference check of the analytic gradient of f (a scalar-valued
// function of one tensor) at x. Returns the max over coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// The analytic side runs f once under a fresh tape and reads back x's
// gradient; the numeric side re-evaluates f at x +- h*e_i without recording.
double finite_diff_check(const std::function<TensorPtr(const TensorPtr&)>& f, const TensorPtr& x,
                         double h);

struct GradcheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int probes = 0;
    bool passed = false;
};

// Finite-difference sweep over every differentiable op and every composed
// adapter/base forward, `probes` random probes each. Used by both the
// `gradcheck` CLI subcommand and the acceptance suite.
std::vector<GradcheckEntry> run_gradcheck_suite(int probes, std::uint64_t seed);

}  // namespace quadapt
