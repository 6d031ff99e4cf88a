#include "tia/grad_check.hpp"

#include <cmath>
#include <limits>

namespace tia::ad {

namespace {

double eval_loss(const GraphFn& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
  return f(tape, leaves).item();
}

}  // namespace

GradCheckReport grad_check(const GraphFn& f, const std::vector<Tensor>& params,
                           double h, double tol) {
  if (h <= 0.0) throw InvalidArgument("grad_check: h must be positive");
  GradCheckReport report;
  report.pass = true;

  std::vector<std::vector<double>> analytic;
  try {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(params.size());
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
    Tensor loss = f(tape, leaves);
    GradientMap grads = tape.backward(loss);
    for (const Tensor& l : leaves) analytic.push_back(grads.at(l));
  } catch (const Error& e) {
    report.pass = false;
    report.worst = std::string("analytic pass failed: ") + e.what();
    report.max_rel_err = std::numeric_limits<double>::infinity();
    return report;
  }

  std::vector<Tensor> work = params;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t c = 0; c < work[p].values.size(); ++c) {
      const double saved = work[p].values[c];
      double fp, fm;
      try {
        work[p].values[c] = saved + h;
        fp = eval_loss(f, work);
        work[p].values[c] = saved - h;
        fm = eval_loss(f, work);
      } catch (const Error& e) {
        work[p].values[c] = saved;
        report.pass = false;
        report.max_rel_err = std::numeric_limits<double>::infinity();
        report.worst = "param " + std::to_string(p) + ", coord " +
                       std::to_string(c) + ": non-finite evaluation (" +
                       e.what() + ")";
        return report;
      }
      work[p].values[c] = saved;

      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][c];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "param " + std::to_string(p) + ", coord " +
                       std::to_string(c) + ": analytic " + std::to_string(a) +
                       " vs numeric " + std::to_string(numeric);
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace tia::ad
