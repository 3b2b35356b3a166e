#include "infgen/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <queue>

#include "infgen/errors.hpp"

namespace infgen {

GaussLegendreRule gauss_legendre(int n) {
  if (n < 1) throw DomainError("Gauss-Legendre rule needs at least one node");
  static std::mutex mutex;
  static std::map<int, GaussLegendreRule> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find(n); it != cache.end()) return it->second;

  GaussLegendreRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  // Newton iteration on P_n from the Chebyshev-like initial guess.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = -x;
    rule.nodes[hi] = x;
    rule.weights[lo] = w;
    rule.weights[hi] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  cache.emplace(n, rule);
  return rule;
}

namespace {

double apply_rule(const GaussLegendreRule& rule, const std::function<double(double)>& f, double a,
                  double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) sum += rule.weights[k] * f(mid + half * rule.nodes[k]);
  return half * sum;
}

struct Panel {
  double a, b, value, error, left, right;
  bool operator<(const Panel& o) const { return error < o.error; }
};

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           const QuadratureOptions& options) {
  const GaussLegendreRule rule = gauss_legendre(options.nodes);
  auto make_panel = [&](double lo, double hi, double whole) {
    const double mid = 0.5 * (lo + hi);
    const double left = apply_rule(rule, f, lo, mid);
    const double right = apply_rule(rule, f, mid, hi);
    return Panel{lo, hi, left + right, std::abs(left + right - whole), left, right};
  };

  std::priority_queue<Panel> panels;
  panels.push(make_panel(a, b, apply_rule(rule, f, a, b)));
  double value = panels.top().value;
  double error = panels.top().error;

  QuadratureResult result;
  while (true) {
    const double target = std::max(options.abs_tol, options.rel_tol * std::abs(value));
    if (error <= target) {
      result.converged = true;
      break;
    }
    if (panels.size() >= options.max_panels) break;
    const Panel worst = panels.top();
    panels.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const Panel lp = make_panel(worst.a, mid, worst.left);
    const Panel rp = make_panel(mid, worst.b, worst.right);
    value += lp.value + rp.value - worst.value;
    error += lp.error + rp.error - worst.error;
    panels.push(lp);
    panels.push(rp);
  }
  // Re-sum to shed the drift of the running updates.
  double total = 0.0, total_error = 0.0;
  result.panels = panels.size();
  while (!panels.empty()) {
    total += panels.top().value;
    total_error += panels.top().error;
    panels.pop();
  }
  result.value = total;
  result.error = total_error;
  return result;
}

}  // namespace infgen
