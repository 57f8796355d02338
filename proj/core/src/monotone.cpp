#include "iopcal/monotone.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "iopcal/error.hpp"

namespace iopcal {

namespace {

QuadratureRule build_rule(std::size_t points) {
  // Closed Clenshaw-Curtis weights (Trefethen, "Spectral Methods in MATLAB").
  const std::size_t n = points - 1;
  const double pi = std::numbers::pi;
  QuadratureRule rule;
  rule.nodes.resize(points);
  rule.weights.assign(points, 0.0);
  for (std::size_t k = 0; k <= n; ++k) {
    rule.nodes[k] = std::cos(pi * static_cast<double>(k) / static_cast<double>(n));
  }
  const double nd = static_cast<double>(n);
  if (n % 2 == 0) {
    rule.weights[0] = rule.weights[n] = 1.0 / (nd * nd - 1.0);
  } else {
    rule.weights[0] = rule.weights[n] = 1.0 / (nd * nd);
  }
  for (std::size_t i = 1; i < n; ++i) {
    const double theta = pi * static_cast<double>(i) / nd;
    double v = 1.0;
    const std::size_t half = n % 2 == 0 ? n / 2 - 1 : (n - 1) / 2;
    for (std::size_t k = 1; k <= half; ++k) {
      const double kd = static_cast<double>(k);
      v -= 2.0 * std::cos(2.0 * kd * theta) / (4.0 * kd * kd - 1.0);
    }
    if (n % 2 == 0) v -= std::cos(nd * theta) / (nd * nd - 1.0);
    rule.weights[i] = 2.0 * v / nd;
  }
  return rule;
}

void check(const MonotoneNetSpec& spec, std::span<const double> params, double x) {
  validate(spec);
  if (params.size() != param_count(spec)) {
    fail(ErrorKind::invalid_input, "monotone_eval: expected " +
                                       std::to_string(param_count(spec)) +
                                       " parameters, got " + std::to_string(params.size()));
  }
  if (!std::isfinite(x)) fail(ErrorKind::invalid_input, "monotone_eval: non-finite input");
}

}  // namespace

const QuadratureRule& clenshaw_curtis(std::size_t points) {
  if (points < 2) fail(ErrorKind::invalid_parameter, "clenshaw_curtis: need >= 2 points");
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[points];
  if (!slot) slot = std::make_unique<QuadratureRule>(build_rule(points));
  return *slot;
}

MonotoneNetSpec make_monotone_spec(std::vector<std::size_t> hidden,
                                   std::size_t quadrature_points) {
  MonotoneNetSpec spec;
  spec.derivative_net.widths.push_back(1);
  spec.derivative_net.widths.insert(spec.derivative_net.widths.end(), hidden.begin(),
                                    hidden.end());
  spec.derivative_net.widths.push_back(1);
  spec.derivative_net.positive_outputs = {true};
  spec.quadrature_points = quadrature_points;
  return spec;
}

void validate(const MonotoneNetSpec& spec) {
  validate(spec.derivative_net);
  const MlpSpec& net = spec.derivative_net;
  if (net.input_size() != 1 || net.output_size() != 1) {
    fail(ErrorKind::invalid_input, "monotone net: derivative network must be scalar to scalar");
  }
  if (net.positive_outputs.size() != 1 || !net.positive_outputs[0]) {
    fail(ErrorKind::invalid_input, "monotone net: derivative output must be positive");
  }
  if (spec.quadrature_points < 2) {
    fail(ErrorKind::invalid_input, "monotone net: quadrature_points must be >= 2");
  }
}

std::size_t param_count(const MonotoneNetSpec& spec) {
  return param_count(spec.derivative_net) + 1;
}

MonotoneEvaluator::MonotoneEvaluator(const MonotoneNetSpec& spec,
                                     std::span<const double> params)
    : net_(&spec.derivative_net), params_(params), rule_(&clenshaw_curtis(spec.quadrature_points)) {
  check(spec, params, 0.0);
  const auto& widths = net_->widths;
  const std::size_t layers = widths.size() - 1;
  std::size_t widest = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets_.push_back(layer_offset(*net_, l));
    widest = std::max({widest, widths[l], widths[l + 1]});
  }
  in_slope_.resize(layers);
  in_icpt_.resize(layers);
  pre_slope_.resize(layers);
  pre_icpt_.resize(layers);
  roots_.resize(layers);
  acts_.resize(layers + 1);
  for (std::size_t l = 0; l < layers; ++l) {
    in_slope_[l].resize(widths[l]);
    in_icpt_[l].resize(widths[l]);
    pre_slope_[l].resize(widths[l + 1]);
    pre_icpt_[l].resize(widths[l + 1]);
    acts_[l].resize(widths[l]);
  }
  acts_[layers].resize(1);
  in_slope_[0][0] = 1.0;
  in_icpt_[0][0] = 0.0;
  delta_.resize(widest);
  next_.resize(widest);
}

void MonotoneEvaluator::emit(double t0, double t1, double slope, double intercept) {
  constexpr double kSaturated = 36.0;
  // Softplus is resolved well by one rule when its argument varies by a few units.
  constexpr double kMaxArgumentSpan = 8.0;
  // Cut where the argument crosses +-kSaturated.
  std::size_t count = 0;
  double bounds[4];
  bounds[count++] = t0;
  if (slope != 0.0) {
    for (double level : {-kSaturated, kSaturated}) {
      const double t = (level - intercept) / slope;
      if (t > t0 && t < t1) bounds[count++] = t;
    }
  }
  std::sort(bounds + 1, bounds + count);
  bounds[count++] = t1;
  for (std::size_t s = 0; s + 1 < count; ++s) {
    const double a = bounds[s], b = bounds[s + 1];
    if (!(b > a)) continue;
    const double z_mid = slope * (0.5 * (a + b)) + intercept;
    if (z_mid < -kSaturated) {
      pieces_.push_back({a, b, slope, intercept, Piece::Kind::negligible});
      continue;
    }
    if (z_mid > kSaturated) {
      pieces_.push_back({a, b, slope, intercept, Piece::Kind::linear});
      continue;
    }
    if (std::abs(slope) * (b - a) <= kMaxArgumentSpan) {
      pieces_.push_back({a, b, slope, intercept, Piece::Kind::quadrature});
      continue;
    }
    // Cut points are stepped from the end nearest 0, so they do not depend on
    // how far the evaluation range extends.
    const double step = kMaxArgumentSpan / std::abs(slope);
    const std::size_t first = pieces_.size();
    if (b <= 0.0) {
      double hi = b;
      for (std::size_t k = 1;; ++k) {
        const double lo = std::max(a, b - step * static_cast<double>(k));
        pieces_.push_back({lo, hi, slope, intercept, Piece::Kind::quadrature});
        if (lo == a) break;
        hi = lo;
      }
      std::reverse(pieces_.begin() + static_cast<std::ptrdiff_t>(first), pieces_.end());
    } else {
      double lo = a;
      for (std::size_t k = 1;; ++k) {
        const double hi = std::min(b, a + step * static_cast<double>(k));
        pieces_.push_back({lo, hi, slope, intercept, Piece::Kind::quadrature});
        if (hi == b) break;
        lo = hi;
      }
    }
  }
}

void MonotoneEvaluator::descend(std::size_t layer, double t0, double t1) {
  const auto& widths = net_->widths;
  const std::size_t n_in = widths[layer], n_out = widths[layer + 1];
  const double* w = params_.data() + offsets_[layer];
  const double* b = w + n_in * n_out;
  auto& ps = pre_slope_[layer];
  auto& pc = pre_icpt_[layer];
  const auto& is = in_slope_[layer];
  const auto& ic = in_icpt_[layer];
  for (std::size_t o = 0; o < n_out; ++o) {
    double s = 0.0, c = b[o];
    const double* row = w + o * n_in;
    for (std::size_t i = 0; i < n_in; ++i) {
      s += row[i] * is[i];
      c += row[i] * ic[i];
    }
    ps[o] = s;
    pc[o] = c;
  }
  if (layer + 1 == widths.size() - 1) {
    emit(t0, t1, ps[0], pc[0]);
    return;
  }

  auto& roots = roots_[layer];
  roots.clear();
  roots.push_back(t0);
  for (std::size_t o = 0; o < n_out; ++o) {
    if (ps[o] == 0.0) continue;
    const double r = -pc[o] / ps[o];
    if (r > t0 && r < t1) roots.push_back(r);
  }
  roots.push_back(t1);
  std::sort(roots.begin() + 1, roots.end() - 1);

  auto& ns = in_slope_[layer + 1];
  auto& nc = in_icpt_[layer + 1];
  for (std::size_t k = 0; k + 1 < roots.size(); ++k) {
    const double a = roots[k], z = roots[k + 1];
    if (!(z > a)) continue;
    const double mid = 0.5 * (a + z);
    for (std::size_t o = 0; o < n_out; ++o) {
      const bool active = ps[o] * mid + pc[o] > 0.0;
      ns[o] = active ? ps[o] : 0.0;
      nc[o] = active ? pc[o] : 0.0;
    }
    descend(layer + 1, a, z);
  }
}

const std::vector<MonotoneEvaluator::Piece>& MonotoneEvaluator::pieces(double lo, double hi) {
  pieces_.clear();
  if (lo < 0.0) descend(0, lo, 0.0);
  split_ = pieces_.size();
  if (hi > 0.0) descend(0, 0.0, hi);
  return pieces_;
}

MonotoneEvaluator::Segment MonotoneEvaluator::integrate(const Piece& p, double a, double b,
                                                        bool need_mass) const {
  Segment seg;
  const double len = b - a;
  if (p.kind == Piece::Kind::negligible) return seg;
  if (p.kind == Piece::Kind::linear) {
    seg.centre = 0.5 * (a + b);
    seg.integral = len * (p.slope * seg.centre + p.intercept);
    seg.mass = len;
    return seg;
  }
  const auto& nodes = rule_->nodes;
  const auto& weights = rule_->weights;
  const double half = 0.5 * len;
  double sum = 0.0, mass = 0.0, moment = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double t = a + half * (nodes[k] + 1.0);
    const double z = p.slope * t + p.intercept;
    const double e = std::exp(-std::abs(z));
    sum += weights[k] * ((z > 0.0 ? z : 0.0) + std::log1p(e));
    if (need_mass) {
      const double m = weights[k] * (z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e));
      mass += m;
      moment += m * t;
    }
  }
  seg.integral = half * sum;
  if (need_mass) {
    seg.mass = half * mass;
    seg.centre = mass > 0.0 ? std::clamp(moment / mass, a, b) : 0.5 * (a + b);
  }
  return seg;
}

void MonotoneEvaluator::check_inputs(std::span<const double> xs) const {
  for (double x : xs) {
    if (!std::isfinite(x)) fail(ErrorKind::invalid_input, "monotone_eval: non-finite input");
  }
}

void MonotoneEvaluator::prepare(std::span<const double> xs) {
  double lo = 0.0, hi = 0.0;
  for (double x : xs) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  pieces(lo, hi);
  const std::size_t count = pieces_.size();
  full_.resize(count);
  towards_zero_.resize(count);
  for (std::size_t j = 0; j < count; ++j) {
    full_[j] = integrate(pieces_[j], pieces_[j].t0, pieces_[j].t1, true);
  }
  double acc = 0.0;
  for (std::size_t j = split_; j < count; ++j) {
    towards_zero_[j] = acc;
    acc += full_[j].integral;
  }
  acc = 0.0;
  for (std::size_t j = split_; j-- > 0;) {
    towards_zero_[j] = acc;
    acc += full_[j].integral;
  }
}

// Piece containing x (x != 0): on the positive side the piece whose [t0, t1)
// holds x, on the negative side the one whose (t0, t1] does.
std::size_t MonotoneEvaluator::locate(double x) const {
  if (x > 0.0) {
    auto it = std::upper_bound(pieces_.begin() + static_cast<std::ptrdiff_t>(split_),
                               pieces_.end(), x,
                               [](double v, const Piece& p) { return v < p.t0; });
    return static_cast<std::size_t>(it - pieces_.begin()) - 1;
  }
  auto it = std::lower_bound(pieces_.begin(), pieces_.begin() + static_cast<std::ptrdiff_t>(split_),
                             x, [](const Piece& p, double v) { return p.t1 < v; });
  return static_cast<std::size_t>(it - pieces_.begin());
}

double MonotoneEvaluator::value_prepared(double x) const {
  const double bias = params_.back();
  if (x == 0.0) return bias;
  const std::size_t j = locate(x);
  const Piece& p = pieces_[j];
  if (x > 0.0) return bias + towards_zero_[j] + integrate(p, p.t0, x, false).integral;
  return bias - towards_zero_[j] - integrate(p, x, p.t1, false).integral;
}

double MonotoneEvaluator::value(double x) {
  const double xs[1] = {x};
  double out[1];
  values(xs, out);
  return out[0];
}

void MonotoneEvaluator::values(std::span<const double> xs, std::span<double> out) {
  check_inputs(xs);
  prepare(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = value_prepared(xs[i]);
}

void MonotoneEvaluator::gradient(double x, double upstream, std::span<double> grad_params) {
  const double xs[1] = {x};
  const double us[1] = {upstream};
  gradients(xs, us, grad_params);
}

// The output pre-activation is affine on a piece, so the node-weighted sum of
// its parameter gradients equals one gradient taken at the weighted mean node.
void MonotoneEvaluator::gradients(std::span<const double> xs, std::span<const double> upstream,
                                  std::span<double> grad_params) {
  check_inputs(xs);
  prepare(xs);
  const std::size_t count = pieces_.size();
  // Difference array over pieces: coefficient of each fully covered piece.
  coeff_.assign(count + 1, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i], u = upstream[i];
    grad_params.back() += u;
    if (x == 0.0 || u == 0.0) continue;
    const std::size_t j = locate(x);
    const Piece& p = pieces_[j];
    if (x > 0.0) {
      coeff_[split_] += u;
      coeff_[j] -= u;
      const Segment seg = integrate(p, p.t0, x, true);
      if (seg.mass > 0.0) backprop_at(seg.centre, u * seg.mass, grad_params.data());
    } else {
      coeff_[j + 1] -= u;
      coeff_[split_] += u;
      const Segment seg = integrate(p, x, p.t1, true);
      if (seg.mass > 0.0) backprop_at(seg.centre, -u * seg.mass, grad_params.data());
    }
  }
  double c = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    c += coeff_[j];
    if (c != 0.0 && full_[j].mass > 0.0) {
      backprop_at(full_[j].centre, c * full_[j].mass, grad_params.data());
    }
  }
}

void MonotoneEvaluator::backprop_at(double t, double delta, double* grad_net) {
  const auto& widths = net_->widths;
  const std::size_t layers = widths.size() - 1;
  acts_[0][0] = t;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const std::size_t n_in = widths[l], n_out = widths[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + n_in * n_out;
    for (std::size_t o = 0; o < n_out; ++o) {
      double acc = b[o];
      const double* row = w + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * acts_[l][i];
      acts_[l + 1][o] = acc > 0.0 ? acc : 0.0;
    }
  }
  delta_[0] = delta;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t n_in = widths[l], n_out = widths[l + 1];
    const double* x = acts_[l].data();
    const double* w = params_.data() + offsets_[l];
    double* gw = grad_net + offsets_[l];
    double* gb = gw + n_in * n_out;
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta_[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* row = gw + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) row[i] += d * x[i];
    }
    if (l == 0) break;
    std::fill(next_.begin(), next_.begin() + static_cast<std::ptrdiff_t>(n_in), 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta_[o];
      if (d == 0.0) continue;
      const double* row = w + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) next_[i] += d * row[i];
    }
    for (std::size_t i = 0; i < n_in; ++i) delta_[i] = x[i] > 0.0 ? next_[i] : 0.0;
  }
}

double monotone_eval(const MonotoneNetSpec& spec, std::span<const double> params, double x) {
  check(spec, params, x);
  return MonotoneEvaluator(spec, params).value(x);
}

double monotone_eval_backward(const MonotoneNetSpec& spec, std::span<const double> params,
                              double x, double upstream, std::span<double> grad_params) {
  check(spec, params, x);
  MonotoneEvaluator eval(spec, params);
  eval.gradient(x, upstream, grad_params);
  return eval.value(x);
}

}  // namespace iopcal
