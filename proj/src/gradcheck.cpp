#include "svasp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "svasp/attack.hpp"
#include "svasp/backbone.hpp"
#include "svasp/losses.hpp"
#include "svasp/ops.hpp"
#include "svasp/rng.hpp"
#include "svasp/style.hpp"
#include "svasp/tape.hpp"

namespace svasp {

Array finite_difference_gradient(const ScalarFn& f, const Array& x, double step) {
  if (step <= 0.0) throw Error("finite_difference_gradient: step must be positive");
  Array g = Array::zeros(x.shape);
  Array probe = x.clone();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = probe[i];
    probe[i] = orig + step;
    double hi = f(probe);
    probe[i] = orig - step;
    double lo = f(probe);
    probe[i] = orig;
    double d = (hi - lo) / (2.0 * step);
    if (!std::isfinite(d)) throw NonFinite("finite_difference_gradient");
    g[i] = d;
  }
  return g;
}

int GradCheckReport::failure_count() const {
  int n = 0;
  for (const auto& c : cases)
    if (!c.pass) ++n;
  return n;
}

namespace {

constexpr double kStep = 1e-5;

Array random_array(RngStream& rng, Shape shape, double lo, double hi) {
  Array a = Array::zeros(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

double linf(const Array& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

double rel_error(const Array& analytic, const Array& fd) {
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    diff = std::max(diff, std::abs(analytic[i] - fd[i]));
  return diff / std::max({1.0, linf(analytic), linf(fd)});
}

// reduces any output to a scalar through a fixed random projection, so every
// output element influences the loss
Array project(const Array& out, const Array& weights) {
  std::vector<std::size_t> all(out.rank());
  for (std::size_t d = 0; d < out.rank(); ++d) all[d] = d;
  return ops::scale(ops::mean_over_axes(ops::mul(out, weights), all),
                    static_cast<double>(out.size()));
}

struct Instance {
  std::vector<Array> inputs;
  std::function<Array(const std::vector<Array>&)> loss;  // usable tracked or eager
};

using InstanceMaker = std::function<Instance(RngStream&)>;

void run_case(GradCheckReport& report, const std::string& name, std::size_t instances,
              RngStream& rng, const InstanceMaker& make) {
  GradCheckCase result{name, 0.0, true};
  for (std::size_t it = 0; it < instances; ++it) {
    Instance inst = make(rng);
    Tape tape;
    std::vector<Array> leaves;
    leaves.reserve(inst.inputs.size());
    for (const Array& x : inst.inputs) leaves.push_back(tape.leaf(x));
    Array loss = inst.loss(leaves);
    tape.backward(loss);
    for (std::size_t j = 0; j < inst.inputs.size(); ++j) {
      Array analytic = tape.grad_of(leaves[j]);
      auto f = [&](const Array& x) {
        std::vector<Array> probe = inst.inputs;
        probe[j] = x;
        return inst.loss(probe).value();
      };
      Array fd = finite_difference_gradient(f, inst.inputs[j], kStep);
      result.max_rel_err = std::max(result.max_rel_err, rel_error(analytic, fd));
    }
  }
  result.pass = result.max_rel_err <= report.tolerance;
  report.cases.push_back(std::move(result));
}

InstanceMaker projected(std::function<std::vector<Array>(RngStream&)> make_inputs,
                        std::function<Array(const std::vector<Array>&)> build) {
  return [make_inputs, build](RngStream& rng) {
    Instance inst;
    inst.inputs = make_inputs(rng);
    Array out0 = build(inst.inputs);
    Array w = random_array(rng, out0.shape, -1.0, 1.0);
    inst.loss = [build, w](const std::vector<Array>& ins) { return project(build(ins), w); };
    return inst;
  };
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t instances, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  RngStream rng = derive_stream(seed, "gradcheck");

  auto box = [](Shape s, double lo, double hi) {
    return [s = std::move(s), lo, hi](RngStream& r) {
      return std::vector<Array>{random_array(r, s, lo, hi)};
    };
  };
  auto box2 = [](Shape a, Shape b, double lo, double hi, double lo2, double hi2) {
    return [=](RngStream& r) {
      return std::vector<Array>{random_array(r, a, lo, hi), random_array(r, b, lo2, hi2)};
    };
  };

  run_case(report, "add", instances, rng,
           projected(box2({2, 3}, {2, 3}, -2, 2, -2, 2),
                     [](const std::vector<Array>& v) { return ops::add(v[0], v[1]); }));
  run_case(report, "sub", instances, rng,
           projected(box2({2, 3}, {2, 3}, -2, 2, -2, 2),
                     [](const std::vector<Array>& v) { return ops::sub(v[0], v[1]); }));
  run_case(report, "mul", instances, rng,
           projected(box2({2, 3}, {2, 3}, -2, 2, -2, 2),
                     [](const std::vector<Array>& v) { return ops::mul(v[0], v[1]); }));
  run_case(report, "div", instances, rng,
           projected(box2({2, 3}, {2, 3}, -2, 2, 0.5, 2.5),
                     [](const std::vector<Array>& v) { return ops::div(v[0], v[1]); }));
  run_case(report, "matmul", instances, rng,
           projected(box2({3, 4}, {4, 2}, -2, 2, -2, 2),
                     [](const std::vector<Array>& v) { return ops::matmul(v[0], v[1]); }));
  run_case(report, "conv2d", instances, rng,
           projected(
               [](RngStream& r) {
                 return std::vector<Array>{random_array(r, {2, 2, 4, 4}, -2, 2),
                                           random_array(r, {3, 2, 3, 3}, -1, 1),
                                           random_array(r, {3}, -1, 1)};
               },
               [](const std::vector<Array>& v) { return ops::conv2d(v[0], v[1], v[2]); }));
  run_case(report, "conv2d_nobias", instances, rng,
           projected(box2({2, 2, 4, 4}, {3, 2, 3, 3}, -2, 2, -1, 1),
                     [](const std::vector<Array>& v) { return ops::conv2d(v[0], v[1]); }));
  run_case(report, "relu", instances, rng,
           projected(box({3, 5}, -2, 2),
                     [](const std::vector<Array>& v) { return ops::relu(v[0]); }));
  run_case(report, "avgpool2d", instances, rng,
           projected(box({2, 2, 4, 4}, -2, 2),
                     [](const std::vector<Array>& v) { return ops::avgpool2d(v[0]); }));
  run_case(report, "mean_over_axes", instances, rng,
           projected(box({2, 3, 2, 2}, -2, 2), [](const std::vector<Array>& v) {
             return ops::mean_over_axes(v[0], {1, 3});
           }));
  run_case(report, "var_over_axes", instances, rng,
           projected(box({2, 3, 2, 2}, -2, 2), [](const std::vector<Array>& v) {
             return ops::var_over_axes(v[0], {1, 3});
           }));
  run_case(report, "sqrt", instances, rng,
           projected(box({2, 3}, 0.1, 2.1),
                     [](const std::vector<Array>& v) { return ops::sqrt(v[0]); }));
  run_case(report, "broadcast", instances, rng,
           projected(box({2, 1, 3}, -2, 2), [](const std::vector<Array>& v) {
             return ops::broadcast(v[0], {2, 4, 3});
           }));
  run_case(report, "reshape", instances, rng,
           projected(box({2, 6}, -2, 2), [](const std::vector<Array>& v) {
             return ops::reshape(v[0], {3, 2, 2});
           }));
  run_case(report, "concat", instances, rng,
           projected(
               [](RngStream& r) {
                 return std::vector<Array>{random_array(r, {2, 2}, -2, 2),
                                           random_array(r, {2, 3}, -2, 2),
                                           random_array(r, {2, 1}, -2, 2)};
               },
               [](const std::vector<Array>& v) { return ops::concat(v, 1); }));
  run_case(report, "scale", instances, rng,
           projected(box({2, 3}, -2, 2),
                     [](const std::vector<Array>& v) { return ops::scale(v[0], -1.7); }));
  run_case(report, "exp", instances, rng,
           projected(box({2, 3}, -2, 2),
                     [](const std::vector<Array>& v) { return ops::exp(v[0]); }));
  run_case(report, "log", instances, rng,
           projected(box({2, 3}, 0.1, 2.1),
                     [](const std::vector<Array>& v) { return ops::log(v[0]); }));
  run_case(report, "softmax", instances, rng,
           projected(box({3, 4}, -2, 2),
                     [](const std::vector<Array>& v) { return ops::softmax(v[0]); }));
  run_case(report, "dropout", instances, rng, [](RngStream& rng) {
    Instance inst;
    inst.inputs = {random_array(rng, {3, 4}, -2, 2)};
    auto mask = std::make_shared<std::vector<double>>(12);
    for (double& m : *mask) m = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Array w = random_array(rng, {3, 4}, -1, 1);
    inst.loss = [mask, w](const std::vector<Array>& ins) {
      return project(ops::dropout_fixed(ins[0], 0.5, *mask), w);
    };
    return inst;
  });
  run_case(report, "compute_style", instances, rng, [](RngStream& rng) {
    Instance inst;
    inst.inputs = {random_array(rng, {2, 3, 4, 4}, -2, 2)};
    Array wm = random_array(rng, {2, 3}, -1, 1);
    Array ws = random_array(rng, {2, 3}, -1, 1);
    inst.loss = [wm, ws](const std::vector<Array>& ins) {
      Style s = compute_style(ins[0]);
      return ops::add(project(s.mu, wm), project(s.sigma, ws));
    };
    return inst;
  });

  // style-leaf gradients of the attack, against a forward-only replay
  {
    GradCheckCase result{"generate_style_gradients", 0.0, true};
    for (std::size_t it = 0; it < instances; ++it) {
      RngStream mr = derive_stream(seed, "gradcheck/model", it);
      BackboneParams model = BackboneParams::random(mr, 2, {2, 3}, 3);
      std::vector<Array> inputs = {random_array(rng, {2, 2, 4, 4}, -1, 1),
                                   random_array(rng, {2, 2, 4, 4}, -1, 1)};
      std::vector<int> labels = {static_cast<int>(rng.uniform_index(3)),
                                 static_cast<int>(rng.uniform_index(3))};

      StyleGradientSet got = generate_style_gradients(inputs, labels, 1, {}, model);

      // natural statistics are frozen; the loss is evaluated as a function of
      // one input's style leaves with all other leaves at their natural values
      std::vector<Style> natural;
      for (const Array& in : inputs)
        natural.push_back(compute_style(forward_through_blocks(in, model, {}, 1)));
      auto loss_at = [&](std::size_t which, const Array& mu_v, const Array& sigma_v) {
        double total = 0.0;
        for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
          Array fmap = forward_through_blocks(inputs[idx], model, {}, 1);
          const Style& nat = natural[idx];
          const Array& mu_use = idx == which ? mu_v : nat.mu;
          const Array& sigma_use = idx == which ? sigma_v : nat.sigma;
          Shape bc4{fmap.shape[0], fmap.shape[1], 1, 1};
          Array normalized = ops::div(
              ops::sub(fmap, ops::broadcast(ops::reshape(nat.mu, bc4), fmap.shape)),
              ops::broadcast(ops::reshape(nat.sigma, bc4), fmap.shape));
          Array styled =
              ops::add(ops::mul(normalized,
                                ops::broadcast(ops::reshape(sigma_use, bc4), fmap.shape)),
                       ops::broadcast(ops::reshape(mu_use, bc4), fmap.shape));
          Array feat = forward_from_block(model, styled, 2);
          total += cross_entropy(classify_global(model, feat), labels).value();
        }
        return total;
      };

      for (std::size_t which = 0; which < inputs.size(); ++which) {
        Array fd_mu = finite_difference_gradient(
            [&](const Array& x) { return loss_at(which, x, natural[which].sigma); },
            natural[which].mu, kStep);
        Array fd_sigma = finite_difference_gradient(
            [&](const Array& x) { return loss_at(which, natural[which].mu, x); },
            natural[which].sigma, kStep);
        result.max_rel_err = std::max(result.max_rel_err, rel_error(got.mu[which], fd_mu));
        result.max_rel_err =
            std::max(result.max_rel_err, rel_error(got.sigma[which], fd_sigma));
      }
    }
    result.pass = result.max_rel_err <= report.tolerance;
    report.cases.push_back(std::move(result));
  }

  return report;
}

}  // namespace svasp
