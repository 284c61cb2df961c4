// SPDX-License-Identifier: Apache-2.0
#include "coslearn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "coslearn/embeddings.hpp"
#include "coslearn/error.hpp"
#include "coslearn/losses.hpp"
#include "coslearn/model.hpp"

namespace coslearn {

namespace {

struct Evaluated {
  double value;
  std::vector<Tensor> grads;
};

Evaluated evaluate(const GradCheckCase& c, const std::vector<Tensor>& inputs, const Tensor* weighting,
                   bool with_grad) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.parameter(t));
  Var out = c.build(tape, vars);
  if (out.value().size() != 1) {
    if (weighting == nullptr || !weighting->same_shape(out.value())) {
      throw DimensionError("gradcheck '" + c.name + "': weighting does not match output " +
                           shape_to_string(out.shape()));
    }
    out = ops::dot(out, tape.constant(*weighting));
  } else if (out.value().rank() != 0) {
    out = ops::sum(out);
  }
  Evaluated e{out.value().item(), {}};
  if (with_grad) {
    tape.backward(out);
    for (const Var& v : vars) e.grads.push_back(v.grad());
  }
  return e;
}

Shape output_shape(const GradCheckCase& c, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.parameter(t));
  return c.build(tape, vars).shape();
}

void uniform_fill(std::vector<Tensor>& xs, Rng& rng) {
  for (Tensor& t : xs) {
    for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  }
}

}  // namespace

GradCheckResult gradcheck_case(const GradCheckCase& c, const GradCheckOptions& opt) {
  if (opt.trials == 0) throw ValidationError("gradcheck needs at least one trial");
  if (!(opt.step > 0.0)) throw ValidationError("gradcheck step must be positive");
  GradCheckResult r{c.name, opt.trials, 0.0, false};
  Rng rng(derive_seed(opt.seed, {std::hash<std::string>{}(c.name)}));
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    std::vector<Tensor> inputs;
    for (const Shape& s : c.inputs) inputs.emplace_back(s);
    if (c.sample) {
      c.sample(inputs, rng);
    } else {
      uniform_fill(inputs, rng);
    }
    const Shape out_shape = output_shape(c, inputs);
    Tensor weighting(out_shape);
    for (double& v : weighting.data()) v = rng.uniform(-1.0, 1.0);

    const Evaluated analytic = evaluate(c, inputs, &weighting, true);
    double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      for (std::size_t i = 0; i < inputs[p].size(); ++i) {
        const double orig = inputs[p][i];
        inputs[p][i] = orig + opt.step;
        const double up = evaluate(c, inputs, &weighting, false).value;
        inputs[p][i] = orig - opt.step;
        const double down = evaluate(c, inputs, &weighting, false).value;
        inputs[p][i] = orig;
        const double numeric = (up - down) / (2.0 * opt.step);
        const double a = analytic.grads[p][i];
        max_diff = std::max(max_diff, std::abs(a - numeric));
        max_a = std::max(max_a, std::abs(a));
        max_n = std::max(max_n, std::abs(numeric));
      }
    }
    const double rel = max_diff / std::max({max_a, max_n, 1e-8});
    if (!(rel <= r.max_rel_error)) r.max_rel_error = std::isnan(rel) ? INFINITY : rel;
  }
  r.passed = r.max_rel_error <= opt.tolerance;
  return r;
}

namespace {

// Uniform draws kept at least `gap` away from zero.
void away_from_zero(std::vector<Tensor>& xs, Rng& rng, double gap) {
  for (Tensor& t : xs) {
    for (double& v : t.data()) {
      const double m = rng.uniform(gap, 1.0);
      v = rng.uniform() < 0.5 ? -m : m;
    }
  }
}

GradCheckCase unary(std::string name, Shape s, Var (*op)(Var)) {
  return {std::move(name), {std::move(s)}, [op](Tape&, std::span<const Var> v) { return op(v[0]); }, {}};
}

GradCheckCase binary(std::string name, Shape s, Var (*op)(Var, Var)) {
  return {std::move(name), {s, s}, [op](Tape&, std::span<const Var> v) { return op(v[0], v[1]); }, {}};
}

const std::vector<std::size_t> kLabels{0, 2, 1, 2};

EmbeddingMatrix semantic3() {
  SimilarityMatrix s(Tensor::matrix({{1.0, 0.5, 0.0}, {0.5, 1.0, 0.0}, {0.0, 0.0, 1.0}}),
                     {"a1", "a2", "b1"});
  return semantic_embeddings(s);
}

}  // namespace

std::vector<GradCheckCase> standard_gradcheck_cases() {
  std::vector<GradCheckCase> cs;
  const Shape m{3, 4};
  cs.push_back(binary("add", m, ops::add));
  cs.push_back(binary("sub", m, ops::sub));
  cs.push_back(binary("mul", m, ops::mul));
  cs.push_back({"scale", {m}, [](Tape&, std::span<const Var> v) { return ops::scale(v[0], -1.7); }, {}});
  cs.push_back(
      {"add_scalar", {m}, [](Tape&, std::span<const Var> v) { return ops::add_scalar(v[0], 0.3); }, {}});
  cs.push_back({"mul_scalar", {m, {}}, [](Tape&, std::span<const Var> v) { return ops::mul_scalar(v[0], v[1]); }, {}});
  {
    auto c = unary("relu", m, ops::relu);
    c.sample = [](std::vector<Tensor>& xs, Rng& rng) { away_from_zero(xs, rng, 1e-3); };
    cs.push_back(std::move(c));
  }
  {
    auto c = unary("log", m, ops::log);
    c.sample = [](std::vector<Tensor>& xs, Rng& rng) {
      for (double& v : xs[0].data()) v = rng.uniform(0.2, 2.0);
    };
    cs.push_back(std::move(c));
  }
  cs.push_back(unary("exp", m, ops::exp));
  cs.push_back(unary("sum", m, ops::sum));
  cs.push_back(unary("mean", m, ops::mean));
  cs.push_back(unary("sum_last", m, ops::sum_last));
  cs.push_back(binary("dot", m, ops::dot));
  cs.push_back({"matmul", {{3, 4}, {4, 2}},
                [](Tape&, std::span<const Var> v) { return ops::matmul(v[0], v[1]); }, {}});
  cs.push_back({"linear", {{3, 4}, {4, 2}, {2}},
                [](Tape&, std::span<const Var> v) { return ops::linear(v[0], v[1], v[2]); }, {}});
  {
    auto c = unary("l2_normalize", m, ops::l2_normalize);
    c.sample = [](std::vector<Tensor>& xs, Rng& rng) { away_from_zero(xs, rng, 0.1); };
    cs.push_back(std::move(c));
  }
  cs.push_back(unary("softmax", m, ops::softmax));
  cs.push_back(unary("log_softmax", m, ops::log_softmax));
  cs.push_back({"slice_rows", {{4, 3}},
                [](Tape&, std::span<const Var> v) { return ops::slice_rows(v[0], 1, 3); }, {}});
  cs.push_back({"concat_rows", {{2, 3}, {1, 3}},
                [](Tape&, std::span<const Var> v) {
                  const Var parts[] = {v[0], v[1], v[0]};
                  return ops::concat_rows(parts);
                },
                {}});

  // Losses. Features are drawn away from zero so the normalization is smooth.
  const auto features = [](std::vector<Tensor>& xs, Rng& rng) { away_from_zero(xs, rng, 0.1); };
  cs.push_back({"cosine_loss_onehot", {{4, 3}},
                [](Tape&, std::span<const Var> v) {
                  return cosine_loss(v[0], onehot_embeddings(3).gather(kLabels));
                },
                features});
  cs.push_back({"cosine_loss_semantic", {{4, 3}},
                [](Tape&, std::span<const Var> v) { return cosine_loss(v[0], semantic3().gather(kLabels)); },
                features});
  cs.push_back({"cross_entropy", {{4, 3}},
                [](Tape&, std::span<const Var> v) { return cross_entropy_loss(v[0], kLabels, 0.0); }, {}});
  cs.push_back({"cross_entropy_smoothed", {{4, 3}},
                [](Tape&, std::span<const Var> v) { return cross_entropy_loss(v[0], kLabels, 0.1); }, {}});
  cs.push_back({"mse", {{4, 3}},
                [](Tape&, std::span<const Var> v) { return mse_loss(v[0], onehot_embeddings(3).gather(kLabels)); },
                {}});
  cs.push_back({"cosine_xent", {{4, 3}, {3, 3}, {3}},
                [](Tape&, std::span<const Var> v) {
                  return cosine_plus_xent_loss(v[0], kLabels, semantic3(), v[1], v[2], 0.1, 0.0);
                },
                features});
  cs.push_back({"cosine_xent_smoothed", {{4, 3}, {3, 3}, {3}},
                [](Tape&, std::span<const Var> v) {
                  return cosine_plus_xent_loss(v[0], kLabels, onehot_embeddings(3), v[1], v[2], 0.1, 0.1);
                },
                features});
  cs.push_back({"mlp_cosine", {{4, 5}, {5, 6}, {6}, {6, 3}, {3}},
                [](Tape&, std::span<const Var> v) {
                  BoundModel b{{v[1], v[3]}, {v[2], v[4]}};
                  return cosine_loss(forward(b, v[0]), onehot_embeddings(3).gather(kLabels));
                },
                {}});
  return cs;
}

}  // namespace coslearn
