#include "clrnn/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "clrnn/layers.hpp"
#include "clrnn/model.hpp"

namespace clrnn {

GradCheckReport finite_diff_check(
    const std::function<Tensor(Tape&)>& program, std::span<Tensor> params,
    double step, double tol) {
  if (step <= 0.0) throw ContractError("finite_diff_check: step must be > 0");

  GradCheckReport report;
  report.step = step;
  report.tol = tol;

  // Analytic pass. Leaf grads accumulate across backward calls, so start
  // from a clean slate.
  for (Tensor& p : params) p.clear_grad();
  Tape tape;
  Tensor loss = program(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }

  const auto eval = [&] {
    Tape silent(false);
    return program(silent).item();
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double saved = p.at(i);
      p.at(i) = saved + step;
      const double f_plus = eval();
      p.at(i) = saved - step;
      const double f_minus = eval();
      p.at(i) = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-2});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "param " + std::to_string(pi) + "[" +
                       std::to_string(i) + "]: analytic=" + std::to_string(a) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

std::vector<std::pair<std::string, GradCheckReport>>
standard_gradcheck_suite() {
  constexpr double kStep = 1e-5;
  constexpr double kOpTol = 1e-6;
  constexpr double kModelTol = 1e-4;
  std::vector<std::pair<std::string, GradCheckReport>> reports;
  Rng rng(20240);

  {
    Tensor a = Tensor::uniform({3, 4}, rng, -2.0, 2.0, true);
    Tensor b = Tensor::uniform({4, 2}, rng, -2.0, 2.0, true);
    std::vector<Tensor> p = {a, b};
    reports.emplace_back(
        "matmul", finite_diff_check(
                      [&](Tape& t) { return sum(t, matmul(t, a, b)); }, p,
                      kStep, kOpTol));
  }
  {
    Tensor x = Tensor::uniform({4, 3}, rng, -2.0, 2.0, true);
    Tensor b = Tensor::uniform({3}, rng, -2.0, 2.0, true);
    std::vector<Tensor> p = {x, b};
    reports.emplace_back(
        "add_broadcast",
        finite_diff_check(
            [&](Tape& t) { return sum(t, tanh(t, add_broadcast(t, x, b))); },
            p, kStep, kOpTol));
  }
  {
    Tensor x = Tensor::uniform({11}, rng, -2.0, 2.0, true);
    std::vector<Tensor> p = {x};
    reports.emplace_back(
        "tanh", finite_diff_check(
                    [&](Tape& t) { return sum(t, tanh(t, x)); }, p, kStep,
                    kOpTol));
  }
  {
    Tensor x = Tensor::uniform({4, 6}, rng, -2.0, 2.0, true);
    std::vector<std::int64_t> targets = {1, 0, 5, 2};
    std::vector<Tensor> p = {x};
    reports.emplace_back(
        "log_softmax+cross_entropy",
        finite_diff_check(
            [&](Tape& t) {
              return cross_entropy(t, log_softmax(t, x), targets);
            },
            p, kStep, kOpTol));
  }
  {
    CausalConvSpec spec;
    spec.kernel_size = 3;
    spec.dilation = 2;
    spec.in_channels = 2;
    spec.out_channels = 2;
    Tensor w = Tensor::uniform({3, 2, 2}, rng, -1.0, 1.0, true);
    Tensor b = Tensor::uniform({2}, rng, 0.05, 0.5, true);
    Tensor x = Tensor::uniform({7, 2}, rng, -1.0, 1.0, true);
    std::vector<Tensor> p = {w, b, x};
    reports.emplace_back(
        "causal_conv1d",
        finite_diff_check(
            [&](Tape& t) {
              return sum(t, tanh(t, causal_conv1d(t, x, spec, w, b)));
            },
            p, kStep, kOpTol));
  }
  {
    Tensor table = Tensor::uniform({6, 3}, rng, -0.5, 0.5, true);
    std::vector<std::int64_t> tokens = {1, 5, 1, 0};
    std::vector<Tensor> p = {table};
    reports.emplace_back(
        "embedding",
        finite_diff_check(
            [&](Tape& t) {
              return sum(t, tanh(t, embedding_forward(t, table, tokens)));
            },
            p, kStep, kOpTol));
  }
  {
    // Full model on an 8-step toy sequence. Parameters are resampled to a
    // generic point; zero-init biases would park relu inputs exactly on
    // the kink, where central differences are undefined.
    CLRNNConfig cfg;
    cfg.cl.num_layers = 2;
    cfg.cl.kernel_size = 2;
    cfg.cl.dilation_multiple = 2;
    cfg.cl.channels = {3, 4};
    cfg.cl.dropout = 0.0;
    cfg.cl.shift_mode = ShiftMode::exclusive;
    cfg.embedding = EmbeddingSpec{11, 5};
    cfg.head_mode = HeadMode::full;
    cfg.num_classes = 11;
    cfg.task = TaskKind::language_model;
    Model model = build_model(cfg, rng);
    for (auto& [name, p] : model.named_parameters()) {
      for (double& v : p.values()) v = rng.uniform(-0.4, 0.4);
    }
    std::vector<std::int64_t> tokens = {1, 4, 9, 0, 6, 3, 8, 2};
    std::vector<std::int64_t> targets = {4, 9, 0, 6, 3, 8, 2, 10};
    auto params = model.parameters();
    reports.emplace_back(
        "full model (8-step toy)",
        finite_diff_check(
            [&](Tape& t) {
              Tensor lp = model_forward_tokens(t, model, tokens, 1, 8);
              return cross_entropy(t, lp, targets);
            },
            params, kStep, kModelTol));
  }
  return reports;
}

}  // namespace clrnn
