// SPDX-License-Identifier: Apache-2.0
#include "nasq/controller.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "nasq/error.hpp"
#include "nasq/json_util.hpp"

namespace nasq {
namespace {

using Vec = Eigen::VectorXd;
using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatR>;
using MutMap = Eigen::Map<MatR>;

ConstMap mat(const PolicyParameters& p, const std::string& name) {
  const auto& t = p.tensor(name);
  return {p.values().data() + t.offset, static_cast<Eigen::Index>(t.rows),
          static_cast<Eigen::Index>(t.cols)};
}

MutMap mat(PolicyParameters& p, const std::string& name) {
  const auto& t = p.tensor(name);
  return {p.values().data() + t.offset, static_cast<Eigen::Index>(t.rows),
          static_cast<Eigen::Index>(t.cols)};
}

std::string embed_name(int kind) { return "embed." + std::to_string(kind); }
std::string head_w(int kind) { return "head." + std::to_string(kind) + ".W"; }
std::string head_b(int kind) { return "head." + std::to_string(kind) + ".b"; }
std::string lstm_w(int layer) { return "lstm." + std::to_string(layer) + ".W"; }
std::string lstm_b(int layer) { return "lstm." + std::to_string(layer) + ".b"; }

Vec sigmoid(const Vec& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

struct LayerCache {
  Vec z;       // [input; h_prev]
  Vec i, f, g, o;
  Vec c_prev;
  Vec c;
  Vec tanh_c;
  Vec h;
};

struct StepCache {
  std::vector<LayerCache> layers;
  Vec log_probs;
};

// Teacher-forced or free-running unroll of the recurrent policy.
class Unroll {
 public:
  explicit Unroll(const PolicyParameters& p) : p_(p) {
    const int H = p.hidden();
    h_.assign(static_cast<std::size_t>(p.lstm_layers()), Vec::Zero(H));
    c_.assign(static_cast<std::size_t>(p.lstm_layers()), Vec::Zero(H));
  }

  // prev_token < 0 on the first step.
  const Vec& step(int prev_token) {
    const auto t = steps.size();
    const auto& layout = p_.layout();
    Vec x;
    if (t == 0) {
      x = mat(p_, "start").row(0).transpose();
    } else {
      x = mat(p_, embed_name(layout.step_kinds[t - 1])).row(prev_token).transpose();
    }
    const Eigen::Index H = p_.hidden();
    StepCache sc;
    for (int l = 0; l < p_.lstm_layers(); ++l) {
      LayerCache lc;
      lc.z.resize(x.size() + H);
      lc.z << x, h_[l];
      const Vec pre = mat(p_, lstm_w(l)) * lc.z + mat(p_, lstm_b(l)).row(0).transpose();
      lc.i = sigmoid(pre.segment(0, H));
      lc.f = sigmoid(pre.segment(H, H));
      lc.g = pre.segment(2 * H, H).array().tanh().matrix();
      lc.o = sigmoid(pre.segment(3 * H, H));
      lc.c_prev = c_[l];
      lc.c = lc.f.cwiseProduct(lc.c_prev) + lc.i.cwiseProduct(lc.g);
      lc.tanh_c = lc.c.array().tanh().matrix();
      lc.h = lc.o.cwiseProduct(lc.tanh_c);
      h_[l] = lc.h;
      c_[l] = lc.c;
      x = lc.h;
      sc.layers.push_back(std::move(lc));
    }
    const int kind = layout.step_kinds[t];
    const Vec logits = mat(p_, head_w(kind)) * x + mat(p_, head_b(kind)).row(0).transpose();
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    sc.log_probs = (logits.array() - lse).matrix();
    steps.push_back(std::move(sc));
    return steps.back().log_probs;
  }

  std::vector<StepCache> steps;

 private:
  const PolicyParameters& p_;
  std::vector<Vec> h_;
  std::vector<Vec> c_;
};

Unroll teacher_forced(const PolicyParameters& params, std::span<const int> tokens) {
  Unroll u(params);
  const auto& layout = params.layout();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int v = layout.vocab_sizes[static_cast<std::size_t>(layout.step_kinds[t])];
    if (tokens[t] < 0 || tokens[t] >= v) {
      throw std::invalid_argument("token " + std::to_string(t) + " outside its vocabulary");
    }
    u.step(t == 0 ? -1 : tokens[t - 1]);
  }
  return u;
}

double step_weight(double gamma, std::size_t T, std::size_t t) {
  return std::pow(gamma, static_cast<double>(T - 1 - t));
}

void check_batch(const PolicyParameters& params, std::span<const Trajectory> batch) {
  if (batch.empty()) throw std::invalid_argument("policy_gradient: empty batch");
  for (const auto& tr : batch) {
    if (tr.tokens.size() != params.layout().steps()) {
      throw std::invalid_argument("policy_gradient: trajectory length mismatch");
    }
    if (!std::isfinite(tr.reward)) {
      throw std::invalid_argument("policy_gradient: non-finite reward");
    }
  }
}

// Accumulates coefficient-weighted d(sum_t w_t log pi(a_t))/d(theta) into grad.
void backprop(const PolicyParameters& p, const Unroll& u, std::span<const int> tokens,
              std::span<const double> weights, PolicyParameters& grad) {
  const auto T = tokens.size();
  const auto& layout = p.layout();
  const Eigen::Index H = p.hidden();
  const int L = p.lstm_layers();

  std::vector<Vec> dh_above(T);
  for (std::size_t t = 0; t < T; ++t) {
    const int kind = layout.step_kinds[t];
    const auto& sc = u.steps[t];
    Vec dlogits = -sc.log_probs.array().exp().matrix();
    dlogits[tokens[t]] += 1.0;
    dlogits *= weights[t];
    const Vec& h_top = sc.layers.back().h;
    mat(grad, head_w(kind)).noalias() += dlogits * h_top.transpose();
    mat(grad, head_b(kind)).row(0) += dlogits.transpose();
    dh_above[t] = mat(p, head_w(kind)).transpose() * dlogits;
  }

  for (int l = L - 1; l >= 0; --l) {
    const auto W = mat(p, lstm_w(l));
    auto dW = mat(grad, lstm_w(l));
    auto db = mat(grad, lstm_b(l));
    const Eigen::Index in = W.cols() - H;
    Vec dh_next = Vec::Zero(H);
    Vec dc_next = Vec::Zero(H);
    std::vector<Vec> dx(T);
    for (std::size_t t = T; t-- > 0;) {
      const auto& lc = u.steps[t].layers[static_cast<std::size_t>(l)];
      const Vec dh = dh_above[t] + dh_next;
      const Vec dc = dc_next + dh.cwiseProduct(lc.o).cwiseProduct(
                                   (1.0 - lc.tanh_c.array().square()).matrix());
      Vec dpre(4 * H);
      dpre.segment(0, H) = dc.cwiseProduct(lc.g).cwiseProduct(
          (lc.i.array() * (1.0 - lc.i.array())).matrix());
      dpre.segment(H, H) = dc.cwiseProduct(lc.c_prev).cwiseProduct(
          (lc.f.array() * (1.0 - lc.f.array())).matrix());
      dpre.segment(2 * H, H) =
          dc.cwiseProduct(lc.i).cwiseProduct((1.0 - lc.g.array().square()).matrix());
      dpre.segment(3 * H, H) = dh.cwiseProduct(lc.tanh_c).cwiseProduct(
          (lc.o.array() * (1.0 - lc.o.array())).matrix());
      dW.noalias() += dpre * lc.z.transpose();
      db.row(0) += dpre.transpose();
      const Vec dz = W.transpose() * dpre;
      dx[t] = dz.head(in);
      dh_next = dz.tail(H);
      dc_next = dc.cwiseProduct(lc.f);
    }
    dh_above = std::move(dx);
  }

  mat(grad, "start").row(0) += dh_above[0].transpose();
  for (std::size_t t = 1; t < T; ++t) {
    mat(grad, embed_name(layout.step_kinds[t - 1])).row(tokens[t - 1]) +=
        dh_above[t].transpose();
  }
}

}  // namespace

void ControllerConfig::validate() const {
  if (hidden_units < 1 || lstm_layers < 1 || embedding_dim < 1) {
    throw ConfigError("controller: dimensions must be positive");
  }
  if (!(learning_rate > 0)) throw ConfigError("controller: learning_rate must be > 0");
  if (batch_m < 1) throw ConfigError("controller: batch_m must be >= 1");
  if (!(discount_gamma > 0 && discount_gamma <= 1)) {
    throw ConfigError("controller: discount_gamma must be in (0, 1]");
  }
  if (!(baseline_decay > 0 && baseline_decay < 1)) {
    throw ConfigError("controller: baseline_decay must be in (0, 1)");
  }
  if (!(init_range >= 0)) throw ConfigError("controller: init_range must be >= 0");
}

nlohmann::json to_json(const ControllerConfig& c) {
  return {{"hidden_units", c.hidden_units},     {"lstm_layers", c.lstm_layers},
          {"embedding_dim", c.embedding_dim},   {"learning_rate", c.learning_rate},
          {"batch_m", c.batch_m},               {"discount_gamma", c.discount_gamma},
          {"baseline_decay", c.baseline_decay}, {"init_range", c.init_range}};
}

ControllerConfig controller_config_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "controller";
  require_known_keys(j,
                     {"hidden_units", "lstm_layers", "embedding_dim", "learning_rate", "batch_m",
                      "discount_gamma", "baseline_decay", "init_range"},
                     ctx);
  ControllerConfig c;
  c.hidden_units = get_or(j, "hidden_units", c.hidden_units, ctx);
  c.lstm_layers = get_or(j, "lstm_layers", c.lstm_layers, ctx);
  c.embedding_dim = get_or(j, "embedding_dim", c.embedding_dim, ctx);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate, ctx);
  c.batch_m = get_or(j, "batch_m", c.batch_m, ctx);
  c.discount_gamma = get_or(j, "discount_gamma", c.discount_gamma, ctx);
  c.baseline_decay = get_or(j, "baseline_decay", c.baseline_decay, ctx);
  c.init_range = get_or(j, "init_range", c.init_range, ctx);
  c.validate();
  return c;
}

void PolicyLayout::validate() const {
  if (vocab_sizes.empty() || step_kinds.empty()) {
    throw ConfigError("policy layout: no steps");
  }
  for (int v : vocab_sizes) {
    if (v < 1) throw ConfigError("policy layout: empty vocabulary");
  }
  for (int k : step_kinds) {
    if (k < 0 || static_cast<std::size_t>(k) >= vocab_sizes.size()) {
      throw ConfigError("policy layout: step kind out of range");
    }
  }
}

PolicyParameters::PolicyParameters(const PolicyLayout& layout, const ControllerConfig& config)
    : layout_(layout),
      hidden_(config.hidden_units),
      embedding_(config.embedding_dim),
      layers_(config.lstm_layers) {
  layout_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    tensors_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  const auto H = static_cast<std::size_t>(hidden_);
  const auto E = static_cast<std::size_t>(embedding_);
  add("start", 1, E);
  for (std::size_t k = 0; k < layout_.vocab_sizes.size(); ++k) {
    add(embed_name(static_cast<int>(k)), static_cast<std::size_t>(layout_.vocab_sizes[k]), E);
  }
  for (int l = 0; l < layers_; ++l) {
    add(lstm_w(l), 4 * H, (l == 0 ? E : H) + H);
    add(lstm_b(l), 1, 4 * H);
  }
  for (std::size_t k = 0; k < layout_.vocab_sizes.size(); ++k) {
    const auto v = static_cast<std::size_t>(layout_.vocab_sizes[k]);
    add(head_w(static_cast<int>(k)), v, H);
    add(head_b(static_cast<int>(k)), 1, v);
  }
  data_.assign(offset, 0.0);
}

void PolicyParameters::init_uniform(double range, Rng& rng) {
  for (double& v : data_) v = -range + 2.0 * range * uniform01(rng);
}

const PolicyParameters::Tensor& PolicyParameters::tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no tensor named " + name);
}

bool PolicyParameters::same_shape(const PolicyParameters& other) const {
  if (hidden_ != other.hidden_ || embedding_ != other.embedding_ || layers_ != other.layers_ ||
      layout_.vocab_sizes != other.layout_.vocab_sizes ||
      layout_.step_kinds != other.layout_.step_kinds || tensors_.size() != other.tensors_.size()) {
    return false;
  }
  return data_.size() == other.data_.size();
}

nlohmann::json to_json(const PolicyParameters& p) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : p.tensors()) {
    const auto v = p.view(t);
    tensors.push_back({{"name", t.name},
                       {"rows", t.rows},
                       {"cols", t.cols},
                       {"data", std::vector<double>(v.begin(), v.end())}});
  }
  return {{"hidden_units", p.hidden()},
          {"embedding_dim", p.embedding()},
          {"lstm_layers", p.lstm_layers()},
          {"vocab_sizes", p.layout().vocab_sizes},
          {"step_kinds", p.layout().step_kinds},
          {"tensors", std::move(tensors)}};
}

void load_parameters(PolicyParameters& into, const nlohmann::json& j) {
  try {
    if (j.at("hidden_units").get<int>() != into.hidden() ||
        j.at("embedding_dim").get<int>() != into.embedding() ||
        j.at("lstm_layers").get<int>() != into.lstm_layers() ||
        j.at("vocab_sizes").get<std::vector<int>>() != into.layout().vocab_sizes ||
        j.at("step_kinds").get<std::vector<int>>() != into.layout().step_kinds) {
      throw ConfigError("parameters: controller dimensions do not match");
    }
    const auto& tensors = j.at("tensors");
    if (tensors.size() != into.tensors().size()) {
      throw ConfigError("parameters: tensor count mismatch");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& t = into.tensors()[i];
      const auto& jt = tensors[i];
      const auto data = jt.at("data").get<std::vector<double>>();
      if (jt.at("name").get<std::string>() != t.name || data.size() != t.size()) {
        throw ConfigError("parameters: tensor " + t.name + " does not match");
      }
      std::copy(data.begin(), data.end(), into.view(t).begin());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("parameters: ") + e.what());
  }
}

Trajectory sample_trajectory(const PolicyParameters& params, Rng& rng) {
  Unroll u(params);
  Trajectory tr;
  const auto T = params.layout().steps();
  int prev = -1;
  for (std::size_t t = 0; t < T; ++t) {
    const Vec& lp = u.step(prev);
    const double r = uniform01(rng);
    double acc = 0.0;
    int pick = static_cast<int>(lp.size()) - 1;
    for (Eigen::Index a = 0; a < lp.size(); ++a) {
      acc += std::exp(lp[a]);
      if (r < acc) {
        pick = static_cast<int>(a);
        break;
      }
    }
    tr.tokens.push_back(pick);
    tr.log_probs.push_back(lp[pick]);
    prev = pick;
  }
  return tr;
}

std::vector<std::vector<double>> step_distributions(const PolicyParameters& params,
                                                    std::span<const int> tokens) {
  const Unroll u = teacher_forced(params, tokens);
  std::vector<std::vector<double>> out;
  for (const auto& sc : u.steps) {
    const Vec p = sc.log_probs.array().exp().matrix();
    out.emplace_back(p.data(), p.data() + p.size());
  }
  return out;
}

PolicyParameters policy_gradient(const PolicyParameters& params,
                                 std::span<const Trajectory> batch, double baseline,
                                 double gamma) {
  check_batch(params, batch);
  PolicyParameters grad(params.layout(),
                        ControllerConfig{params.hidden(), params.lstm_layers(), params.embedding()});
  const auto T = params.layout().steps();
  const double m = static_cast<double>(batch.size());
  std::vector<double> weights(T);
  for (const auto& tr : batch) {
    const double advantage = tr.reward - baseline;
    if (advantage == 0.0) continue;
    for (std::size_t t = 0; t < T; ++t) weights[t] = step_weight(gamma, T, t) * advantage / m;
    const Unroll u = teacher_forced(params, tr.tokens);
    backprop(params, u, tr.tokens, weights, grad);
  }
  return grad;
}

double surrogate_objective(const PolicyParameters& params, std::span<const Trajectory> batch,
                           double baseline, double gamma) {
  check_batch(params, batch);
  const auto T = params.layout().steps();
  double total = 0.0;
  for (const auto& tr : batch) {
    const Unroll u = teacher_forced(params, tr.tokens);
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      s += step_weight(gamma, T, t) * u.steps[t].log_probs[tr.tokens[t]];
    }
    total += s * (tr.reward - baseline);
  }
  return total / static_cast<double>(batch.size());
}

void apply_update(PolicyParameters& params, const PolicyParameters& gradient,
                  double learning_rate) {
  if (!params.same_shape(gradient)) {
    throw std::invalid_argument("apply_update: gradient shape mismatch");
  }
  auto p = params.values();
  const auto g = gradient.values();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += learning_rate * g[i];
}

double update_baseline(double baseline, std::span<const double> rewards, double decay) {
  if (rewards.empty()) return baseline;
  double sum = 0.0;
  for (double r : rewards) sum += r;
  return decay * baseline + (1.0 - decay) * (sum / static_cast<double>(rewards.size()));
}

}  // namespace nasq
