#include "gpf/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gpf/errors.hpp"

namespace gpf {

namespace {

constexpr double kBeliefCeiling = 1.0 - std::numeric_limits<double>::epsilon();

}  // namespace

void GpfConfig::validate() const {
  if (input_dim <= 0) throw ValidationError("input_dim", "must be > 0");
  if (hidden_width <= 0) throw ValidationError("hidden_width", "must be > 0");
  if (output_dim <= 0) throw ValidationError("output_dim", "must be > 0");
  if (max_hidden_layers < 1) throw ValidationError("max_hidden_layers", "must be >= 1");
  if (initial_hidden_layers < 1 || initial_hidden_layers > max_hidden_layers) {
    throw ValidationError("initial_hidden_layers", "must lie in [1, max_hidden_layers]");
  }
  if (!(stagnation_threshold > 0.0)) throw ValidationError("stagnation_threshold", "must be > 0");
  if (!(belief_prune_threshold > 0.0)) throw ValidationError("belief_prune_threshold", "must be > 0");
  if (prune_magnitude_threshold && !(*prune_magnitude_threshold > 0.0)) {
    throw ValidationError("prune_magnitude_threshold", "must be > 0 when set");
  }
  if (!(prune_percentile > 0.0 && prune_percentile < 1.0)) {
    throw ValidationError("prune_percentile", "must lie in (0, 1)");
  }
  if (!(freeze_change_threshold > 0.0)) throw ValidationError("freeze_change_threshold", "must be > 0");
  if (!(freeze_fraction > 0.0 && freeze_fraction <= 1.0)) {
    throw ValidationError("freeze_fraction", "must lie in (0, 1]");
  }
  if (enable_patience < 0) throw ValidationError("enable_patience", "must be >= 0");
  if (grow_patience < 0) throw ValidationError("grow_patience", "must be >= 0");
  if (prune_patience < 0) throw ValidationError("prune_patience", "must be >= 0");
  if (freeze_patience < 0) throw ValidationError("freeze_patience", "must be >= 0");
  if (!(belief_increment > 0.0 && belief_increment <= 1.0)) {
    throw ValidationError("belief_increment", "must lie in (0, 1]");
  }
  if (!(belief_magnitude > 0.0)) throw ValidationError("belief_magnitude", "must be > 0");
  if (!(batch_decay >= 0.0)) throw ValidationError("batch_decay", "must be >= 0");
  if (base_batch_size < 1) throw ValidationError("base_batch_size", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate", "must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ValidationError("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ValidationError("adam_beta2", "must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ValidationError("adam_epsilon", "must be > 0");
}

std::size_t GpfLayer::active_count() const {
  return pruned.size() - static_cast<std::size_t>(std::count(pruned.begin(), pruned.end(), std::uint8_t{1}));
}

double GpfLayer::retained_fraction() const {
  if (pruned.empty()) {
    return 1.0;
  }
  return static_cast<double>(active_count()) / static_cast<double>(pruned.size());
}

int batch_size(double val_loss, const GpfConfig& cfg) {
  if (!std::isfinite(val_loss)) {
    throw ValidationError("val_loss", "must be finite");
  }
  const double b = static_cast<double>(cfg.base_batch_size) * std::exp(-cfg.batch_decay * val_loss);
  return std::max(1, static_cast<int>(std::lround(b)));
}

GpfLayer GpfNetwork::make_layer(std::size_t out, std::size_t in, Rng& rng, std::int64_t episode) const {
  GpfLayer layer;
  layer.weights = Matrix(out, in);
  const double stddev = std::sqrt(2.0 / static_cast<double>(in));
  for (auto& w : layer.weights.data()) {
    w = rng.normal(0.0, stddev);
  }
  layer.bias.assign(out, 0.0);
  layer.belief = Matrix(out, in, 0.0);
  layer.pruned.assign(out * in, 0);
  layer.stability.lo = layer.weights.data();
  layer.stability.hi = layer.weights.data();
  layer.stability.since.assign(out * in, episode);
  layer.adam.m_w.assign(out * in, 0.0);
  layer.adam.v_w.assign(out * in, 0.0);
  layer.adam.m_b.assign(out, 0.0);
  layer.adam.v_b.assign(out, 0.0);
  return layer;
}

GpfNetwork GpfNetwork::create(const GpfConfig& cfg, Rng& rng) {
  cfg.validate();
  GpfNetwork net;
  net.config_ = cfg;
  const auto width = static_cast<std::size_t>(cfg.hidden_width);
  std::size_t fan_in = static_cast<std::size_t>(cfg.input_dim);
  for (int l = 0; l < cfg.initial_hidden_layers; ++l) {
    net.layers_.push_back(net.make_layer(width, fan_in, rng, 0));
    fan_in = width;
  }
  net.layers_.push_back(net.make_layer(static_cast<std::size_t>(cfg.output_dim), fan_in, rng, 0));
  return net;
}

GpfNetwork GpfNetwork::from_parts(GpfConfig cfg, std::vector<GpfLayer> layers, PlateauTracker plateau) {
  cfg.validate();
  if (layers.size() < 2) {
    throw ValidationError("layers", "need at least one hidden layer and an output layer");
  }
  std::size_t fan_in = static_cast<std::size_t>(cfg.input_dim);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::size_t expect_out =
        i + 1 == layers.size() ? static_cast<std::size_t>(cfg.output_dim) : static_cast<std::size_t>(cfg.hidden_width);
    const std::size_t n = l.weights.size();
    if (l.in_dim() != fan_in || l.out_dim() != expect_out || l.bias.size() != l.out_dim() ||
        l.belief.rows() != l.out_dim() || l.belief.cols() != l.in_dim() || l.pruned.size() != n ||
        l.stability.lo.size() != n || l.stability.hi.size() != n || l.stability.since.size() != n ||
        l.adam.m_w.size() != n || l.adam.v_w.size() != n || l.adam.m_b.size() != l.out_dim() ||
        l.adam.v_b.size() != l.out_dim()) {
      throw ValidationError("layers", "inconsistent shapes in layer " + std::to_string(i));
    }
    fan_in = l.out_dim();
  }
  GpfNetwork net;
  net.config_ = cfg;
  net.layers_ = std::move(layers);
  net.plateau_ = plateau;
  return net;
}

GpfLayer& GpfNetwork::mutable_layer(std::size_t i) {
  ++version_;
  return layers_.at(i);
}

std::vector<double> GpfNetwork::forward(std::span<const double> x) const {
  ForwardCache scratch;
  return forward(x, scratch);
}

std::vector<double> GpfNetwork::forward(std::span<const double> x, ForwardCache& cache) const {
  if (layers_.empty()) {
    throw std::logic_error("GpfNetwork::forward on an empty network");
  }
  if (x.size() != static_cast<std::size_t>(config_.input_dim)) {
    throw ValidationError("input", "expected " + std::to_string(config_.input_dim) + " features, got " +
                                       std::to_string(x.size()));
  }
  cache.inputs.resize(layers_.size());
  cache.pre.resize(layers_.size());
  cache.inputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const auto& in = cache.inputs[l];
    auto& z = cache.pre[l];
    z.assign(layer.bias.begin(), layer.bias.end());
    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
      const double xi = in[i];
      if (xi == 0.0) {
        continue;
      }
      // Column access; masked weights are stored as exact zeros.
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        z[o] += layer.weights(o, i) * xi;
      }
    }
    if (l + 1 < layers_.size()) {
      auto& next = cache.inputs[l + 1];
      next.resize(z.size());
      for (std::size_t o = 0; o < z.size(); ++o) {
        next[o] = z[o] > 0.0 ? z[o] : 0.0;
      }
    }
  }
  cache.version = version_;
  return cache.pre.back();
}

Gradients GpfNetwork::backward(const ForwardCache& cache, std::span<const double> dq) const {
  if (cache.version != version_ || cache.inputs.size() != layers_.size()) {
    throw std::logic_error("GpfNetwork::backward: forward cache is stale");
  }
  if (dq.size() != layers_.back().out_dim()) {
    throw ValidationError("dq", "output gradient has the wrong size");
  }
  Gradients g;
  g.weights.resize(layers_.size());
  g.bias.resize(layers_.size());
  std::vector<double> delta(dq.begin(), dq.end());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const auto& in = cache.inputs[l];
    Matrix gw(layer.out_dim(), layer.in_dim());
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double d = delta[o];
      if (d == 0.0) {
        continue;
      }
      auto row = gw.row(o);
      const std::size_t base = o * layer.in_dim();
      for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        if (!layer.pruned[base + i]) {
          row[i] = d * in[i];
        }
      }
    }
    g.weights[l] = std::move(gw);
    g.bias[l] = delta;
    if (l == 0) {
      break;
    }
    std::vector<double> prev(layer.in_dim(), 0.0);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double d = delta[o];
      if (d == 0.0) {
        continue;
      }
      const auto w_row = layer.weights.row(o);
      for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        prev[i] += w_row[i] * d;
      }
    }
    const auto& z_prev = cache.pre[l - 1];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (!(z_prev[i] > 0.0)) {
        prev[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return g;
}

namespace {

struct AdamCoefficients {
  double b1, b2, step, eps_hat;
};

AdamCoefficients adam_coefficients(const GpfConfig& cfg, std::int64_t steps) {
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(steps));
  return {cfg.adam_beta1, cfg.adam_beta2, cfg.learning_rate * std::sqrt(c2) / c1, cfg.adam_epsilon * std::sqrt(c2)};
}

// Moments of weights that rarely see a gradient (one-hot inputs, dead
// ReLUs) decay geometrically into subnormal range, where arithmetic is
// orders of magnitude slower. They are flushed to zero there instead.
inline double flush_subnormal(double x) { return std::abs(x) < std::numeric_limits<double>::min() ? 0.0 : x; }

// Masked weights carry zero moments and receive a zero gradient, so the
// update below leaves them at exactly zero without a branch.
inline void adam_update(double& w, double& m, double& v, double g, const AdamCoefficients& c) {
  m = flush_subnormal(c.b1 * m + (1.0 - c.b1) * g);
  v = flush_subnormal(c.b2 * v + (1.0 - c.b2) * g * g);
  w -= c.step * m / (std::sqrt(v) + c.eps_hat);
}

}  // namespace

void GpfNetwork::apply_gradients(const Gradients& grads, double scale) {
  if (grads.weights.size() != layers_.size() || grads.bias.size() != layers_.size()) {
    throw ValidationError("gradients", "layer count mismatch");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    if (layer.frozen) {
      continue;
    }
    auto& adam = layer.adam;
    const auto c = adam_coefficients(config_, ++adam.steps);
    auto& w = layer.weights.data();
    const auto& gw = grads.weights[l].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = layer.pruned[k] ? 0.0 : gw[k] * scale;
      adam_update(w[k], adam.m_w[k], adam.v_w[k], g, c);
    }
    const auto& gb = grads.bias[l];
    for (std::size_t k = 0; k < layer.bias.size(); ++k) {
      adam_update(layer.bias[k], adam.m_b[k], adam.v_b[k], gb[k] * scale, c);
    }
  }
  ++version_;
}

void GpfNetwork::backward_and_step(const ForwardCache& cache, std::span<const double> dq) {
  if (cache.version != version_ || cache.inputs.size() != layers_.size()) {
    throw std::logic_error("GpfNetwork::backward_and_step: forward cache is stale");
  }
  if (dq.size() != layers_.back().out_dim()) {
    throw ValidationError("dq", "output gradient has the wrong size");
  }
  // Same arithmetic as apply_gradients(backward(cache, dq)) without
  // materialising the gradient matrices. All deltas use the pre-step weights.
  const std::size_t n = layers_.size();
  std::vector<std::vector<double>> delta(n);
  delta[n - 1].assign(dq.begin(), dq.end());
  for (std::size_t l = n - 1; l > 0; --l) {
    const auto& layer = layers_[l];
    std::vector<double> prev(layer.in_dim(), 0.0);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double d = delta[l][o];
      if (d == 0.0) {
        continue;
      }
      const auto w_row = layer.weights.row(o);
      for (std::size_t i = 0; i < prev.size(); ++i) {
        prev[i] += w_row[i] * d;
      }
    }
    const auto& z_prev = cache.pre[l - 1];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (!(z_prev[i] > 0.0)) {
        prev[i] = 0.0;
      }
    }
    delta[l - 1] = std::move(prev);
  }
  for (std::size_t l = 0; l < n; ++l) {
    auto& layer = layers_[l];
    if (layer.frozen) {
      continue;
    }
    auto& adam = layer.adam;
    const auto c = adam_coefficients(config_, ++adam.steps);
    const auto& in = cache.inputs[l];
    const std::size_t cols = layer.in_dim();
    double* w = layer.weights.data().data();
    double* m = adam.m_w.data();
    double* v = adam.v_w.data();
    const std::uint8_t* pruned = layer.pruned.data();
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double d = delta[l][o];
      const std::size_t base = o * cols;
      for (std::size_t i = 0; i < cols; ++i) {
        const double g = pruned[base + i] ? 0.0 : d * in[i];
        adam_update(w[base + i], m[base + i], v[base + i], g, c);
      }
    }
    for (std::size_t k = 0; k < layer.bias.size(); ++k) {
      adam_update(layer.bias[k], adam.m_b[k], adam.v_b[k], delta[l][k], c);
    }
  }
  ++version_;
}

bool GpfNetwork::maybe_grow(double val_loss, std::int64_t episode, Rng& rng) {
  if (!std::isfinite(val_loss)) {
    throw ValidationError("val_loss", "must be finite");
  }
  if (!gpf_enabled_at(episode)) {
    return false;
  }
  auto& p = plateau_;
  if (!std::isfinite(p.best_loss) || p.best_loss - val_loss >= config_.stagnation_threshold) {
    p.best_loss = std::min(p.best_loss, val_loss);
    p.last_improvement = episode;
  }
  const bool stagnated = episode - p.last_improvement >= config_.grow_patience &&
                         episode - p.last_structural >= config_.grow_patience;
  if (!stagnated || hidden_layers() >= static_cast<std::size_t>(config_.max_hidden_layers)) {
    return false;
  }
  const auto width = static_cast<std::size_t>(config_.hidden_width);
  layers_.insert(layers_.end() - 1, make_layer(width, width, rng, episode));
  p.best_loss = val_loss;
  p.last_improvement = episode;
  p.last_structural = episode;
  ++p.grow_events;
  ++version_;
  return true;
}

void GpfNetwork::update_beliefs(std::int64_t episode) {
  if (!gpf_enabled_at(episode)) {
    return;
  }
  for (auto& layer : layers_) {
    auto& h = layer.belief.data();
    if (layer.frozen) {
      std::fill(h.begin(), h.end(), 1.0);
      continue;
    }
    const auto& w = layer.weights.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (!layer.pruned[k] && std::abs(w[k]) > config_.belief_magnitude) {
        h[k] = std::min(h[k] + config_.belief_increment, kBeliefCeiling);
      }
    }
  }
}

void GpfNetwork::record_stability(std::int64_t episode) {
  for (auto& layer : layers_) {
    if (layer.frozen) {
      continue;
    }
    const auto& w = layer.weights.data();
    auto& st = layer.stability;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double lo = std::min(st.lo[k], w[k]);
      const double hi = std::max(st.hi[k], w[k]);
      if (hi - lo >= config_.freeze_change_threshold) {
        st.lo[k] = w[k];
        st.hi[k] = w[k];
        st.since[k] = episode;
      } else {
        st.lo[k] = lo;
        st.hi[k] = hi;
      }
    }
  }
}

PruneReport GpfNetwork::prune(std::size_t upto_layer, std::int64_t episode) {
  if (upto_layer > layers_.size()) {
    throw ValidationError("upto_layer", "exceeds the layer count");
  }
  PruneReport report;
  std::size_t active_total = 0;
  std::size_t weight_total = 0;
  for (std::size_t l = 0; l < upto_layer; ++l) {
    auto& layer = layers_[l];
    if (!layer.frozen) {
      auto& w = layer.weights.data();
      const auto& h = layer.belief.data();
      double threshold = 0.0;
      if (config_.prune_magnitude_threshold) {
        threshold = *config_.prune_magnitude_threshold;
      } else {
        std::vector<double> mags;
        mags.reserve(w.size());
        for (std::size_t k = 0; k < w.size(); ++k) {
          if (!layer.pruned[k]) {
            mags.push_back(std::abs(w[k]));
          }
        }
        if (!mags.empty()) {
          const auto nth = static_cast<std::size_t>(config_.prune_percentile * static_cast<double>(mags.size() - 1));
          std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(nth), mags.end());
          threshold = mags[nth];
        }
      }
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (!layer.pruned[k] && h[k] < config_.belief_prune_threshold && std::abs(w[k]) < threshold) {
          layer.pruned[k] = 1;
          w[k] = 0.0;
          layer.adam.m_w[k] = 0.0;
          layer.adam.v_w[k] = 0.0;
          ++report.newly_masked;
        }
      }
      report.layers.push_back(l);
      report.layer_retained.push_back(layer.retained_fraction());
    }
    active_total += layer.active_count();
    weight_total += layer.pruned.size();
  }
  report.retained_fraction =
      weight_total == 0 ? 1.0 : static_cast<double>(active_total) / static_cast<double>(weight_total);
  plateau_.last_prune = episode;
  ++plateau_.prune_events;
  ++version_;
  return report;
}

bool GpfNetwork::standalone_prune_due(std::int64_t episode) const {
  return config_.standalone_prune && gpf_enabled_at(episode) &&
         episode - plateau_.last_prune >= config_.prune_patience && hidden_layers() > 1;
}

std::vector<std::size_t> GpfNetwork::maybe_freeze(std::int64_t episode) {
  std::vector<std::size_t> frozen_now;
  if (!gpf_enabled_at(episode)) {
    return frozen_now;
  }
  // The output layer stays trainable.
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    auto& layer = layers_[l];
    if (layer.frozen) {
      continue;
    }
    std::size_t active = 0;
    std::size_t stable = 0;
    for (std::size_t k = 0; k < layer.pruned.size(); ++k) {
      if (layer.pruned[k]) {
        continue;
      }
      ++active;
      if (episode - layer.stability.since[k] >= config_.freeze_patience) {
        ++stable;
      }
    }
    if (active > 0 && static_cast<double>(stable) >= config_.freeze_fraction * static_cast<double>(active)) {
      layer.frozen = true;
      auto& h = layer.belief.data();
      std::fill(h.begin(), h.end(), 1.0);
      frozen_now.push_back(l);
    }
  }
  if (!frozen_now.empty()) {
    plateau_.last_structural = episode;
    ++version_;
  }
  return frozen_now;
}

double GpfNetwork::retained_fraction() const {
  std::size_t active = 0;
  std::size_t total = 0;
  for (const auto& layer : layers_) {
    active += layer.active_count();
    total += layer.pruned.size();
  }
  return total == 0 ? 1.0 : static_cast<double>(active) / static_cast<double>(total);
}

}  // namespace gpf
