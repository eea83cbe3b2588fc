#pragma once

// Grow-Prune-Freeze Q-network.
//
// A dense ReLU MLP (input -> hidden x L -> output) whose hidden depth grows
// when a validation signal plateaus, whose weights carry belief values that
// protect them from magnitude pruning, and whose stable hidden layers are
// frozen for good.
//
// "Epoch" in the growth, belief and freeze rules is whatever unit the caller
// passes as `episode`; the learner uses training episodes.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "gpf/matrix.hpp"
#include "gpf/rng.hpp"

namespace gpf {

struct GpfConfig {
  int input_dim = 22;
  int hidden_width = 64;
  int output_dim = 6;
  int initial_hidden_layers = 1;
  int max_hidden_layers = 4;  // L_max

  double stagnation_threshold = 1e-3;    // omega_v
  double belief_prune_threshold = 1e-6;  // omega_p
  /// Absolute magnitude bound for pruning. When unset, the bound is the
  /// prune_percentile quantile of |w| over the layer's active weights.
  std::optional<double> prune_magnitude_threshold;
  double prune_percentile = 0.30;
  double freeze_change_threshold = 0.01;  // omega_f
  double freeze_fraction = 0.99;          // phi_f

  int enable_patience = 0;    // rho_e
  int grow_patience = 1000;   // rho_k
  int prune_patience = 500;   // rho_p, spacing between standalone prune passes
  int freeze_patience = 3000; // rho_f
  bool standalone_prune = false;

  double belief_increment = 1.0 / 4500.0;  // eta_h = 1 / k_max
  double belief_magnitude = 0.01;          // m
  double batch_decay = 0.0;                // eta_bs
  int base_batch_size = 1;                 // b_0

  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct AdamMoments {
  std::vector<double> m_w, v_w, m_b, v_b;
  std::int64_t steps = 0;
};

/// Per-weight running [lo, hi] band since `since`. A weight counts as stable
/// for (episode - since) episodes while hi - lo < omega_f.
struct StabilityWindow {
  std::vector<double> lo, hi;
  std::vector<std::int64_t> since;
};

struct GpfLayer {
  Matrix weights;  // out x in
  std::vector<double> bias;
  Matrix belief;                     // same shape as weights, in [0, 1]
  std::vector<std::uint8_t> pruned;  // 1 = masked, never unset
  bool frozen = false;
  StabilityWindow stability;
  AdamMoments adam;

  std::size_t out_dim() const { return weights.rows(); }
  std::size_t in_dim() const { return weights.cols(); }
  std::size_t active_count() const;
  double retained_fraction() const;
};

struct PlateauTracker {
  double best_loss = std::numeric_limits<double>::infinity();
  std::int64_t last_improvement = 0;
  std::int64_t last_structural = 0;
  std::int64_t last_prune = std::numeric_limits<std::int32_t>::min();
  int grow_events = 0;
  int prune_events = 0;

  friend bool operator==(const PlateauTracker&, const PlateauTracker&) = default;
};

struct ForwardCache {
  // inputs[l] feeds layer l; pre[l] is layer l's pre-activation.
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre;
  std::uint64_t version = 0;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> bias;
};

struct PruneReport {
  std::vector<std::size_t> layers;       // indices that were pruned
  std::vector<double> layer_retained;    // retained fraction per entry of `layers`
  double retained_fraction = 1.0;        // active / total over layers [0, upto)
  std::size_t newly_masked = 0;
};

/// b_t = max(1, round(b0 * exp(-eta_bs * val_loss))).
int batch_size(double val_loss, const GpfConfig& cfg);

class GpfNetwork {
public:
  GpfNetwork() = default;

  /// Fresh network with `initial_hidden_layers` Kaiming-initialised hidden
  /// layers, zero biases and zero beliefs.
  static GpfNetwork create(const GpfConfig& cfg, Rng& rng);

  /// Assembles a network from parts (checkpoint loading).
  static GpfNetwork from_parts(GpfConfig cfg, std::vector<GpfLayer> layers, PlateauTracker plateau);

  const GpfConfig& config() const { return config_; }
  const std::vector<GpfLayer>& layers() const { return layers_; }
  const GpfLayer& layer(std::size_t i) const { return layers_.at(i); }
  /// Mutable access for tests and tools; invalidates forward caches.
  GpfLayer& mutable_layer(std::size_t i);
  const PlateauTracker& plateau() const { return plateau_; }
  std::size_t hidden_layers() const { return layers_.empty() ? 0 : layers_.size() - 1; }
  std::uint64_t version() const { return version_; }

  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> forward(std::span<const double> x, ForwardCache& cache) const;

  /// Gradients of a scalar loss given dL/dq at the output. Masked weights
  /// receive zero gradient. Throws on a stale cache.
  Gradients backward(const ForwardCache& cache, std::span<const double> dq) const;

  /// Adam step over unfrozen layers, skipping masked weights. `scale`
  /// multiplies every gradient first (1/batch for averaged minibatches).
  void apply_gradients(const Gradients& grads, double scale = 1.0);

  void backward_and_step(const ForwardCache& cache, std::span<const double> dq);

  /// Growth rule: grows when the validation loss has not improved by at
  /// least omega_v for grow_patience episodes (and as long since the last
  /// structural event) and depth < L_max. The new layer goes right before
  /// the output layer. Returns true when a layer was added.
  bool maybe_grow(double val_loss, std::int64_t episode, Rng& rng);

  /// h += eta_h * 1{|w| > m} on active weights of unfrozen layers.
  void update_beliefs(std::int64_t episode);

  /// Feeds current weights into each unfrozen layer's stability window.
  void record_stability(std::int64_t episode);

  /// Masks weights with h < omega_p and |w| < theta_w in every unfrozen
  /// layer with index < upto_layer. Masks are monotone.
  PruneReport prune(std::size_t upto_layer, std::int64_t episode);

  /// Whether a standalone prune pass is due (config flag plus spacing).
  bool standalone_prune_due(std::int64_t episode) const;

  /// Freezes hidden layers where at least phi_f of active weights stayed
  /// inside an omega_f band for freeze_patience episodes. Returns the
  /// indices frozen by this call.
  std::vector<std::size_t> maybe_freeze(std::int64_t episode);

  /// Active / total over all weights.
  double retained_fraction() const;

  bool gpf_enabled_at(std::int64_t episode) const { return episode >= config_.enable_patience; }

private:
  GpfLayer make_layer(std::size_t out, std::size_t in, Rng& rng, std::int64_t episode) const;

  GpfConfig config_;
  std::vector<GpfLayer> layers_;
  PlateauTracker plateau_;
  std::uint64_t version_ = 1;
};

}  // namespace gpf
