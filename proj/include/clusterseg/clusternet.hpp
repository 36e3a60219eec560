#ifndef CLUSTERSEG_CLUSTERNET_HPP
#define CLUSTERSEG_CLUSTERNET_HPP

#include "clusterseg/layers.hpp"
#include "clusterseg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace clusterseg {

struct NetworkConfig {
  int clusters = 100;  ///< Q, the maximum number of clusters
  bool use_attention = true;
  double relu_weight = 1.0;
  double tanh_weight = 0.4;
  double bn_eps = 1e-5;
};

/// Residual-style feature embedding module:
///   out = BN(conv3(x)) + eca(stack(x))
/// where stack is two [BN, ReLU+tanh, conv3] blocks. The image-input variant
/// drops the leading BN and activation.
class FeatureEmbedding {
 public:
  enum class Input { Image, Features };

  FeatureEmbedding() = default;
  FeatureEmbedding(const std::string& name, Index in_channels, Index out_channels, Input variant,
                   const NetworkConfig& cfg);

  void init(std::mt19937_64& rng);
  Tensor<double> forward(const Tensor<double>& x);
  Tensor<double> backward(const Tensor<double>& grad, bool need_input_grad = true);
  void parameters(std::vector<Parameter<double>*>& out);

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }

 private:
  Index in_ = 0, out_ = 0;
  Input variant_ = Input::Features;
  bool use_attention_ = true;

  Conv2d<double> shortcut_conv_;
  BatchNorm<double> shortcut_norm_;

  BatchNorm<double> pre_norm_;  // feature variant only
  ReluTanh<double> pre_act_;
  Conv2d<double> conv1_;
  BatchNorm<double> mid_norm_;
  ReluTanh<double> mid_act_;
  Conv2d<double> conv2_;
  EcaAttention<double> attention_;
};

struct ForwardResult {
  Tensor<double> scores;       ///< P: Q x H x W unnormalized cluster scores
  Image reconstruction;        ///< full resolution, 3 channels
  Image reconstruction_half;   ///< half resolution, 3 channels
  LabelMap labels;             ///< per-pixel argmax of P
};

struct LabelPrediction {
  LabelMap labels;
  std::vector<int> occupied;  ///< sorted cluster indices with at least one pixel
};

/// Per-pixel argmax over channels; ties go to the lowest channel index.
LabelPrediction predict_labels(const Tensor<double>& scores);

/// Dual-resolution clustering network:
///   a = F1(I); b = F2(down2(I)); c = F3([maxpool(a), b]);
///   d = F4([a, up2(c)]); P = BN(conv1(d)); I^ = G1(d); I^_0.5 = G2(c)
class ClusterNetwork {
 public:
  static constexpr Index kF1Channels = 64;
  static constexpr Index kF2Channels = 64;
  static constexpr Index kF3Channels = 128;
  static constexpr Index kF4Channels = 128;
  static constexpr Index kMinSide = 16;

  explicit ClusterNetwork(const NetworkConfig& cfg = {}, std::uint64_t seed = 0);

  /// Re-draws every parameter from the seeded initializer and clears
  /// gradients and momentum.
  void initialize(std::uint64_t seed);

  /// Image must be 3 x H x W with even H, W >= 16.
  ForwardResult forward(const Image& image);

  /// Accumulates parameter gradients from the gradients of P, I^ and I^_0.5
  /// for the most recent forward().
  void backward(const Tensor<double>& grad_scores, const Image& grad_reconstruction,
                const Image& grad_reconstruction_half);

  std::vector<Parameter<double>*> parameters();
  void zero_grad();

  const NetworkConfig& config() const { return cfg_; }
  int clusters() const { return cfg_.clusters; }

  Conv2d<double>& head_conv() { return head_conv_; }
  BatchNorm<double>& head_norm() { return head_norm_; }

  /// Flat binary snapshot: magic, Q, parameter count, then per parameter its
  /// identifier, logical shape and row-major doubles.
  void save(const std::filesystem::path& path);
  void load(const std::filesystem::path& path);

 private:
  NetworkConfig cfg_;
  FeatureEmbedding f1_, f2_, f3_, f4_;
  MaxPool2<double> pool_;
  TransposedConv2<double> up_;
  Conv2d<double> head_conv_;
  BatchNorm<double> head_norm_;
  Conv2d<double> rec_full_;
  Conv2d<double> rec_half_;
};

}  // namespace clusterseg

#endif  // CLUSTERSEG_CLUSTERNET_HPP
