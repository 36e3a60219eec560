#include "clusterseg/clusternet.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace clusterseg {

namespace {

constexpr char kSnapshotMagic[8] = {'C', 'S', 'E', 'G', 'N', 'E', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated parameter snapshot");
  return v;
}

void check_finite(const Tensor<double>& t, const char* what) {
  if (!t.all_finite()) throw DivergenceError(std::string("non-finite activation in ") + what);
}

}  // namespace

FeatureEmbedding::FeatureEmbedding(const std::string& name, Index in_channels, Index out_channels,
                                   Input variant, const NetworkConfig& cfg)
    : in_(in_channels), out_(out_channels), variant_(variant), use_attention_(cfg.use_attention),
      shortcut_conv_(name + ".shortcut.conv", in_channels, out_channels, 3, false),
      shortcut_norm_(name + ".shortcut.bn", out_channels, cfg.bn_eps),
      pre_act_(cfg.relu_weight, cfg.tanh_weight),
      conv1_(name + ".stack.conv1", in_channels, out_channels, 3, false),
      mid_norm_(name + ".stack.bn2", out_channels, cfg.bn_eps),
      mid_act_(cfg.relu_weight, cfg.tanh_weight),
      conv2_(name + ".stack.conv2", out_channels, out_channels, 3, true),
      attention_(name + ".eca", out_channels, 3) {
  if (variant_ == Input::Features) pre_norm_ = BatchNorm<double>(name + ".stack.bn1", in_channels, cfg.bn_eps);
}

void FeatureEmbedding::init(std::mt19937_64& rng) {
  shortcut_conv_.init(rng);
  conv1_.init(rng);
  conv2_.init(rng);
  attention_.init(rng);
  shortcut_norm_.reset();
  mid_norm_.reset();
  if (variant_ == Input::Features) pre_norm_.reset();
}

Tensor<double> FeatureEmbedding::forward(const Tensor<double>& x) {
  Tensor<double> shortcut = shortcut_norm_.forward(shortcut_conv_.forward(x));
  Tensor<double> h = variant_ == Input::Features ? pre_act_.forward(pre_norm_.forward(x)) : x;
  h = conv1_.forward(h);
  h = conv2_.forward(mid_act_.forward(mid_norm_.forward(h)));
  if (use_attention_) h = attention_.forward(h);
  shortcut.data() += h.data();
  return shortcut;
}

Tensor<double> FeatureEmbedding::backward(const Tensor<double>& grad, bool need_input_grad) {
  Tensor<double> g = use_attention_ ? attention_.backward(grad) : grad;
  g = mid_norm_.backward(mid_act_.backward(conv2_.backward(g)));
  const bool stack_input_grad = need_input_grad || variant_ == Input::Features;
  g = conv1_.backward(g, stack_input_grad);
  if (variant_ == Input::Features) g = pre_norm_.backward(pre_act_.backward(g));
  Tensor<double> gs = shortcut_conv_.backward(shortcut_norm_.backward(grad), need_input_grad);
  if (!need_input_grad) return {};
  gs.data() += g.data();
  return gs;
}

void FeatureEmbedding::parameters(std::vector<Parameter<double>*>& out) {
  shortcut_conv_.parameters(out);
  shortcut_norm_.parameters(out);
  if (variant_ == Input::Features) pre_norm_.parameters(out);
  conv1_.parameters(out);
  mid_norm_.parameters(out);
  conv2_.parameters(out);
  if (use_attention_) attention_.parameters(out);
}

LabelPrediction predict_labels(const Tensor<double>& scores) {
  LabelPrediction pred;
  pred.labels.resize(scores.height(), scores.width());
  std::vector<bool> seen(static_cast<std::size_t>(scores.channels()), false);
  for (Index n = 0; n < scores.pixels(); ++n) {
    Index best = 0;
    for (Index q = 1; q < scores.channels(); ++q)
      if (scores.data()(q, n) > scores.data()(best, n)) best = q;
    pred.labels.data()[n] = static_cast<int>(best);
    seen[static_cast<std::size_t>(best)] = true;
  }
  for (std::size_t q = 0; q < seen.size(); ++q)
    if (seen[q]) pred.occupied.push_back(static_cast<int>(q));
  return pred;
}

ClusterNetwork::ClusterNetwork(const NetworkConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      f1_("F1", 3, kF1Channels, FeatureEmbedding::Input::Image, cfg),
      f2_("F2", 3, kF2Channels, FeatureEmbedding::Input::Image, cfg),
      f3_("F3", kF1Channels + kF2Channels, kF3Channels, FeatureEmbedding::Input::Features, cfg),
      f4_("F4", kF1Channels + kF3Channels, kF4Channels, FeatureEmbedding::Input::Features, cfg),
      up_("up", kF3Channels, kF3Channels),
      head_conv_("R.conv", kF4Channels, cfg.clusters, 1, false),
      head_norm_("R.bn", cfg.clusters, cfg.bn_eps),
      rec_full_("G1.conv", kF4Channels, 3, 1, true),
      rec_half_("G2.conv", kF3Channels, 3, 1, true) {
  if (cfg.clusters < 2) throw ConfigError("cluster count Q must be >= 2");
  if (f3_.in_channels() != f1_.out_channels() + f2_.out_channels() ||
      f4_.in_channels() != f1_.out_channels() + f3_.out_channels() || f4_.in_channels() != 192)
    throw ConfigError("inconsistent feature embedding channel widths");
  initialize(seed);
}

void ClusterNetwork::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  f1_.init(rng);
  f2_.init(rng);
  f3_.init(rng);
  f4_.init(rng);
  up_.init(rng);
  head_conv_.init(rng);
  head_norm_.reset();
  rec_full_.init(rng);
  rec_half_.init(rng);
  for (auto* p : parameters()) {
    p->grad.setZero();
    p->momentum.setZero();
  }
}

ForwardResult ClusterNetwork::forward(const Image& image) {
  if (image.channels() != 3) throw ConfigError("network input must have 3 channels");
  if (image.height() < kMinSide || image.width() < kMinSide)
    throw ConfigError("network input must be at least 16x16");
  if (image.height() % 2 != 0 || image.width() % 2 != 0)
    throw ConfigError("network input must have even height and width");

  const Tensor<double> a = f1_.forward(image);
  const Tensor<double> b = f2_.forward(bicubic_down2(image));
  const Tensor<double> c = f3_.forward(concat_channels(pool_.forward(a), b));
  const Tensor<double> d = f4_.forward(concat_channels(a, up_.forward(c)));

  ForwardResult r;
  r.scores = head_norm_.forward(head_conv_.forward(d));
  r.reconstruction = rec_full_.forward(d);
  r.reconstruction_half = rec_half_.forward(c);
  check_finite(r.scores, "cluster scores");
  check_finite(r.reconstruction, "reconstruction");
  check_finite(r.reconstruction_half, "half-resolution reconstruction");
  r.labels = predict_labels(r.scores).labels;
  return r;
}

void ClusterNetwork::backward(const Tensor<double>& grad_scores, const Image& grad_reconstruction,
                              const Image& grad_reconstruction_half) {
  Tensor<double> gd = head_conv_.backward(head_norm_.backward(grad_scores));
  gd.data() += rec_full_.backward(grad_reconstruction).data();

  auto [ga, gu] = split_channels(f4_.backward(gd), kF1Channels);
  Tensor<double> gc = up_.backward(gu);
  gc.data() += rec_half_.backward(grad_reconstruction_half).data();

  auto [gpool, gb] = split_channels(f3_.backward(gc), kF1Channels);
  f2_.backward(gb, false);
  ga.data() += pool_.backward(gpool).data();
  f1_.backward(ga, false);
}

std::vector<Parameter<double>*> ClusterNetwork::parameters() {
  std::vector<Parameter<double>*> out;
  f1_.parameters(out);
  f2_.parameters(out);
  f3_.parameters(out);
  f4_.parameters(out);
  up_.parameters(out);
  head_conv_.parameters(out);
  head_norm_.parameters(out);
  rec_full_.parameters(out);
  rec_half_.parameters(out);
  return out;
}

void ClusterNetwork::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void ClusterNetwork::save(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kSnapshotMagic, sizeof(kSnapshotMagic));
  const auto params = parameters();
  write_pod<std::int64_t>(out, cfg_.clusters);
  write_pod<std::int64_t>(out, static_cast<std::int64_t>(params.size()));
  for (const auto* p : params) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
    for (Index d : p->shape) write_pod<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->size())));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void ClusterNetwork::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof(kSnapshotMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + " is not a parameter snapshot");
  if (read_pod<std::int64_t>(in) != cfg_.clusters)
    throw ConfigError("snapshot cluster count differs from network");

  std::map<std::string, Parameter<double>*> by_name;
  for (auto* p : parameters()) by_name[p->name] = p;
  const auto count = read_pod<std::int64_t>(in);
  if (count != static_cast<std::int64_t>(by_name.size()))
    throw ConfigError("snapshot parameter count differs from network");

  for (std::int64_t i = 0; i < count; ++i) {
    std::string name(read_pod<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<Index> shape(read_pod<std::uint32_t>(in));
    for (auto& d : shape) d = read_pod<std::int64_t>(in);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("snapshot has unknown parameter " + name);
    if (it->second->shape != shape) throw ConfigError("snapshot shape mismatch for " + name);
    auto& v = it->second->value;
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(v.size())));
    if (!in) throw std::runtime_error("truncated parameter snapshot");
  }
}

}  // namespace clusterseg
