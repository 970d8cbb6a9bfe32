#include "valimetrics/perceptual.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include <Eigen/Eigenvalues>

#include "valimetrics/error.hpp"

namespace valimetrics {

namespace {

constexpr char kStackMagic[4] = {'V', 'F', 'T', 'S'};
constexpr char kWeightsMagic[4] = {'V', 'F', 'T', 'W'};
constexpr std::uint32_t kFormatVersion = 1;
// 2^31 floats per layer is far beyond any real activation map.
constexpr std::uint64_t kMaxLayerElements = std::uint64_t{1} << 31;

class Writer {
public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw Error(Errc::TruncatedFile, "need " + std::to_string(n) + " bytes at offset " +
                                           std::to_string(pos_) + ", file has " +
                                           std::to_string(b_.size()));
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(&b_[pos_]), n);
    pos_ += n;
    return s;
  }
  void magic(const char (&expected)[4]) {
    if (b_.size() < 4 || std::memcmp(b_.data(), expected, 4) != 0) {
      throw Error(Errc::BadMagic, "expected '" + std::string(expected, 4) + "'");
    }
    pos_ = 4;
  }
  bool done() const { return pos_ == b_.size(); }

private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void check_version(std::uint32_t v) {
  if (v != kFormatVersion) throw Error(Errc::ParseError, "unsupported version " + std::to_string(v));
}

void check_finite(float v) {
  if (!std::isfinite(v)) throw Error(Errc::ParseError, "non-finite feature value");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, Eigen::VectorXd* eigenvalues_out = nullptr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw Error(Errc::EigenFailure, "eigendecomposition did not converge");
  Eigen::VectorXd lambda = solver.eigenvalues();
  const double lambda_max = lambda.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < 0.0) {
      if (lambda[i] < -1e-8 * lambda_max) {
        throw Error(Errc::EigenFailure, "matrix is not positive semi-definite (eigenvalue " +
                                            std::to_string(lambda[i]) + ")");
      }
      lambda[i] = 0.0;
    }
  }
  if (eigenvalues_out) *eigenvalues_out = lambda;
  const Eigen::MatrixXd& v = solver.eigenvectors();
  return v * lambda.cwiseSqrt().asDiagonal() * v.transpose();
}

}  // namespace

LpipsWeights LpipsWeights::uniform(const FeatureStack& shape) {
  LpipsWeights w;
  for (const auto& layer : shape.layers) w.layers.emplace_back(layer.channels, 1.0f);
  return w;
}

std::vector<std::uint8_t> encode_feature_stack(const FeatureStack& stack) {
  if (stack.extractor_id.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(Errc::ShapeOverflow, "extractor id longer than 65535 bytes");
  }
  Writer w;
  w.bytes(kStackMagic, 4);
  w.u32(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(stack.extractor_id.size()));
  w.bytes(stack.extractor_id.data(), stack.extractor_id.size());
  w.u32(static_cast<std::uint32_t>(stack.layers.size()));
  for (const auto& layer : stack.layers) {
    if (layer.data.size() != static_cast<std::size_t>(layer.channels) * layer.height * layer.width) {
      throw Error(Errc::ShapeMismatch, "feature map data does not match its C*H*W header");
    }
    w.u32(layer.channels);
    w.u32(layer.height);
    w.u32(layer.width);
    for (float v : layer.data) w.f32(v);
  }
  return w.take();
}

FeatureStack decode_feature_stack(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kStackMagic);
  check_version(r.u32());
  FeatureStack stack;
  stack.extractor_id = r.str(r.u16());
  const std::uint32_t layer_count = r.u32();
  if (layer_count == 0) throw Error(Errc::ShapeMismatch, "feature stack has no layers");
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    const std::uint32_t c = r.u32(), h = r.u32(), w = r.u32();
    const std::uint64_t count = std::uint64_t{c} * h * w;
    if (c == 0 || h == 0 || w == 0) throw Error(Errc::ShapeMismatch, "empty feature map dimension");
    if (count > kMaxLayerElements) {
      throw Error(Errc::ShapeOverflow, "layer " + std::to_string(l) + " declares " +
                                           std::to_string(count) + " values");
    }
    r.need(count * 4);
    FeatureMap map(c, h, w);
    for (float& v : map.data) {
      v = r.f32();
      check_finite(v);
    }
    stack.layers.push_back(std::move(map));
  }
  if (!r.done()) throw Error(Errc::ParseError, "trailing bytes after last layer");
  return stack;
}

FeatureStack load_feature_stack(const std::filesystem::path& path) {
  try {
    return decode_feature_stack(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_feature_stack(const std::filesystem::path& path, const FeatureStack& stack) {
  write_file(path, encode_feature_stack(stack));
}

std::vector<std::uint8_t> encode_lpips_weights(const LpipsWeights& weights) {
  Writer w;
  w.bytes(kWeightsMagic, 4);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(weights.layers.size()));
  for (const auto& layer : weights.layers) {
    w.u32(static_cast<std::uint32_t>(layer.size()));
    for (float v : layer) w.f32(v);
  }
  return w.take();
}

LpipsWeights decode_lpips_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kWeightsMagic);
  check_version(r.u32());
  LpipsWeights weights;
  const std::uint32_t layer_count = r.u32();
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    const std::uint32_t c = r.u32();
    if (c > kMaxLayerElements) throw Error(Errc::ShapeOverflow, "weight layer too large");
    r.need(std::uint64_t{c} * 4);
    std::vector<float> layer(c);
    for (float& v : layer) {
      v = r.f32();
      check_finite(v);
      if (v < 0.0f) throw Error(Errc::ParseError, "negative LPIPS weight");
    }
    weights.layers.push_back(std::move(layer));
  }
  if (!r.done()) throw Error(Errc::ParseError, "trailing bytes after last weight layer");
  return weights;
}

LpipsWeights load_lpips_weights(const std::filesystem::path& path) {
  try {
    return decode_lpips_weights(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_lpips_weights(const std::filesystem::path& path, const LpipsWeights& weights) {
  write_file(path, encode_lpips_weights(weights));
}

double lpips(const FeatureStack& ref, const FeatureStack& mod, const LpipsWeights& weights) {
  if (ref.extractor_id != mod.extractor_id) {
    throw Error(Errc::ExtractorMismatch, "'" + ref.extractor_id + "' vs '" + mod.extractor_id + "'");
  }
  if (ref.layers.size() != mod.layers.size() || ref.layers.size() != weights.layers.size()) {
    throw Error(Errc::ShapeMismatch, "layer counts differ between stacks and weights");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < ref.layers.size(); ++l) {
    const FeatureMap& a = ref.layers[l];
    const FeatureMap& b = mod.layers[l];
    const auto& w = weights.layers[l];
    if (a.channels != b.channels || a.height != b.height || a.width != b.width ||
        w.size() != a.channels) {
      throw Error(Errc::ShapeMismatch, "layer " + std::to_string(l) + " shape differs");
    }
    const std::size_t plane = a.positions();
    double layer_sum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      double na = 0.0, nb = 0.0;
      for (std::uint32_t c = 0; c < a.channels; ++c) {
        const double va = a.data[c * plane + p], vb = b.data[c * plane + p];
        na += va * va;
        nb += vb * vb;
      }
      const double ia = na > 0.0 ? 1.0 / std::sqrt(na) : 0.0;
      const double ib = nb > 0.0 ? 1.0 / std::sqrt(nb) : 0.0;
      for (std::uint32_t c = 0; c < a.channels; ++c) {
        const double d = w[c] * (a.data[c * plane + p] * ia - b.data[c * plane + p] * ib);
        layer_sum += d * d;
      }
    }
    total += layer_sum / static_cast<double>(plane);
  }
  return total;
}

GaussianSummary gaussian_summary(const FeatureMap& map, double shrinkage) {
  const std::size_t n = map.positions();
  if (n < 2) throw Error(Errc::TooFewSamples, "need at least two spatial positions, got " + std::to_string(n));
  const Eigen::Index c = map.channels;
  // Rows are channels, columns are samples.
  const Eigen::Map<const Eigen::MatrixXf, 0, Eigen::OuterStride<>> raw(
      map.data.data(), static_cast<Eigen::Index>(n), c, Eigen::OuterStride<>(static_cast<Eigen::Index>(n)));
  const Eigen::MatrixXd samples = raw.cast<double>().transpose();
  GaussianSummary s;
  s.n_samples = n;
  s.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centered = samples.colwise() - s.mean;
  s.covariance = centered * centered.transpose() / static_cast<double>(n - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
  const double trace = s.covariance.trace();
  s.covariance.diagonal().array() += shrinkage * trace / static_cast<double>(c);
  return s;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows()) {
    throw Error(Errc::DimensionMismatch, "Gaussian summaries have different dimensions");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd sqrt_a = psd_sqrt(a.covariance);
  Eigen::MatrixXd product = sqrt_a * b.covariance * sqrt_a;
  product = 0.5 * (product + product.transpose());
  Eigen::VectorXd lambda;
  psd_sqrt(product, &lambda);
  const double trace_sqrt = lambda.cwiseSqrt().sum();
  const double d = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_sqrt;
  return std::max(d, 0.0);
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error(Errc::DimensionMismatch, "vector lengths differ");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu <= 0.0 || nv <= 0.0) throw Error(Errc::ZeroVector, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::vector<double> pooled_feature_vector(const FeatureStack& stack) {
  std::vector<double> out;
  for (const auto& layer : stack.layers) {
    const std::size_t plane = layer.positions();
    for (std::uint32_t c = 0; c < layer.channels; ++c) {
      double sum = 0.0;
      for (std::size_t p = 0; p < plane; ++p) sum += layer.data[c * plane + p];
      out.push_back(sum / static_cast<double>(plane));
    }
  }
  return out;
}

namespace {

// For each output cell along one axis: (source index, coverage weight) pairs
// whose weights sum to one.
std::vector<std::vector<std::pair<int, double>>> area_weights(int src, int dst) {
  std::vector<std::vector<std::pair<int, double>>> out(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int j = 0; j < dst; ++j) {
    const double lo = j * scale, hi = (j + 1) * scale;
    for (int x = static_cast<int>(std::floor(lo)); x < src && x < hi; ++x) {
      const double overlap = std::min<double>(x + 1, hi) - std::max<double>(x, lo);
      if (overlap > 0.0) out[j].emplace_back(x, overlap / scale);
    }
  }
  return out;
}

}  // namespace

std::vector<double> luma_vector(const GrayImage& luma, int side) {
  const auto wx = area_weights(luma.width, side);
  const auto wy = area_weights(luma.height, side);
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      double acc = 0.0;
      for (auto [y, fy] : wy[i]) {
        for (auto [x, fx] : wx[j]) acc += fy * fx * luma.at(x, y);
      }
      out[static_cast<std::size_t>(i) * side + j] = acc;
    }
  }
  return out;
}

}  // namespace valimetrics
