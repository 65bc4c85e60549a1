#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "imp/errors.hpp"
#include "imp/rng.hpp"

namespace imp::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Head : std::uint8_t { softmax = 0, linear = 1 };

struct Layer {
  Matrix weight;  // out x in
  Vector bias;
};

// Activations kept by forward() for the backward pass. Columns are samples.
struct Cache {
  std::vector<Matrix> inputs;  // input to each layer
  Matrix logits;               // pre-head output
  Matrix output;               // head output
};

struct Gradients {
  std::vector<Layer> layers;

  double squared_norm() const {
    double s = 0.0;
    for (auto const& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
    return s;
  }
  bool all_finite() const {
    for (auto const& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }
};

// Column-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double mx = z.col(c).maxCoeff();
    p.col(c) = (z.col(c).array() - mx).exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

// Dense feed-forward network: rectifier hidden layers and a softmax or
// linear output head.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> sizes, Head head) : sizes_(std::move(sizes)), head_(head) {
    if (sizes_.size() < 2) throw DomainError("network needs at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw DomainError("layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      layers_.push_back({Matrix::Zero(sizes_[l + 1], sizes_[l]), Vector::Zero(sizes_[l + 1])});
  }

  // He-uniform for rectifier layers; the output layer is drawn 10x smaller so
  // fresh actors start close to uniform.
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const double fan_in = static_cast<double>(layers_[l].weight.cols());
      double bound = std::sqrt(6.0 / fan_in);
      if (l + 1 == layers_.size()) bound *= 0.1;
      for (Eigen::Index i = 0; i < layers_[l].weight.size(); ++i)
        layers_[l].weight.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
      layers_[l].bias.setZero();
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  Head head() const { return head_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto const& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  // Batched forward pass; `x` is input_size x batch.
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    if (x.rows() != input_size())
      throw DomainError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                        std::to_string(input_size()));
    if (cache) cache->inputs.clear();
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (cache) cache->inputs.push_back(h);
      Matrix z = layers_[l].weight * h;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size())
        h = z.cwiseMax(0.0);
      else
        h = std::move(z);
    }
    Matrix out = head_ == Head::softmax ? softmax(h) : h;
    if (cache) {
      cache->logits = h;
      cache->output = out;
    }
    return out;
  }

  Vector forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

  // Gradients of a scalar objective given d(objective)/d(output), summed
  // over the batch columns.
  Gradients backward(const Cache& cache, const Matrix& output_grad) const {
    Matrix dz;
    if (head_ == Head::softmax) {
      const Matrix& p = cache.output;
      dz = p.cwiseProduct(output_grad);
      const Eigen::RowVectorXd dot = dz.colwise().sum();
      dz -= p * dot.asDiagonal();
    } else {
      dz = output_grad;
    }
    return backward_logits(cache, dz);
  }

  // Same, starting from d(objective)/d(logits).
  Gradients backward_logits(const Cache& cache, Matrix dz) const {
    Gradients g;
    g.layers.resize(layers_.size());
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& in = cache.inputs[l];
      g.layers[l].weight = dz * in.transpose();
      g.layers[l].bias = dz.rowwise().sum();
      if (l == 0) break;
      Matrix dh = layers_[l].weight.transpose() * dz;
      dz = dh.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
    }
    return g;
  }

 private:
  std::vector<int> sizes_;
  Head head_ = Head::linear;
  std::vector<Layer> layers_;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Layer> m;
  std::vector<Layer> v;

  static AdamState for_network(const Mlp& net, double lr) {
    AdamState s;
    s.learning_rate = lr;
    for (auto const& l : net.layers()) {
      s.m.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
      s.v.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    return s;
  }
};

// Bias-corrected Adam descent step on `grads`.
inline void adam_step(Mlp& net, const Gradients& grads, AdamState& st) {
  if (st.m.size() != net.layers().size() || grads.layers.size() != net.layers().size())
    throw DomainError("optimizer state does not match network");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
    param.array() -= st.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + st.epsilon);
  };
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    update(layer.weight, grads.layers[l].weight, st.m[l].weight, st.v[l].weight);
    update(layer.bias, grads.layers[l].bias, st.m[l].bias, st.v[l].bias);
  }
}

// Checkpoint layout (little-endian):
//   char[8]  magic "IMPNET\0\1"   (last byte = format version)
//   u32      network count
//   per network:
//     u8     head (0 softmax, 1 linear)
//     u32    number of size entries L+1
//     u32[L+1] layer sizes, input first
//     per layer: f64[out*in] weights row-major, f64[out] biases
inline constexpr char kCheckpointMagic[8] = {'I', 'M', 'P', 'N', 'E', 'T', '\0', '\1'};

namespace detail {
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("truncated checkpoint");
  return v;
}
}  // namespace detail

inline void save_networks(std::ostream& os, std::span<const Mlp> nets) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(nets.size()));
  for (auto const& net : nets) {
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(net.head()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(net.sizes().size()));
    for (int s : net.sizes()) detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s));
    for (auto const& l : net.layers()) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::put<double>(os, l.weight(r, c));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::put<double>(os, l.bias(r));
    }
  }
}

inline std::vector<Mlp> load_networks(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ConfigError("not a network checkpoint (bad magic or version)");
  const auto count = detail::get<std::uint32_t>(is);
  std::vector<Mlp> nets;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto head = detail::get<std::uint8_t>(is);
    if (head > 1) throw ConfigError("unknown network head in checkpoint");
    const auto n = detail::get<std::uint32_t>(is);
    if (n < 2 || n > 64) throw ConfigError("implausible layer count in checkpoint");
    std::vector<int> sizes(n);
    for (auto& s : sizes) s = static_cast<int>(detail::get<std::uint32_t>(is));
    Mlp net(sizes, static_cast<Head>(head));
    for (auto& l : net.layers()) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = detail::get<double>(is);
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = detail::get<double>(is);
    }
    nets.push_back(std::move(net));
  }
  return nets;
}

}  // namespace imp::nn
