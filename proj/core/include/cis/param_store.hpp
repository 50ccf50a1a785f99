#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cis/rng.hpp"
#include "cis/tensor.hpp"

namespace cis {

// Ordered collection of named trainable tensors plus adjacent state: Adam
// moments per parameter, non-trainable buffers (batchnorm running statistics)
// and the optimizer step counter. Iteration order is creation order, which the
// architecture builders make deterministic.
template <typename T>
class ParamStoreT {
 public:
  struct Param {
    std::string name;
    Tensor<T> tensor;
    std::vector<T> m, v;  // Adam moments, sized on first step
  };
  struct Buffer {
    std::string name;
    Tensor<T> tensor;
  };

  ParamStoreT() : rng_(0), seed_(0) {}
  explicit ParamStoreT(std::uint64_t seed) : rng_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  Rng& rng() { return rng_; }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail("param_store: unknown parameter '" + name + "'");
    return params_[it->second].tensor;
  }

  // Fetch-or-create used by the architecture builders: on first touch the
  // parameter is created via init(rng) (required); later touches validate the
  // shape. This keeps init and forward wiring consistent by construction.
  template <typename InitFn>
  Tensor<T>& get_or_create(const std::string& name, const Shape& shape, InitFn init) {
    auto it = index_.find(name);
    if (it != index_.end()) {
      auto& t = params_[it->second].tensor;
      if (!same_shape(t.shape(), shape)) {
        fail("param_store: parameter '" + name + "' has shape " + shape_str(t.shape()) +
             ", requested " + shape_str(shape));
      }
      return t;
    }
    std::vector<T> values(static_cast<std::size_t>(numel(shape)));
    for (auto& v : values) v = static_cast<T>(init(rng_));
    Param p;
    p.name = name;
    p.tensor = Tensor<T>::from_data(shape, std::move(values), /*requires_grad=*/true);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back().tensor;
  }

  Tensor<T>& buffer(const std::string& name, const Shape& shape, T fill) {
    auto it = buffer_index_.find(name);
    if (it != buffer_index_.end()) return buffers_[it->second].tensor;
    Buffer b;
    b.name = name;
    b.tensor = Tensor<T>::filled(shape, fill, /*requires_grad=*/false);
    buffer_index_[name] = buffers_.size();
    buffers_.push_back(std::move(b));
    return buffers_.back().tensor;
  }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Buffer>& buffers() { return buffers_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  std::uint64_t step() const { return step_; }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void set_requires_grad(bool v) {
    for (auto& p : params_) p.tensor.set_requires_grad(v);
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  // Adam with bias correction. One shared step count for all parameters;
  // gradients are consumed (zeroed) by the update.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    const std::uint64_t t = step_ + 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& p : params_) {
      if (!p.tensor.has_grad()) {
        fail("adam_step: parameter '" + p.name + "' has no gradient");
      }
      const auto g = p.tensor.grad();
      if (p.m.empty()) p.m.assign(g.size(), T(0));
      if (p.v.empty()) p.v.assign(g.size(), T(0));
      auto w = p.tensor.mutable_values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1 * static_cast<double>(p.m[i]) + (1.0 - beta1) * gi;
        const double vi = beta2 * static_cast<double>(p.v[i]) + (1.0 - beta2) * gi * gi;
        p.m[i] = static_cast<T>(mi);
        p.v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
      p.tensor.zero_grad();
    }
    step_ = t;
  }

  void set_step(std::uint64_t s) { step_ = s; }

 private:
  std::vector<Param> params_;
  std::vector<Buffer> buffers_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::size_t> buffer_index_;
  std::uint64_t step_ = 0;
  Rng rng_;
  std::uint64_t seed_;
};

using ParamStore = ParamStoreT<float>;

// Checkpoint codec ("CISP" format, see README): magic, version, parameter
// records, then Adam moments and buffers in the same record layout, then the
// step counter. float32 stores round-trip bit-exactly.
void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace cis
