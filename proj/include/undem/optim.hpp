#ifndef UNDEM_OPTIM_HPP
#define UNDEM_OPTIM_HPP

#include <cmath>
#include <fstream>

#include "undem/nn.hpp"

namespace undem {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Moment buffers are index-aligned with the list.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(ParameterList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto* p : params_) {
      m_.emplace_back(p->var.shape());
      v_.emplace_back(p->var.shape());
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long steps() const { return step_; }
  const ParameterList<T>& parameters() const { return params_; }

  void zero_grad() { undem::zero_grad(params_); }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(cfg_.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i]->var.grad();
      if (g.empty()) continue;
      auto& w = params_[i]->var.mutable_value();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_bc2 + eps);
      }
    }
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + path);
    detail::write_pod<std::int64_t>(os, step_);
    detail::write_pod<double>(os, cfg_.lr);
    std::vector<std::pair<std::string, const Tensor<T>*>> entries;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      entries.emplace_back(params_[i]->name + ".m", &m_[i]);
      entries.emplace_back(params_[i]->name + ".v", &v_[i]);
    }
    write_tensors<T>(os, entries);
    if (!os) throw DataError("failed writing " + path);
  }

  void load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    step_ = detail::read_pod<std::int64_t>(is);
    cfg_.lr = detail::read_pod<double>(is);
    auto entries = read_tensors<T>(is);
    if (entries.size() != 2 * params_.size()) throw DataError(path + ": optimizer state does not match parameters");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!(entries[2 * i].second.shape() == params_[i]->var.shape())) {
        throw DataError(path + ": moment shape mismatch for " + params_[i]->name);
      }
      m_[i] = std::move(entries[2 * i].second);
      v_[i] = std::move(entries[2 * i + 1].second);
    }
  }

 private:
  ParameterList<T> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  long step_ = 0;
};

/// Constant rate for the first half of training, then linear decay to zero at
/// the final epoch. rate_after_epoch(e) is the value the schedule holds once
/// epoch e has finished; epoch e itself trains with rate_after_epoch(e - 1).
class LinearDecaySchedule {
 public:
  LinearDecaySchedule(double base_lr, int total_epochs)
      : LinearDecaySchedule(base_lr, total_epochs, total_epochs / 2) {}
  LinearDecaySchedule(double base_lr, int total_epochs, int decay_start)
      : base_(base_lr), total_(total_epochs), decay_start_(decay_start) {
    if (total_epochs < 1) throw UsageError("schedule needs at least one epoch");
    if (decay_start < 0 || decay_start > total_epochs) throw UsageError("decay start outside [0, epochs]");
  }

  double rate_after_epoch(int epoch) const {
    if (epoch <= decay_start_) return base_;
    if (epoch >= total_) return 0.0;
    return base_ * static_cast<double>(total_ - epoch) / static_cast<double>(total_ - decay_start_);
  }

  /// Rate applied while training epoch `epoch` (1-based).
  double rate_for_epoch(int epoch) const { return rate_after_epoch(epoch - 1); }

  int total_epochs() const { return total_; }
  int decay_start() const { return decay_start_; }

 private:
  double base_;
  int total_;
  int decay_start_;
};

}  // namespace undem

#endif  // UNDEM_OPTIM_HPP
