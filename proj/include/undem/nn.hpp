#ifndef UNDEM_NN_HPP
#define UNDEM_NN_HPP

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "undem/autograd.hpp"

namespace undem {

/// Named trainable leaf.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

/// Weight initialization: weights ~ N(0, std), biases zero.
struct InitSpec {
  double weight_std = 0.02;
};

template <typename T>
Tensor<T> gaussian_tensor(Shape shape, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad, const InitSpec& init,
         std::mt19937_64& rng)
      : stride_(stride), pad_(pad) {
    weight_ = {name + ".weight", Var<T>(gaussian_tensor<T>(Shape{out_ch, in_ch, kernel, kernel}, init.weight_std, rng), true)};
    bias_ = {name + ".bias", Var<T>(Tensor<T>(Shape{1, out_ch, 1, 1}), true)};
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_.var, bias_.var, stride_, pad_); }

  void collect(ParameterList<T>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  int out_channels() const { return weight_.var.shape().n; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  int stride_ = 1;
  int pad_ = 0;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad, int output_pad,
                  const InitSpec& init, std::mt19937_64& rng)
      : stride_(stride), pad_(pad), output_pad_(output_pad) {
    weight_ = {name + ".weight", Var<T>(gaussian_tensor<T>(Shape{in_ch, out_ch, kernel, kernel}, init.weight_std, rng), true)};
    bias_ = {name + ".bias", Var<T>(Tensor<T>(Shape{1, out_ch, 1, 1}), true)};
  }

  Var<T> operator()(const Var<T>& x) const {
    return conv_transpose2d(x, weight_.var, bias_.var, stride_, pad_, output_pad_);
  }

  void collect(ParameterList<T>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  int stride_ = 2;
  int pad_ = 1;
  int output_pad_ = 1;
};

/// x + relu(in(conv(relu(in(conv(x)))))), size- and channel-preserving.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int channels, const InitSpec& init, std::mt19937_64& rng)
      : conv1_(name + ".conv1", channels, channels, 3, 1, 1, init, rng),
        conv2_(name + ".conv2", channels, channels, 3, 1, 1, init, rng) {}

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = relu(instance_norm(conv1_(x)));
    h = relu(instance_norm(conv2_(h)));
    return add(x, h);
  }

  void collect(ParameterList<T>& out) {
    conv1_.collect(out);
    conv2_.collect(out);
  }

 private:
  Conv2d<T> conv1_;
  Conv2d<T> conv2_;
};

template <typename T>
std::size_t parameter_count(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->var.value().size();
  return n;
}

template <typename T>
void zero_grad(const ParameterList<T>& params) {
  for (auto* p : params) p->var.zero_grad();
}

// --- binary parameter files --------------------------------------------------
//
// Layout: "UNDP" magic, u32 version, u32 scalar size, u32 count, then per entry:
// u32 name length, name bytes, 4 x i32 shape, raw little-endian values.

namespace detail {

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw DataError("truncated parameter stream");
  return v;
}

}  // namespace detail

template <typename T>
void write_tensors(std::ostream& os, const std::vector<std::pair<std::string, const Tensor<T>*>>& entries) {
  os.write("UNDP", 4);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint32_t>(os, sizeof(T));
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    for (int d : {t->n(), t->c(), t->h(), t->w()}) detail::write_pod<std::int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(T)));
  }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> read_tensors(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "UNDP") throw DataError("not a parameter file (bad magic)");
  if (detail::read_pod<std::uint32_t>(is) != 1) throw DataError("unsupported parameter file version");
  if (detail::read_pod<std::uint32_t>(is) != sizeof(T)) throw DataError("parameter file scalar width mismatch");
  const auto count = detail::read_pod<std::uint32_t>(is);
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::read_pod<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    Shape s;
    s.n = detail::read_pod<std::int32_t>(is);
    s.c = detail::read_pod<std::int32_t>(is);
    s.h = detail::read_pod<std::int32_t>(is);
    s.w = detail::read_pod<std::int32_t>(is);
    Tensor<T> t(s);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!is) throw DataError("truncated parameter file at '" + name + "'");
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

template <typename T>
void save_parameters(const std::string& path, const ParameterList<T>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  std::vector<std::pair<std::string, const Tensor<T>*>> entries;
  for (const auto* p : params) entries.emplace_back(p->name, &p->var.value());
  write_tensors<T>(os, entries);
  if (!os) throw DataError("failed writing " + path);
}

/// Loads values into an existing, architecture-matched parameter list.
template <typename T>
void load_parameters(const std::string& path, const ParameterList<T>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  auto entries = read_tensors<T>(is);
  if (entries.size() != params.size()) {
    throw DataError(path + ": expected " + std::to_string(params.size()) + " tensors, found " +
                    std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = entries[i];
    if (name != params[i]->name || !(t.shape() == params[i]->var.shape())) {
      throw DataError(path + ": parameter '" + name + "' " + t.shape().str() + " does not match '" +
                      params[i]->name + "' " + params[i]->var.shape().str());
    }
    params[i]->var.mutable_value() = std::move(t);
  }
}

}  // namespace undem

#endif  // UNDEM_NN_HPP
