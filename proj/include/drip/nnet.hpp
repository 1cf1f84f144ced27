#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "drip/rng.hpp"

namespace drip::nnet {

using Vec = std::vector<double>;

struct Tensor {
  std::vector<std::size_t> shape;
  Vec data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, double fill = 0.0);

  std::size_t size() const { return data.size(); }
};

enum class Activation { Tanh, Relu, Mish };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Dense multi-layer perceptron, 64-bit floats, linear output layer.
struct Mlp {
  struct Layer {
    Tensor w;  // [out, in], row-major
    Tensor b;  // [out]
  };

  std::vector<std::size_t> widths;
  Activation activation = Activation::Relu;
  std::vector<Layer> layers;

  // Uniform fan-in init: U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
  static Mlp create(std::vector<std::size_t> widths, Activation act, Rng& rng);

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t param_count() const;

  Vec forward(std::span<const double> x) const;

  struct Cache {
    Vec input;
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // activated output per hidden layer
  };
  Vec forward(std::span<const double> x, Cache& cache) const;

  // Gradient containers mirror the layer shapes.
  struct Grads {
    std::vector<Layer> layers;
    void zero();
    void add(const Grads& other, double scale = 1.0);
    double max_abs() const;
  };
  Grads zero_grads() const;

  // Accumulates d(output . upstream)/d(params) into grads; when input_grad is
  // non-null, also accumulates the gradient with respect to the input.
  void backward(const Cache& cache, std::span<const double> upstream, Grads& grads,
                Vec* input_grad = nullptr) const;
};

// AdamW with decoupled weight decay.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  long step_count = 0;
  std::vector<Mlp::Layer> m;
  std::vector<Mlp::Layer> v;

  static AdamW create(const Mlp& net, double lr, double weight_decay = 0.0);
  void update(Mlp& net, const Mlp::Grads& grads);
};

// Sinusoidal timestep embedding of even dimension `dim`.
Vec sinusoidal_embedding(double t, std::size_t dim);

// Named-network checkpoint container ("drip-ckpt/1").
struct Checkpoint {
  std::map<std::string, Mlp> nets;
  std::map<std::string, AdamW> opt_states;
  std::map<std::string, std::string> meta;     // free-form strings
  std::map<std::string, double> meta_numbers;  // free-form numbers

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace drip::nnet
