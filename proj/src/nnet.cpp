#include "drip/nnet.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace drip::nnet {

using json = nlohmann::ordered_json;

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  data.assign(n, fill);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Mish: return "mish";
  }
  return "relu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "mish") return Activation::Mish;
  throw std::runtime_error("unknown activation: " + s);
}

namespace {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double act_value(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Mish: return x * std::tanh(softplus(x));
  }
  return x;
}

double act_derivative(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Mish: {
      const double sp = softplus(x);
      const double t = std::tanh(sp);
      const double sig = 1.0 / (1.0 + std::exp(-x));
      return t + x * sig * (1.0 - t * t);
    }
  }
  return 1.0;
}

}  // namespace

Mlp Mlp::create(std::vector<std::size_t> widths, Activation act, Rng& rng) {
  if (widths.size() < 2) throw std::runtime_error("Mlp needs at least input and output widths");
  Mlp net;
  net.widths = std::move(widths);
  net.activation = act;
  for (std::size_t i = 0; i + 1 < net.widths.size(); ++i) {
    const std::size_t in = net.widths[i], out = net.widths[i + 1];
    Layer layer{Tensor({out, in}), Tensor({out})};
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    for (double& w : layer.w.data) w = rng.uniform(-bound, bound);
    for (double& b : layer.b.data) b = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

Vec Mlp::forward(std::span<const double> x) const {
  Cache cache;
  return forward(x, cache);
}

Vec Mlp::forward(std::span<const double> x, Cache& cache) const {
  if (x.size() != input_width()) throw std::runtime_error("Mlp::forward: input width mismatch");
  cache.input.assign(x.begin(), x.end());
  cache.pre.resize(layers.size());
  cache.post.resize(layers.size());

  const Vec* cur = &cache.input;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& layer = layers[li];
    const std::size_t out = layer.b.size(), in = cur->size();
    Vec& pre = cache.pre[li];
    pre.assign(out, 0.0);
    const double* wp = layer.w.data.data();
    for (std::size_t o = 0; o < out; ++o) {
      double acc = layer.b.data[o];
      const double* row = wp + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * (*cur)[i];
      pre[o] = acc;
    }
    const bool last = li + 1 == layers.size();
    Vec& post = cache.post[li];
    if (last) {
      post = pre;  // linear output
    } else {
      post.resize(out);
      for (std::size_t o = 0; o < out; ++o) post[o] = act_value(activation, pre[o]);
    }
    cur = &post;
  }
  return cache.post.back();
}

Mlp::Grads Mlp::zero_grads() const {
  Grads g;
  for (const auto& l : layers) {
    g.layers.push_back({Tensor(l.w.shape), Tensor(l.b.shape)});
  }
  return g;
}

void Mlp::Grads::zero() {
  for (auto& l : layers) {
    std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
    std::fill(l.b.data.begin(), l.b.data.end(), 0.0);
  }
}

void Mlp::Grads::add(const Grads& other, double scale) {
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (std::size_t i = 0; i < layers[li].w.size(); ++i)
      layers[li].w.data[i] += scale * other.layers[li].w.data[i];
    for (std::size_t i = 0; i < layers[li].b.size(); ++i)
      layers[li].b.data[i] += scale * other.layers[li].b.data[i];
  }
}

double Mlp::Grads::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    for (double v : l.w.data) m = std::max(m, std::abs(v));
    for (double v : l.b.data) m = std::max(m, std::abs(v));
  }
  return m;
}

void Mlp::backward(const Cache& cache, std::span<const double> upstream, Grads& grads,
                   Vec* input_grad) const {
  if (upstream.size() != output_width())
    throw std::runtime_error("Mlp::backward: upstream width mismatch");

  Vec delta(upstream.begin(), upstream.end());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& layer = layers[li];
    const Vec& in_act = li == 0 ? cache.input : cache.post[li - 1];
    const std::size_t out = layer.b.size(), in = in_act.size();

    // delta is d(loss)/d(pre-activation) of this layer once multiplied by the
    // activation derivative; the output layer is linear.
    if (li + 1 != layers.size()) {
      for (std::size_t o = 0; o < out; ++o) delta[o] *= act_derivative(activation, cache.pre[li][o]);
    }

    auto& gl = grads.layers[li];
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      gl.b.data[o] += d;
      double* grow = gl.w.data.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += d * in_act[i];
    }

    if (li == 0 && input_grad == nullptr) break;
    Vec prev(in, 0.0);
    const double* wp = layer.w.data.data();
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* row = wp + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += d * row[i];
    }
    if (li == 0) {
      if (input_grad->size() != in) input_grad->assign(in, 0.0);
      for (std::size_t i = 0; i < in; ++i) (*input_grad)[i] += prev[i];
      break;
    }
    delta = std::move(prev);
  }
}

AdamW AdamW::create(const Mlp& net, double lr, double weight_decay) {
  AdamW opt;
  opt.lr = lr;
  opt.weight_decay = weight_decay;
  for (const auto& l : net.layers) {
    opt.m.push_back({Tensor(l.w.shape), Tensor(l.b.shape)});
    opt.v.push_back({Tensor(l.w.shape), Tensor(l.b.shape)});
  }
  return opt;
}

void AdamW::update(Mlp& net, const Mlp::Grads& grads) {
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  auto update_array = [&](Vec& p, const Vec& g, Vec& mo, Vec& vo) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      mo[i] = beta1 * mo[i] + (1.0 - beta1) * g[i];
      vo[i] = beta2 * vo[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = mo[i] / bc1;
      const double vhat = vo[i] / bc2;
      p[i] -= lr * weight_decay * p[i];
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  };
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    update_array(net.layers[li].w.data, grads.layers[li].w.data, m[li].w.data, v[li].w.data);
    update_array(net.layers[li].b.data, grads.layers[li].b.data, m[li].b.data, v[li].b.data);
  }
}

Vec sinusoidal_embedding(double t, std::size_t dim) {
  Vec emb(dim, 0.0);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                 static_cast<double>(half));
    emb[2 * i] = std::sin(t * freq);
    emb[2 * i + 1] = std::cos(t * freq);
  }
  return emb;
}

// --- checkpoint io ------------------------------------------------------

namespace {

json layer_to_json(const Mlp::Layer& l) {
  return json{{"w_shape", l.w.shape}, {"w", l.w.data}, {"b", l.b.data}};
}

Mlp::Layer layer_from_json(const json& j) {
  Mlp::Layer l;
  l.w.shape = j.at("w_shape").get<std::vector<std::size_t>>();
  l.w.data = j.at("w").get<Vec>();
  l.b.shape = {j.at("b").size()};
  l.b.data = j.at("b").get<Vec>();
  return l;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  json j;
  j["version"] = "drip-ckpt/1";
  json jnets = json::object();
  for (const auto& [name, net] : nets) {
    json jn;
    jn["widths"] = net.widths;
    jn["activation"] = to_string(net.activation);
    json jl = json::array();
    for (const auto& l : net.layers) jl.push_back(layer_to_json(l));
    jn["layers"] = jl;
    jnets[name] = jn;
  }
  j["nets"] = jnets;
  json jopts = json::object();
  for (const auto& [name, opt] : opt_states) {
    json jo;
    jo["lr"] = opt.lr;
    jo["beta1"] = opt.beta1;
    jo["beta2"] = opt.beta2;
    jo["eps"] = opt.eps;
    jo["weight_decay"] = opt.weight_decay;
    jo["step_count"] = opt.step_count;
    json jm = json::array(), jv = json::array();
    for (const auto& l : opt.m) jm.push_back(layer_to_json(l));
    for (const auto& l : opt.v) jv.push_back(layer_to_json(l));
    jo["m"] = jm;
    jo["v"] = jv;
    jopts[name] = jo;
  }
  j["opt_states"] = jopts;
  j["meta"] = meta;
  j["meta_numbers"] = meta_numbers;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  json j = json::parse(in);
  if (j.at("version").get<std::string>() != "drip-ckpt/1")
    throw std::runtime_error("unsupported checkpoint version in " + path);

  Checkpoint ck;
  for (const auto& [name, jn] : j.at("nets").items()) {
    Mlp net;
    net.widths = jn.at("widths").get<std::vector<std::size_t>>();
    net.activation = activation_from_string(jn.at("activation").get<std::string>());
    for (const auto& jl : jn.at("layers")) net.layers.push_back(layer_from_json(jl));
    ck.nets.emplace(name, std::move(net));
  }
  if (j.contains("opt_states")) {
    for (const auto& [name, jo] : j.at("opt_states").items()) {
      AdamW opt;
      opt.lr = jo.at("lr").get<double>();
      opt.beta1 = jo.at("beta1").get<double>();
      opt.beta2 = jo.at("beta2").get<double>();
      opt.eps = jo.at("eps").get<double>();
      opt.weight_decay = jo.at("weight_decay").get<double>();
      opt.step_count = jo.at("step_count").get<long>();
      for (const auto& jl : jo.at("m")) opt.m.push_back(layer_from_json(jl));
      for (const auto& jl : jo.at("v")) opt.v.push_back(layer_from_json(jl));
      ck.opt_states.emplace(name, std::move(opt));
    }
  }
  if (j.contains("meta")) ck.meta = j.at("meta").get<std::map<std::string, std::string>>();
  if (j.contains("meta_numbers"))
    ck.meta_numbers = j.at("meta_numbers").get<std::map<std::string, double>>();
  return ck;
}

}  // namespace drip::nnet
