#include "spikechain/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "spikechain/detail/byteio.hpp"
#include "spikechain/error.hpp"

namespace spikechain {

using nlohmann::json;

namespace {

constexpr std::string_view kCheckpointMagic = "SCK1";

const char* norm_prefix(NormKind kind) { return kind == NormKind::kBntt ? "bntt" : "bn"; }

}  // namespace

void NetworkConfig::validate() const {
  neuron.validate();
  if (classes < 1) throw Error(ErrorCode::kInvalidConfig, "classes must be >= 1");
  if (steps < 1) throw Error(ErrorCode::kInvalidConfig, "T must be >= 1");
  if (batch < 1) throw Error(ErrorCode::kInvalidConfig, "batch must be >= 1");
  if (input.channels < 1 || input.height < 1 || input.width < 1) {
    throw Error(ErrorCode::kInvalidConfig, "input geometry must be positive");
  }
  int c = input.channels, h = input.height, w = input.width;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& s = layers[l];
    if (s.out < 1) throw Error(ErrorCode::kInvalidConfig, fmt::format("layer {}: out must be >= 1", l));
    if (s.kind == LayerKind::kConv2d) {
      if (s.in != c) {
        throw Error(ErrorCode::kInvalidConfig,
                    fmt::format("layer {}: conv expects {} input channels, got {}", l, s.in, c));
      }
      if (s.stride != 1 && s.stride != 2) {
        throw Error(ErrorCode::kInvalidConfig, fmt::format("layer {}: stride must be 1 or 2", l));
      }
      if (s.recurrent) {
        throw Error(ErrorCode::kInvalidConfig, fmt::format("layer {}: recurrent needs dense", l));
      }
      h = (h - 1) / s.stride + 1;
      w = (w - 1) / s.stride + 1;
      c = s.out;
    } else {
      if (s.in != c * h * w) {
        throw Error(ErrorCode::kInvalidConfig,
                    fmt::format("layer {}: dense expects fan-in {}, got {}", l, s.in, c * h * w));
      }
      if (s.recurrent && !neuron.spiking()) {
        throw Error(ErrorCode::kInvalidConfig, fmt::format("layer {}: recurrent needs spiking", l));
      }
      c = s.out;
      h = w = 1;
    }
  }
}

std::string NetworkConfig::to_json() const {
  json doc;
  doc["input"] = {{"channels", input.channels}, {"height", input.height}, {"width", input.width}};
  json arr = json::array();
  for (const LayerSpec& s : layers) {
    json j = {{"kind", s.kind == LayerKind::kConv2d ? "conv2d" : "dense"}, {"in", s.in}, {"out", s.out}};
    if (s.kind == LayerKind::kConv2d) j["stride"] = s.stride;
    else j["recurrent"] = s.recurrent;
    arr.push_back(std::move(j));
  }
  doc["layers"] = std::move(arr);
  doc["classes"] = classes;
  doc["neuron"] = {{"model", to_string(neuron.model)},
                   {"leak", neuron.leak},
                   {"threshold", neuron.threshold},
                   {"reset", to_string(neuron.reset)},
                   {"alpha", neuron.surrogate_alpha},
                   {"surrogate_centered", neuron.surrogate_centered},
                   {"spike_function",
                    neuron.spike_function == SpikeFunction::kSoft ? "soft" : "heaviside"}};
  doc["norm"] = to_string(norm);
  doc["norm_sqrt"] = norm_sqrt;
  doc["temporal_weight"] = to_string(temporal_weight);
  doc["T"] = steps;
  doc["lr"] = lr;
  doc["momentum"] = momentum;
  doc["epochs"] = epochs;
  doc["lr_schedule"] = cosine_lr ? "cosine" : "constant";
  doc["batch"] = batch;
  doc["seed"] = seed;
  return doc.dump(2);
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
  NetworkConfig cfg;
  try {
    const json doc = json::parse(text);
    if (doc.contains("input")) {
      const json& in = doc["input"];
      cfg.input.channels = in.value("channels", cfg.input.channels);
      cfg.input.height = in.value("height", cfg.input.height);
      cfg.input.width = in.value("width", cfg.input.width);
    }
    for (const json& j : doc.at("layers")) {
      LayerSpec s;
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "conv2d" || kind == "conv") s.kind = LayerKind::kConv2d;
      else if (kind == "dense") s.kind = LayerKind::kDense;
      else throw Error(ErrorCode::kInvalidConfig, "unknown layer kind '" + kind + "'");
      s.in = j.at("in").get<int>();
      s.out = j.at("out").get<int>();
      s.stride = j.value("stride", 1);
      s.recurrent = j.value("recurrent", false);
      cfg.layers.push_back(s);
    }
    cfg.classes = doc.at("classes").get<int>();
    if (doc.contains("neuron")) {
      const json& n = doc["neuron"];
      cfg.neuron.model = neuron_model_from_string(n.value("model", "lif"));
      cfg.neuron.leak = n.value("leak", cfg.neuron.leak);
      cfg.neuron.threshold = n.value("threshold", cfg.neuron.threshold);
      cfg.neuron.reset = reset_mode_from_string(n.value("reset", "subtract"));
      cfg.neuron.surrogate_alpha = n.value("alpha", cfg.neuron.surrogate_alpha);
      cfg.neuron.surrogate_centered = n.value("surrogate_centered", true);
      const std::string fn = n.value("spike_function", "heaviside");
      if (fn != "heaviside" && fn != "soft") {
        throw Error(ErrorCode::kInvalidConfig, "unknown spike_function '" + fn + "'");
      }
      cfg.neuron.spike_function = fn == "soft" ? SpikeFunction::kSoft : SpikeFunction::kHeaviside;
    }
    cfg.norm = norm_kind_from_string(doc.value("norm", "none"));
    cfg.norm_sqrt = doc.value("norm_sqrt", true);
    cfg.temporal_weight = temporal_weight_from_string(doc.value("temporal_weight", "none"));
    cfg.steps = doc.value("T", cfg.steps);
    cfg.lr = doc.value("lr", cfg.lr);
    cfg.momentum = doc.value("momentum", cfg.momentum);
    cfg.epochs = doc.value("epochs", cfg.epochs);
    const std::string schedule = doc.value("lr_schedule", std::string("constant"));
    if (schedule != "constant" && schedule != "cosine") {
      throw Error(ErrorCode::kInvalidConfig, "lr_schedule must be constant or cosine");
    }
    cfg.cosine_lr = schedule == "cosine";
    cfg.batch = doc.value("batch", cfg.batch);
    cfg.seed = doc.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed network config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Network::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  auto kaiming = [&](std::vector<double>& w, std::size_t n, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    w.resize(n);
    for (double& v : w) v = dist(rng);
  };
  int c = config_.input.channels, h = config_.input.height, w = config_.input.width;
  for (const LayerSpec& s : config_.layers) {
    Layer layer;
    layer.spec = s;
    layer.in_c = c;
    layer.in_h = h;
    layer.in_w = w;
    if (s.kind == LayerKind::kConv2d) {
      layer.out_c = s.out;
      layer.out_h = (h - 1) / s.stride + 1;
      layer.out_w = (w - 1) / s.stride + 1;
      kaiming(layer.weight, static_cast<std::size_t>(s.out) * s.in * 9, s.in * 9);
    } else {
      layer.out_c = s.out;
      layer.out_h = layer.out_w = 1;
      kaiming(layer.weight, static_cast<std::size_t>(s.out) * s.in, s.in);
      if (s.recurrent) kaiming(layer.recurrent, static_cast<std::size_t>(s.out) * s.out, s.out);
    }
    layer.bias.assign(s.out, 0.0);
    layer.in_size = static_cast<std::size_t>(c) * h * w;
    layer.out_size = static_cast<std::size_t>(layer.out_c) * layer.out_h * layer.out_w;
    layer.g_weight.assign(layer.weight.size(), 0.0);
    layer.g_bias.assign(layer.bias.size(), 0.0);
    layer.g_recurrent.assign(layer.recurrent.size(), 0.0);
    if (config_.norm != NormKind::kNone) {
      layer.norm = NormParams(config_.norm, config_.norm == NormKind::kBntt ? config_.steps : 1,
                              layer.out_c);
      layer.norm.sqrt_denominator = config_.norm_sqrt;
      layer.g_gamma.assign(layer.norm.gamma.size(), 0.0);
      layer.g_beta.assign(layer.norm.beta.size(), 0.0);
    } else {
      layer.norm.kind = NormKind::kNone;
    }
    if (config_.temporal_weight != TemporalWeightKind::kNone) {
      layer.tw = TwParams(config_.temporal_weight, config_.steps, layer.out_c);
      layer.g_tw.assign(layer.tw.weights.size(), 0.0);
    }
    c = layer.out_c;
    h = layer.out_h;
    w = layer.out_w;
    layers_.push_back(std::move(layer));
  }
  top_size_ = static_cast<std::size_t>(c) * h * w;
  // The voting layer sums T steps, so its fan-in effectively grows by T.
  kaiming(out_weight_, static_cast<std::size_t>(config_.classes) * top_size_,
          static_cast<int>(top_size_) * config_.steps * config_.steps);
  out_bias_.assign(config_.classes, 0.0);
  g_out_weight_.assign(out_weight_.size(), 0.0);
  g_out_bias_.assign(out_bias_.size(), 0.0);
}

void Network::affine_forward(const Layer& layer, std::span<const double> x, std::span<double> out,
                             int batch) const {
  const LayerSpec& s = layer.spec;
  if (s.kind == LayerKind::kDense) {
    for (int b = 0; b < batch; ++b) {
      const double* xb = x.data() + b * layer.in_size;
      double* ob = out.data() + b * layer.out_size;
      for (int o = 0; o < s.out; ++o) {
        const double* wr = layer.weight.data() + static_cast<std::size_t>(o) * s.in;
        double acc = layer.bias[o];
        for (int i = 0; i < s.in; ++i) acc += wr[i] * xb[i];
        ob[o] = acc;
      }
    }
    return;
  }
  const int stride = s.stride;
  for (int b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * layer.in_size;
    double* ob = out.data() + b * layer.out_size;
    for (int co = 0; co < layer.out_c; ++co) {
      double* oc = ob + static_cast<std::size_t>(co) * layer.out_h * layer.out_w;
      std::fill_n(oc, layer.out_h * layer.out_w, layer.bias[co]);
      for (int ci = 0; ci < layer.in_c; ++ci) {
        const double* xc = xb + static_cast<std::size_t>(ci) * layer.in_h * layer.in_w;
        const double* k = layer.weight.data() + (static_cast<std::size_t>(co) * layer.in_c + ci) * 9;
        for (int oy = 0; oy < layer.out_h; ++oy) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= layer.in_h) continue;
            const double* xrow = xc + static_cast<std::size_t>(iy) * layer.in_w;
            double* orow = oc + static_cast<std::size_t>(oy) * layer.out_w;
            for (int kx = 0; kx < 3; ++kx) {
              const double kv = k[ky * 3 + kx];
              for (int ox = 0; ox < layer.out_w; ++ox) {
                const int ix = ox * stride + kx - 1;
                if (ix < 0 || ix >= layer.in_w) continue;
                orow[ox] += kv * xrow[ix];
              }
            }
          }
        }
      }
    }
  }
}

void Network::affine_backward(Layer& layer, std::span<const double> x, std::span<const double> g_out,
                              std::span<double> g_in, int batch) {
  const LayerSpec& s = layer.spec;
  const bool want_input = !g_in.empty();
  if (want_input) std::fill(g_in.begin(), g_in.end(), 0.0);
  if (s.kind == LayerKind::kDense) {
    for (int b = 0; b < batch; ++b) {
      const double* xb = x.data() + b * layer.in_size;
      const double* gb = g_out.data() + b * layer.out_size;
      double* gib = want_input ? g_in.data() + b * layer.in_size : nullptr;
      for (int o = 0; o < s.out; ++o) {
        const double g = gb[o];
        if (g == 0.0) continue;
        layer.g_bias[o] += g;
        double* gw = layer.g_weight.data() + static_cast<std::size_t>(o) * s.in;
        const double* wr = layer.weight.data() + static_cast<std::size_t>(o) * s.in;
        for (int i = 0; i < s.in; ++i) gw[i] += g * xb[i];
        if (gib) {
          for (int i = 0; i < s.in; ++i) gib[i] += g * wr[i];
        }
      }
    }
    return;
  }
  const int stride = s.stride;
  for (int b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * layer.in_size;
    const double* gb = g_out.data() + b * layer.out_size;
    double* gib = want_input ? g_in.data() + b * layer.in_size : nullptr;
    for (int co = 0; co < layer.out_c; ++co) {
      const double* gc = gb + static_cast<std::size_t>(co) * layer.out_h * layer.out_w;
      double bias_sum = 0.0;
      for (int i = 0; i < layer.out_h * layer.out_w; ++i) bias_sum += gc[i];
      layer.g_bias[co] += bias_sum;
      for (int ci = 0; ci < layer.in_c; ++ci) {
        const double* xc = xb + static_cast<std::size_t>(ci) * layer.in_h * layer.in_w;
        double* gic = gib ? gib + static_cast<std::size_t>(ci) * layer.in_h * layer.in_w : nullptr;
        const std::size_t koff = (static_cast<std::size_t>(co) * layer.in_c + ci) * 9;
        const double* k = layer.weight.data() + koff;
        double* gk = layer.g_weight.data() + koff;
        for (int oy = 0; oy < layer.out_h; ++oy) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= layer.in_h) continue;
            const double* xrow = xc + static_cast<std::size_t>(iy) * layer.in_w;
            const double* grow = gc + static_cast<std::size_t>(oy) * layer.out_w;
            double* girow = gic ? gic + static_cast<std::size_t>(iy) * layer.in_w : nullptr;
            for (int kx = 0; kx < 3; ++kx) {
              const double kv = k[ky * 3 + kx];
              double acc = 0.0;
              for (int ox = 0; ox < layer.out_w; ++ox) {
                const int ix = ox * stride + kx - 1;
                if (ix < 0 || ix >= layer.in_w) continue;
                acc += grow[ox] * xrow[ix];
                if (girow) girow[ix] += grow[ox] * kv;
              }
              gk[ky * 3 + kx] += acc;
            }
          }
        }
      }
    }
  }
}

std::vector<double> Network::forward(std::span<const FrameSequence* const> batch_frames,
                                     ForwardMode mode, Trace* trace) {
  const int batch = static_cast<int>(batch_frames.size());
  if (batch == 0) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  const int steps = static_cast<int>(batch_frames.front()->frames());
  for (const FrameSequence* f : batch_frames) {
    if (static_cast<int>(f->channels()) != config_.input.channels ||
        static_cast<int>(f->height()) != config_.input.height ||
        static_cast<int>(f->width()) != config_.input.width) {
      throw Error(ErrorCode::kGeometryMismatch,
                  fmt::format("frames are {}x{}x{}, network expects {}x{}x{}", f->channels(),
                              f->height(), f->width(), config_.input.channels,
                              config_.input.height, config_.input.width));
    }
    if (static_cast<int>(f->frames()) != steps) {
      throw Error(ErrorCode::kGeometryMismatch, "frame sequences in a batch differ in length");
    }
  }
  const NormMode norm_mode = mode == ForwardMode::kTrain         ? NormMode::kTrain
                             : mode == ForwardMode::kTrainFrozen ? NormMode::kTrainFrozen
                                                                 : NormMode::kInfer;
  const NeuronConfig& ncfg = config_.neuron;
  const bool spiking = ncfg.spiking();
  const std::size_t in_size = static_cast<std::size_t>(config_.input.channels) *
                              config_.input.height * config_.input.width;
  const int rows = steps * batch;  // (t, b) pairs

  Trace local;
  Trace& tr = trace ? *trace : local;
  tr.batch = batch;
  tr.steps = steps;
  tr.valid = false;
  tr.layers.assign(layers_.size(), {});

  std::vector<double> x(static_cast<std::size_t>(rows) * in_size);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      const float* f = batch_frames[b]->frame(static_cast<std::uint32_t>(t));
      std::copy(f, f + in_size, x.begin() + (static_cast<std::size_t>(t) * batch + b) * in_size);
    }
  }

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    auto& ls = tr.layers[l];
    const std::vector<double>& input = l == 0 ? (ls.input = std::move(x)) : tr.layers[l - 1].output;
    const std::size_t step = static_cast<std::size_t>(batch) * layer.out_size;
    const std::size_t size = step * steps;
    const int spatial = layer.out_h * layer.out_w;
    const bool has_norm = layer.norm.kind != NormKind::kNone;
    const bool has_tw = layer.tw.kind != TemporalWeightKind::kNone;
    const bool pooled = layer.norm.kind == NormKind::kBn && !layer.spec.recurrent;

    std::vector<double> a(size);
    affine_forward(layer, input, a, rows);
    ls.normed.resize(size);
    ls.current.resize(size);
    ls.output.resize(size);
    if (spiking) ls.pre_reset.resize(size);
    ls.norm.assign(has_norm ? (pooled ? 1 : steps) : 0, {});
    if (pooled) bntt_forward(layer.norm, a, ls.normed, rows, spatial, 0, norm_mode, &ls.norm[0]);

    std::vector<double> membrane(step, 0.0);
    for (int t = 0; t < steps; ++t) {
      const std::size_t off = static_cast<std::size_t>(t) * step;
      std::span<double> a_t(a.data() + off, step);
      std::span<double> n_t(ls.normed.data() + off, step);
      std::span<double> c_t(ls.current.data() + off, step);
      std::span<double> o_t(ls.output.data() + off, step);
      if (layer.spec.recurrent && t > 0) {
        const int units = layer.spec.out;
        const double* prev = ls.output.data() + off - step;
        for (int b = 0; b < batch; ++b) {
          for (int i = 0; i < units; ++i) {
            const double* wr = layer.recurrent.data() + static_cast<std::size_t>(i) * units;
            double acc = 0.0;
            for (int j = 0; j < units; ++j) acc += wr[j] * prev[b * units + j];
            a_t[b * units + i] += acc;
          }
        }
      }
      if (!has_norm) {
        std::copy(a_t.begin(), a_t.end(), n_t.begin());
      } else if (!pooled) {
        bntt_forward(layer.norm, a_t, n_t, batch, spatial, t, norm_mode, &ls.norm[t]);
      }
      if (has_tw) {
        tw_apply(layer.tw, n_t, c_t, batch, layer.out_c, spatial, t);
      } else {
        std::copy(n_t.begin(), n_t.end(), c_t.begin());
      }
      if (spiking) {
        neuron_step(membrane, c_t, o_t, ncfg, std::span<double>(ls.pre_reset.data() + off, step));
      } else {
        for (std::size_t i = 0; i < step; ++i) o_t[i] = c_t[i] > 0.0 ? c_t[i] : 0.0;
      }
    }
  }

  const std::vector<double>& top = layers_.empty() ? x : tr.layers.back().output;
  // Voting layer: no leak, no threshold, accumulated over t.
  std::vector<double> scores(static_cast<std::size_t>(batch) * config_.classes, 0.0);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      const double* xb = top.data() + (static_cast<std::size_t>(t) * batch + b) * top_size_;
      for (int k = 0; k < config_.classes; ++k) {
        const double* wr = out_weight_.data() + static_cast<std::size_t>(k) * top_size_;
        double acc = out_bias_[k];
        for (std::size_t i = 0; i < top_size_; ++i) acc += wr[i] * xb[i];
        scores[b * config_.classes + k] += acc;
      }
    }
  }
  if (layers_.empty()) tr.top = x;
  tr.valid = true;
  return scores;
}

void Network::backward(const Trace& trace, std::span<const double> grad_scores) {
  if (!trace.valid) throw Error(ErrorCode::kMissingTrace, "missing trace");
  const int batch = trace.batch;
  const int steps = trace.steps;
  const int rows = batch * steps;
  const int classes = config_.classes;
  if (grad_scores.size() != static_cast<std::size_t>(batch) * classes) {
    throw Error(ErrorCode::kInvalidArgument, "score gradient has wrong size");
  }
  const NeuronConfig& ncfg = config_.neuron;
  const bool spiking = ncfg.spiking();
  const double leak = ncfg.effective_leak();
  const bool exact_zero_reset = ncfg.spike_function == SpikeFunction::kSoft;
  const std::vector<double>& top = layers_.empty() ? trace.top : trace.layers.back().output;

  // Voting layer: the same score gradient reaches every step.
  std::vector<double> g_top_step(static_cast<std::size_t>(batch) * top_size_, 0.0);
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < classes; ++k) {
      const double g = grad_scores[b * classes + k];
      g_out_bias_[k] += g * steps;
      const double* wr = out_weight_.data() + static_cast<std::size_t>(k) * top_size_;
      double* gt = g_top_step.data() + b * top_size_;
      for (std::size_t i = 0; i < top_size_; ++i) gt[i] += g * wr[i];
    }
  }
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      const double* xb = top.data() + (static_cast<std::size_t>(t) * batch + b) * top_size_;
      for (int k = 0; k < classes; ++k) {
        const double g = grad_scores[b * classes + k];
        if (g == 0.0) continue;
        double* gw = g_out_weight_.data() + static_cast<std::size_t>(k) * top_size_;
        for (std::size_t i = 0; i < top_size_; ++i) gw[i] += g * xb[i];
      }
    }
  }
  if (layers_.empty()) return;

  std::vector<double> g_output;
  g_output.reserve(g_top_step.size() * steps);
  for (int t = 0; t < steps; ++t) g_output.insert(g_output.end(), g_top_step.begin(), g_top_step.end());

  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    Layer& layer = layers_[l];
    const auto& ls = trace.layers[l];
    const std::vector<double>& input = l == 0 ? ls.input : trace.layers[l - 1].output;
    const std::size_t step = static_cast<std::size_t>(batch) * layer.out_size;
    const std::size_t size = step * steps;
    const int spatial = layer.out_h * layer.out_w;
    const bool has_norm = layer.norm.kind != NormKind::kNone;
    const bool has_tw = layer.tw.kind != TemporalWeightKind::kNone;
    const bool pooled = layer.norm.kind == NormKind::kBn && !layer.spec.recurrent;
    const int units = layer.spec.out;

    std::vector<double> g_n(size), g_a(size), g_c(step), g_carry(step, 0.0), g_rec(step, 0.0);
    for (int t = steps - 1; t >= 0; --t) {
      const std::size_t off = static_cast<std::size_t>(t) * step;
      const double* g_o = g_output.data() + off;
      if (spiking) {
        const double* pre = ls.pre_reset.data() + off;
        const double* out = ls.output.data() + off;
        for (std::size_t i = 0; i < step; ++i) {
          const double go = g_o[i] + g_rec[i];
          const double sg = surrogate_derivative(pre[i], ncfg);
          double dreset;
          if (ncfg.reset == ResetMode::kSubtract) {
            dreset = 1.0 - ncfg.threshold * sg;
          } else if (exact_zero_reset) {
            dreset = (1.0 - out[i]) - pre[i] * sg;
          } else {
            dreset = 1.0 - out[i];  // stop-gradient through the reset product
          }
          const double gv = go * sg + g_carry[i] * dreset;
          g_c[i] = gv;
          g_carry[i] = leak * gv;
        }
      } else {
        const double* cur = ls.current.data() + off;
        for (std::size_t i = 0; i < step; ++i) g_c[i] = cur[i] > 0.0 ? g_o[i] : 0.0;
      }
      std::span<double> g_n_t(g_n.data() + off, step);
      if (has_tw) {
        tw_backward(layer.tw, std::span<const double>(ls.normed.data() + off, step), g_c, g_n_t,
                    layer.g_tw, batch, layer.out_c, spatial, t);
      } else {
        std::copy(g_c.begin(), g_c.end(), g_n_t.begin());
      }
      if (!layer.spec.recurrent) continue;
      // Recurrent layers need g_a_t now to feed step t-1.
      std::span<double> g_a_t(g_a.data() + off, step);
      if (has_norm) {
        bntt_backward(layer.norm, ls.norm[t], g_n_t, g_a_t, layer.g_gamma, layer.g_beta, batch, spatial);
      } else {
        std::copy(g_n_t.begin(), g_n_t.end(), g_a_t.begin());
      }
      std::fill(g_rec.begin(), g_rec.end(), 0.0);
      if (t == 0) continue;
      const double* prev = ls.output.data() + off - step;
      for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < units; ++i) {
          const double g = g_a_t[b * units + i];
          if (g == 0.0) continue;
          double* gw = layer.g_recurrent.data() + static_cast<std::size_t>(i) * units;
          const double* wr = layer.recurrent.data() + static_cast<std::size_t>(i) * units;
          for (int j = 0; j < units; ++j) {
            gw[j] += g * prev[b * units + j];
            g_rec[b * units + j] += g * wr[j];
          }
        }
      }
    }
    if (!layer.spec.recurrent) {
      if (pooled) {
        bntt_backward(layer.norm, ls.norm[0], g_n, g_a, layer.g_gamma, layer.g_beta, rows, spatial);
      } else if (has_norm) {
        for (int t = 0; t < steps; ++t) {
          const std::size_t off = static_cast<std::size_t>(t) * step;
          bntt_backward(layer.norm, ls.norm[t], std::span<const double>(g_n.data() + off, step),
                        std::span<double>(g_a.data() + off, step), layer.g_gamma, layer.g_beta,
                        batch, spatial);
        }
      } else {
        g_a.swap(g_n);
      }
    }
    std::vector<double> g_input(l > 0 ? input.size() : 0);
    affine_backward(layer, input, g_a, g_input, rows);
    if (l > 0) g_output = std::move(g_input);
  }
}

void Network::zero_grad() {
  for (Layer& layer : layers_) {
    std::fill(layer.g_weight.begin(), layer.g_weight.end(), 0.0);
    std::fill(layer.g_bias.begin(), layer.g_bias.end(), 0.0);
    std::fill(layer.g_recurrent.begin(), layer.g_recurrent.end(), 0.0);
    std::fill(layer.g_gamma.begin(), layer.g_gamma.end(), 0.0);
    std::fill(layer.g_beta.begin(), layer.g_beta.end(), 0.0);
    std::fill(layer.g_tw.begin(), layer.g_tw.end(), 0.0);
  }
  std::fill(g_out_weight_.begin(), g_out_weight_.end(), 0.0);
  std::fill(g_out_bias_.begin(), g_out_bias_.end(), 0.0);
}

std::vector<ParamView> Network::parameters() {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    const LayerSpec& s = layer.spec;
    const std::vector<int> wshape = s.kind == LayerKind::kConv2d
                                        ? std::vector<int>{s.out, s.in, 3, 3}
                                        : std::vector<int>{s.out, s.in};
    out.push_back({fmt::format("layer{}.weight", l), wshape, &layer.weight, &layer.g_weight});
    out.push_back({fmt::format("layer{}.bias", l), {s.out}, &layer.bias, &layer.g_bias});
    if (s.recurrent) {
      out.push_back({fmt::format("layer{}.recurrent", l), {s.out, s.out}, &layer.recurrent,
                     &layer.g_recurrent});
    }
    if (layer.norm.kind != NormKind::kNone) {
      const char* p = norm_prefix(layer.norm.kind);
      const std::vector<int> nshape{layer.norm.slices, layer.norm.channels};
      out.push_back({fmt::format("{}.gamma.layer{}", p, l), nshape, &layer.norm.gamma, &layer.g_gamma});
      out.push_back({fmt::format("{}.beta.layer{}", p, l), nshape, &layer.norm.beta, &layer.g_beta});
      out.push_back({fmt::format("{}.mean.layer{}", p, l), nshape, &layer.norm.running_mean, nullptr});
      out.push_back({fmt::format("{}.var.layer{}", p, l), nshape, &layer.norm.running_var, nullptr});
    }
    if (layer.tw.kind != TemporalWeightKind::kNone) {
      const std::vector<int> tshape = layer.tw.kind == TemporalWeightKind::kTw
                                          ? std::vector<int>{layer.tw.slices}
                                          : std::vector<int>{layer.tw.slices, layer.tw.channels};
      out.push_back({fmt::format("tw.layer{}", l), tshape, &layer.tw.weights, &layer.g_tw});
    }
  }
  out.push_back({"output.weight", {config_.classes, static_cast<int>(top_size_)}, &out_weight_,
                 &g_out_weight_});
  out.push_back({"output.bias", {config_.classes}, &out_bias_, &g_out_bias_});
  return out;
}

std::vector<ParamView> Network::parameters() const {
  return const_cast<Network*>(this)->parameters();
}

double cross_entropy(std::span<const double> scores, std::span<const int> labels, int classes,
                     std::span<double> grad_scores) {
  const std::size_t batch = labels.size();
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* s = scores.data() + b * classes;
    const double peak = *std::max_element(s, s + classes);
    double z = 0.0;
    for (int k = 0; k < classes; ++k) z += std::exp(s[k] - peak);
    const double log_z = std::log(z) + peak;
    loss += log_z - s[labels[b]];
    if (!grad_scores.empty()) {
      for (int k = 0; k < classes; ++k) {
        const double p = std::exp(s[k] - log_z);
        grad_scores[b * classes + k] = (p - (k == labels[b] ? 1.0 : 0.0)) / static_cast<double>(batch);
      }
    }
  }
  return loss / static_cast<double>(batch);
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw Error(ErrorCode::kInvalidArgument, "parameter/gradient shape mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

void SgdMomentum::step(std::span<const ParamView> params) {
  for (const ParamView& p : params) {
    if (!p.trainable()) continue;
    auto& v = velocity_[p.name];
    if (v.size() != p.value->size()) v.assign(p.value->size(), 0.0);
    sgd_momentum_step(*p.value, *p.grad, v, lr_, momentum_);
  }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  const std::string cfg = net.config().to_json();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.put_bytes(cfg);
  const auto params = net.parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const ParamView& p : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.put_bytes(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : *p.value) w.put<double>(v);
  }
  detail::write_file(path, w.bytes());
}

Network load_checkpoint(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader r(data);
  if (r.remaining() < 4 || r.get_bytes(4) != kCheckpointMagic) {
    throw Error(ErrorCode::kBadMagic, "bad magic");
  }
  const auto cfg_len = r.get<std::uint32_t>();
  Network net(NetworkConfig::from_json(std::string(r.get_bytes(cfg_len))));
  auto params = net.parameters();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name(r.get_bytes(name_len));
    const auto rank = r.get<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) n *= r.get<std::uint32_t>();
    auto it = std::find_if(params.begin(), params.end(), [&](const ParamView& p) { return p.name == name; });
    if (it == params.end()) throw Error(ErrorCode::kInvalidConfig, "unexpected tensor '" + name + "'");
    if (it->value->size() != n) throw Error(ErrorCode::kInvalidConfig, "tensor '" + name + "' has wrong size");
    r.require(n * 8);
    for (double& v : *it->value) v = r.get<double>();
  }
  return net;
}

}  // namespace spikechain
