#include "embryolab/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "embryolab/parallel.hpp"
#include "embryolab/rng.hpp"

namespace embryolab {

Tensor preprocess(const RgbImage& image, const ModelConfig& config) {
  if (image.width != config.input_resolution || image.height != config.input_resolution)
    throw LearnerError("expected a " + std::to_string(config.input_resolution) + "x" +
                       std::to_string(config.input_resolution) + " image, got " + std::to_string(image.width) + "x" +
                       std::to_string(image.height));
  if (config.internal_resolution <= 0 || config.input_resolution % config.internal_resolution != 0)
    throw LearnerError("internal resolution must divide the input resolution");
  if (config.input_channels != 3) throw LearnerError("only RGB input is supported");
  const int factor = config.input_resolution / config.internal_resolution;
  const int n = config.internal_resolution;
  Tensor t(3, n, n);
  const double scale = 1.0 / (255.0 * factor * factor);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        int sum = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) sum += image.at(x * factor + dx, y * factor + dy)[c];
        t.data[(static_cast<std::size_t>(c) * n + y) * n + x] = sum * scale;
      }
  return t;
}

std::array<double, kClasses> softmax(const Scores& logits) noexcept {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::array<double, kClasses> p{};
  double sum = 0.0;
  for (int k = 0; k < kClasses; ++k) sum += p[k] = std::exp(logits[k] - m);
  for (auto& v : p) v /= sum;
  return p;
}

double cross_entropy(const Scores& logits, int label) {
  if (label < 0 || label >= kClasses) throw LearnerError("label " + std::to_string(label) + " is out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (double z : logits) lse += std::exp(z - m);
  return m + std::log(lse) - logits[label];
}

ConvNet::ConvNet(ModelConfig config) : config_(std::move(config)) {
  if (config_.blocks.empty()) throw LearnerError("architecture needs at least one convolution block");
  int c = config_.input_channels, h = config_.internal_resolution, w = config_.internal_resolution;
  std::size_t offset = 0;
  for (const auto& b : config_.blocks) {
    if (b.channels <= 0 || b.stride <= 0) throw LearnerError("invalid convolution block");
    Layer l{c, b.channels, b.stride, h, w, (h - 1) / b.stride + 1, (w - 1) / b.stride + 1, offset, 0};
    offset += static_cast<std::size_t>(l.out_channels) * l.in_channels * 9;
    l.bias_offset = offset;
    offset += static_cast<std::size_t>(l.out_channels);
    layers_.push_back(l);
    c = l.out_channels;
    h = l.out_h;
    w = l.out_w;
  }
  features_ = c;
  head_offset_ = offset;
  offset += static_cast<std::size_t>(kClasses) * features_;
  head_bias_offset_ = offset;
  offset += kClasses;
  params_.assign(offset, 0.0);

  Rng rng(derive_key(config_.init_seed, {label_hash("init")}));
  const double gain = config_.nonlinearity == Nonlinearity::Relu ? 6.0 : 3.0;
  for (const auto& l : layers_) {
    const double bound = std::sqrt(gain / (l.in_channels * 9.0));
    for (std::size_t i = l.weight_offset; i < l.bias_offset; ++i) params_[i] = rng.uniform(-bound, bound);
  }
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(features_));
  for (std::size_t i = head_offset_; i < head_bias_offset_; ++i) params_[i] = rng.uniform(-head_bound, head_bound);
}

std::uint64_t ConvNet::digest() const noexcept { return digest_of(std::span<const double>(params_)); }

ConvNet::Trace ConvNet::run(const Tensor& input) const {
  if (input.channels != config_.input_channels || input.height != config_.internal_resolution ||
      input.width != config_.internal_resolution)
    throw LearnerError("input tensor does not match the model configuration");
  // ReLU and max pooling would silently swallow a NaN, so check before the first layer.
  for (double v : input.data)
    if (!std::isfinite(v)) throw LearnerError("non-finite value in the input tensor");
  Trace trace;
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(input);
  if (config_.input_center != 0.0)
    for (auto& v : trace.activations.back().data) v -= config_.input_center;
  const bool relu = config_.nonlinearity == Nonlinearity::Relu;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const Tensor& in = trace.activations.back();
    Tensor out(l.out_channels, l.out_h, l.out_w);
    for (int o = 0; o < l.out_channels; ++o) {
      double* dst = &out.data[static_cast<std::size_t>(o) * l.out_h * l.out_w];
      std::fill(dst, dst + l.out_h * l.out_w, params_[l.bias_offset + o]);
      for (int i = 0; i < l.in_channels; ++i) {
        const double* src = &in.data[static_cast<std::size_t>(i) * l.in_h * l.in_w];
        const double* wk = &params_[l.weight_offset + (static_cast<std::size_t>(o) * l.in_channels + i) * 9];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = wk[ky * 3 + kx];
            for (int y = 0; y < l.out_h; ++y) {
              const int iy = y * l.stride + ky - 1;
              if (iy < 0 || iy >= l.in_h) continue;
              const double* row = src + static_cast<std::size_t>(iy) * l.in_w;
              double* drow = dst + static_cast<std::size_t>(y) * l.out_w;
              for (int x = 0; x < l.out_w; ++x) {
                const int ix = x * l.stride + kx - 1;
                if (ix < 0 || ix >= l.in_w) continue;
                drow[x] += wv * row[ix];
              }
            }
          }
      }
    }
    for (auto& v : out.data) {
      v = relu ? std::max(0.0, v) : std::tanh(v);
      if (!std::isfinite(v)) throw LearnerError("non-finite activation in layer " + std::to_string(li + 1));
    }
    trace.activations.push_back(std::move(out));
  }
  const Tensor& last = trace.activations.back();
  const std::size_t plane = static_cast<std::size_t>(last.height) * last.width;
  trace.pooled.assign(static_cast<std::size_t>(features_), 0.0);
  trace.argmax.assign(static_cast<std::size_t>(features_), 0);
  for (int c = 0; c < features_; ++c) {
    const double* p = &last.data[c * plane];
    if (config_.pooling == Pooling::Average) {
      trace.pooled[c] = std::accumulate(p, p + plane, 0.0) / static_cast<double>(plane);
    } else {
      const auto best = static_cast<std::size_t>(std::max_element(p, p + plane) - p);
      trace.argmax[c] = best;
      trace.pooled[c] = p[best];
    }
  }
  for (int k = 0; k < kClasses; ++k) {
    double z = params_[head_bias_offset_ + k];
    for (int c = 0; c < features_; ++c) z += params_[head_offset_ + static_cast<std::size_t>(k) * features_ + c] * trace.pooled[c];
    if (!std::isfinite(z)) throw LearnerError("non-finite activation in layer " + std::to_string(layers_.size() + 1) + " (head)");
    trace.logits[k] = z;
  }
  return trace;
}

std::vector<Scores> ConvNet::forward(std::span<const Tensor> batch) const {
  if (batch.empty()) throw LearnerError("forward needs a batch of at least one image");
  std::vector<Scores> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(run(t).logits);
  return out;
}

LossAndGrads ConvNet::loss_and_grads(std::span<const Tensor> batch, std::span<const int> labels) const {
  if (batch.empty() || batch.size() != labels.size()) throw LearnerError("batch and label counts differ");
  for (int y : labels)
    if (y < 0 || y >= kClasses) throw LearnerError("label " + std::to_string(y) + " is out of range");

  LossAndGrads out;
  out.gradients.assign(params_.size(), 0.0);
  auto& g = out.gradients;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const bool relu = config_.nonlinearity == Nonlinearity::Relu;

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Trace trace = run(batch[s]);
    const auto p = softmax(trace.logits);
    const int y = labels[s];
    out.loss += cross_entropy(trace.logits, y) * inv_batch;

    std::array<double, kClasses> dlogits{};
    for (int k = 0; k < kClasses; ++k) dlogits[k] = (p[k] - (k == y ? 1.0 : 0.0)) * inv_batch;

    std::vector<double> dpooled(static_cast<std::size_t>(features_), 0.0);
    for (int k = 0; k < kClasses; ++k) {
      g[head_bias_offset_ + k] += dlogits[k];
      for (int c = 0; c < features_; ++c) {
        const std::size_t wi = head_offset_ + static_cast<std::size_t>(k) * features_ + c;
        g[wi] += dlogits[k] * trace.pooled[c];
        dpooled[c] += dlogits[k] * params_[wi];
      }
    }

    const Tensor& last = trace.activations.back();
    const std::size_t plane = static_cast<std::size_t>(last.height) * last.width;
    Tensor grad(last.channels, last.height, last.width);
    for (int c = 0; c < features_; ++c) {
      if (config_.pooling == Pooling::Average)
        std::fill_n(&grad.data[c * plane], plane, dpooled[c] / static_cast<double>(plane));
      else
        grad.data[c * plane + trace.argmax[c]] = dpooled[c];
    }

    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      const Tensor& in = trace.activations[li];
      const Tensor& act = trace.activations[li + 1];
      // Through the nonlinearity.
      for (std::size_t i = 0; i < grad.data.size(); ++i)
        grad.data[i] *= relu ? (act.data[i] > 0.0 ? 1.0 : 0.0) : 1.0 - act.data[i] * act.data[i];
      Tensor grad_in;
      if (li > 0) grad_in = Tensor(l.in_channels, l.in_h, l.in_w);
      for (int o = 0; o < l.out_channels; ++o) {
        const double* dz = &grad.data[static_cast<std::size_t>(o) * l.out_h * l.out_w];
        g[l.bias_offset + o] += std::accumulate(dz, dz + l.out_h * l.out_w, 0.0);
        for (int i = 0; i < l.in_channels; ++i) {
          const double* src = &in.data[static_cast<std::size_t>(i) * l.in_h * l.in_w];
          const std::size_t wbase = l.weight_offset + (static_cast<std::size_t>(o) * l.in_channels + i) * 9;
          double* gin = li > 0 ? &grad_in.data[static_cast<std::size_t>(i) * l.in_h * l.in_w] : nullptr;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const double wv = params_[wbase + ky * 3 + kx];
              double acc = 0.0;
              for (int yy = 0; yy < l.out_h; ++yy) {
                const int iy = yy * l.stride + ky - 1;
                if (iy < 0 || iy >= l.in_h) continue;
                const double* row = src + static_cast<std::size_t>(iy) * l.in_w;
                const double* drow = dz + static_cast<std::size_t>(yy) * l.out_w;
                double* grow = gin ? gin + static_cast<std::size_t>(iy) * l.in_w : nullptr;
                for (int x = 0; x < l.out_w; ++x) {
                  const int ix = x * l.stride + kx - 1;
                  if (ix < 0 || ix >= l.in_w) continue;
                  acc += drow[x] * row[ix];
                  if (grow) grow[ix] += wv * drow[x];
                }
              }
              g[wbase + ky * 3 + kx] += acc;
            }
        }
      }
      if (li > 0) grad = std::move(grad_in);
    }
  }
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter and gradient sizes differ");
  if (state.first_moment.empty() && state.second_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state does not match the parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    params[i] -= state.learning_rate * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
  }
}

namespace {

SessionLog train_one_run(const ModelConfig& base, const DatasetManifest& manifest, const ImageTable& images,
                         const SessionOptions& opt, int run) {
  ModelConfig cfg = base;
  cfg.init_seed = derive_key(base.init_seed, {label_hash("run"), static_cast<std::uint64_t>(run)});
  ConvNet net(cfg);
  OptimizerState state;
  state.learning_rate = opt.learning_rate;

  auto tensor_of = [&](const std::string& id) -> const Tensor& {
    auto it = images.find(id);
    if (it == images.end()) throw LearnerError("no image data for '" + id + "'");
    return it->second;
  };

  SessionLog log{opt.observer_id, run, {}, {}};
  auto emit = [&](Phase phase, int epoch, int index, const ImageRef& ref, const Scores& logits) {
    const auto p = softmax(logits);
    const int response = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    const int truth = category_index(ref.category);
    log.records.push_back(TrialRecord{opt.observer_id, run, phase, epoch, index, ref.image_id, truth, response, p,
                                      response == truth, std::nullopt, std::nullopt, nullptr});
  };

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::vector<ImageRef> order = manifest.training_set;
    Rng shuffle(derive_key(opt.shuffle_seed, {label_hash("shuffle"), static_cast<std::uint64_t>(run),
                                              static_cast<std::uint64_t>(epoch)}));
    shuffle.shuffle(order);
    int index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      std::vector<Tensor> batch;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(tensor_of(order[i].image_id));
        labels.push_back(category_index(order[i].category));
      }
      const auto logits = net.forward(batch);
      for (std::size_t i = start; i < end; ++i) emit(Phase::Train, epoch, index++, order[i], logits[i - start]);
      const auto lg = net.loss_and_grads(batch, labels);
      adam_step(net.parameters(), lg.gradients, state);
    }

    const ConvNet& frozen = net;
    const std::uint64_t before = frozen.digest();
    const auto& test_set = manifest.test_sets[static_cast<std::size_t>(epoch - 1)];
    index = 0;
    for (std::size_t start = 0; start < test_set.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(test_set.size(), start + static_cast<std::size_t>(opt.batch_size));
      std::vector<Tensor> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(tensor_of(test_set[i].ref.image_id));
      const auto logits = frozen.forward(batch);
      for (std::size_t i = start; i < end; ++i) emit(Phase::Test, epoch, index++, test_set[i].ref, logits[i - start]);
    }
    const std::uint64_t after = frozen.digest();
    log.evaluation_audits.push_back({epoch, before, after});
    if (before != after) throw LearnerError("parameters changed during evaluation of epoch " + std::to_string(epoch));
  }
  return log;
}

}  // namespace

std::vector<SessionLog> run_session(const ModelConfig& config, const DatasetManifest& manifest,
                                    const ImageTable& images, const SessionOptions& options) {
  if (options.runs < 1 || options.epochs < 1 || options.batch_size < 1)
    throw LearnerError("runs, epochs and batch size must be positive");
  if (static_cast<std::size_t>(options.epochs) > manifest.test_sets.size())
    throw LearnerError("protocol asks for " + std::to_string(options.epochs) + " epochs but the manifest has " +
                       std::to_string(manifest.test_sets.size()) + " test sets");
  if (manifest.training_set.empty()) throw LearnerError("manifest has an empty training set");
  std::vector<SessionLog> logs(static_cast<std::size_t>(options.runs));
  parallel_for(
      logs.size(), [&](std::size_t r) { logs[r] = train_one_run(config, manifest, images, options, static_cast<int>(r)); },
      options.threads);
  return logs;
}

}  // namespace embryolab
