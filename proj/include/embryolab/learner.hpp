#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "embryolab/dataset.hpp"
#include "embryolab/image.hpp"
#include "embryolab/trial_log.hpp"

namespace embryolab {

inline constexpr int kClasses = 3;

enum class Nonlinearity : std::uint8_t { Relu, Tanh };
enum class Pooling : std::uint8_t { Average, Max };

/// 3x3 convolution (padding 1) followed by the nonlinearity.
struct ConvBlock {
  int channels = 16;
  int stride = 2;
};

struct ModelConfig {
  int input_resolution = kStimulusSize;
  /// Images are box-downsampled to this size before the first layer.
  int internal_resolution = 56;
  int input_channels = 3;
  std::vector<ConvBlock> blocks = {{16, 2}, {32, 2}, {64, 2}};
  Nonlinearity nonlinearity = Nonlinearity::Relu;
  Pooling pooling = Pooling::Max;
  /// Subtracted from every input value inside the first layer; 0.5 maps the mid-gray
  /// background to zero.
  double input_center = 0.5;
  std::uint64_t init_seed = 1;
};

/// Channel-major (C, H, W) activations.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}
  std::size_t size() const noexcept { return data.size(); }
};

/// Box-downsamples an RGB stimulus to the model's internal resolution, scaled to [0, 1].
Tensor preprocess(const RgbImage& image, const ModelConfig& config);

class LearnerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Scores = std::array<double, kClasses>;

std::array<double, kClasses> softmax(const Scores& logits) noexcept;
/// -log softmax(logits)[label], computed with the max shift.
double cross_entropy(const Scores& logits, int label);

struct LossAndGrads {
  double loss = 0.0;
  std::vector<double> gradients;  // same layout as ConvNet::parameters()
};

/// Small convolutional classifier: conv blocks, global pooling, linear head.
/// Parameters live in one flat buffer: per block weights (out, in, 3, 3) then biases,
/// then head weights (3, C) and head biases.
class ConvNet {
 public:
  explicit ConvNet(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  /// Offset of the linear head's weights inside parameters().
  std::size_t head_offset() const noexcept { return head_offset_; }
  std::uint64_t digest() const noexcept;

  /// Logits per image. Throws LearnerError naming the layer on non-finite activations.
  std::vector<Scores> forward(std::span<const Tensor> batch) const;

  /// Mean cross-entropy over the batch and its gradient. Labels must be in {0, 1, 2}.
  LossAndGrads loss_and_grads(std::span<const Tensor> batch, std::span<const int> labels) const;

 private:
  struct Layer {
    int in_channels, out_channels, stride;
    int in_h, in_w, out_h, out_w;
    std::size_t weight_offset, bias_offset;
  };
  struct Trace {
    std::vector<Tensor> activations;  // input, then each block's output
    std::vector<double> pooled;
    std::vector<std::size_t> argmax;  // per channel, for max pooling
    Scores logits;
  };
  Trace run(const Tensor& input) const;

  ModelConfig config_;
  std::vector<Layer> layers_;
  std::size_t head_offset_ = 0;
  std::size_t head_bias_offset_ = 0;
  int features_ = 0;
  std::vector<double> params_;
};

/// Adam state; the defaults are the optimizer regime used for every learner run.
struct OptimizerState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

/// Bias-corrected Adam update. Empty moment buffers are sized on first use.
void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state);

struct SessionOptions {
  std::string observer_id = "convnet";
  int runs = 20;
  int epochs = kEpochs;
  int batch_size = 4;
  double learning_rate = 0.001;
  std::uint64_t shuffle_seed = 1;
  unsigned threads = 0;
};

using ImageTable = std::map<std::string, Tensor>;

/// Builds the tensors for every training and test image of the manifest through `load`.
template <typename Loader>
ImageTable build_image_table(const DatasetManifest& manifest, const ModelConfig& config, Loader&& load) {
  ImageTable table;
  auto add = [&](const ImageRef& ref) {
    if (!table.contains(ref.image_id)) table.emplace(ref.image_id, preprocess(load(ref), config));
  };
  for (const auto& r : manifest.training_set) add(r);
  for (const auto& set : manifest.test_sets)
    for (const auto& t : set) add(t.ref);
  return table;
}

/// One log per run. Per epoch: shuffled training in mini-batches (predictions logged
/// from the forward pass before each update), then the epoch's test set with
/// parameters frozen. Runs execute in parallel; results are ordered by run index.
std::vector<SessionLog> run_session(const ModelConfig& config, const DatasetManifest& manifest,
                                    const ImageTable& images, const SessionOptions& options = {});

}  // namespace embryolab
