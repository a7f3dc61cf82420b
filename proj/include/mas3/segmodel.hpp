#pragma once

// Desk-scale segmentation network phi = h o g o f applied per pixel:
//   f: 3x3 patch of the input (edge clamped) -> relu(affine)      encoder
//   g: code -> relu(affine) -> affine                             decoder, embedding
//   h: embedding -> softmax(affine)                               1x1 classifier

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mas3/autodiff.hpp"
#include "mas3/dataset.hpp"
#include "mas3/rng.hpp"

namespace mas3 {

struct Architecture {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t channels = 3;
  std::size_t patch_radius = 1;
  std::size_t encoder_width = 32;   // code size L
  std::size_t decoder_width = 32;
  std::size_t embedding_dim = 16;   // F
  std::size_t num_classes = 3;      // K

  std::size_t patch_features() const {
    const std::size_t side = 2 * patch_radius + 1;
    return side * side * channels;
  }
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct AffineLayer {
  Tensor weight;  // in x out
  Tensor bias;    // out

  bool operator==(const AffineLayer&) const = default;
};

struct SegNetwork {
  Architecture arch;
  AffineLayer encoder;
  AffineLayer decoder_hidden;
  AffineLayer decoder_out;
  AffineLayer classifier;

  // He-style uniform initialization.
  static SegNetwork initialize(const Architecture& arch, std::uint64_t seed);

  bool operator==(const SegNetwork&) const = default;
};

// Parameter groups a tape binding may mark as trainable.
enum ParamGroup : unsigned {
  kEncoder = 1u << 0,
  kDecoder = 1u << 1,
  kClassifier = 1u << 2,
  kAllParams = kEncoder | kDecoder | kClassifier,
};

struct BoundLayer {
  ad::DiffValue weight;
  ad::DiffValue bias;
};

struct BoundNetwork {
  BoundLayer encoder;
  BoundLayer decoder_hidden;
  BoundLayer decoder_out;
  BoundLayer classifier;
};

// Records the parameters on `tape`: groups in `trainable` as variables, the
// rest as constants.
BoundNetwork bind(ad::Tape& tape, const SegNetwork& net, unsigned trainable);
BoundLayer bind_layer(ad::Tape& tape, const AffineLayer& layer, bool trainable);

// Pixel address inside an N x W x H x C image tensor.
struct PixelRef {
  std::size_t image;
  std::size_t x;
  std::size_t y;
};

// One row of patch features per pixel of every image (image-major, then x,
// then y), or per listed pixel.
Tensor patch_features(const Tensor& images, const Architecture& arch);
Tensor patch_features(const Tensor& images, const Architecture& arch,
                      std::span<const PixelRef> pixels);

// rows x F embeddings for rows x P patch features.
ad::DiffValue embed(const BoundNetwork& net, const ad::DiffValue& features);
// rows x K class probabilities for rows x F embeddings.
ad::DiffValue classify(const BoundLayer& classifier, const ad::DiffValue& embeddings);

struct ForwardResult {
  Tensor embeddings;  // N x W x H x F
  Tensor probs;       // N x W x H x K
};

ForwardResult forward(const SegNetwork& net, const Tensor& images);

// Row-wise argmax; the lowest index wins ties.
std::vector<int> argmax_rows(const Tensor& probs);

// Class probabilities of the classifier h for a single embedding.
std::vector<double> classifier_probabilities(const AffineLayer& classifier,
                                             std::span<const double> embedding);

// -mean over non-ignored pixels of log(max(p[label], 1e-12)).
ad::DiffValue pixel_cross_entropy(const ad::DiffValue& probs, std::span<const int> labels);
double pixel_cross_entropy(const Tensor& probs, std::span<const int> labels);

// Mean -log softmax(h(z))[y] over pseudo samples; gradients reach only the
// classifier parameters.
ad::DiffValue classifier_ce_on_pseudo(const BoundLayer& classifier,
                                      const Tensor& embeddings, std::span<const int> labels);
double classifier_ce_on_pseudo(const AffineLayer& classifier, const Tensor& embeddings,
                               std::span<const int> labels);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer over a fixed list of parameter slots.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  // Call once per iteration before the per-slot updates.
  void next_step() { ++step_; }
  void update(std::size_t slot, Tensor& param, const Tensor& grad);

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainConfig {
  std::size_t batch_size = 4;
  std::size_t iterations = 1000;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct TrainResult {
  SegNetwork network;
  std::vector<double> loss_curve;  // loss before each update
};

// Minimizes pixel cross entropy on the labeled source domain. Throws
// Divergence on a non-finite loss.
TrainResult train_source(const SegNetwork& initial, const LabeledDataset& source,
                         const TrainConfig& cfg);

// Applies one Adam step to the parameter groups in `groups`, reading the
// gradients recorded in `bound`.
void apply_adam(Adam& adam, SegNetwork& net, const BoundNetwork& bound, unsigned groups);

// Checkpoint directory: manifest.json (architecture plus an optional free-form
// "metrics" object) and one tensor file per parameter.
void save_network(const std::filesystem::path& dir, const SegNetwork& net,
                  const std::string& metrics_json = "{}");
SegNetwork load_network(const std::filesystem::path& dir);
// The "metrics" object of a checkpoint manifest, serialized.
std::string load_network_metrics(const std::filesystem::path& dir);

}  // namespace mas3
