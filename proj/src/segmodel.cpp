#include "mas3/segmodel.hpp"

#include <algorithm>
#include <cmath>

#include "mas3/error.hpp"
#include "mas3/eval.hpp"

namespace mas3 {
namespace {

constexpr double kLogFloor = 1e-12;

AffineLayer init_layer(std::size_t in, std::size_t out, Rng& rng) {
  AffineLayer layer{Tensor({in, out}), Tensor({out})};
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  for (auto& w : layer.weight.data()) w = (2.0 * rng.uniform() - 1.0) * limit;
  return layer;
}

ad::DiffValue affine(const BoundLayer& layer, const ad::DiffValue& x) {
  return ad::add_row(ad::matmul(x, layer.weight), layer.bias);
}

void write_patch(const Tensor& images, const Architecture& arch, const PixelRef& p,
                 std::span<double> out) {
  const auto r = static_cast<std::ptrdiff_t>(arch.patch_radius);
  const auto w = static_cast<std::ptrdiff_t>(arch.width);
  const auto h = static_cast<std::ptrdiff_t>(arch.height);
  const std::size_t c = arch.channels;
  std::size_t k = 0;
  for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
    const auto x = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(p.x) + dx, 0, w - 1);
    for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
      const auto y = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(p.y) + dy, 0, h - 1);
      const double* px =
          images.raw() + ((p.image * arch.width + static_cast<std::size_t>(x)) * arch.height +
                          static_cast<std::size_t>(y)) * c;
      for (std::size_t ch = 0; ch < c; ++ch) out[k++] = px[ch];
    }
  }
}

void check_images(const Tensor& images, const Architecture& arch) {
  if (images.rank() != 4 || images.extent(1) != arch.width ||
      images.extent(2) != arch.height || images.extent(3) != arch.channels) {
    throw InvalidInput("images of shape " + shape_string(images.shape()) +
                       " do not match the network input " + std::to_string(arch.width) + "x" +
                       std::to_string(arch.height) + "x" + std::to_string(arch.channels));
  }
}

}  // namespace

void Architecture::validate() const {
  if (width == 0 || height == 0 || channels == 0 || encoder_width == 0 ||
      decoder_width == 0 || embedding_dim == 0 || num_classes == 0) {
    throw InvalidInput("Architecture: every extent must be positive");
  }
}

SegNetwork SegNetwork::initialize(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  SegNetwork net;
  net.arch = arch;
  net.encoder = init_layer(arch.patch_features(), arch.encoder_width, rng);
  net.decoder_hidden = init_layer(arch.encoder_width, arch.decoder_width, rng);
  net.decoder_out = init_layer(arch.decoder_width, arch.embedding_dim, rng);
  net.classifier = init_layer(arch.embedding_dim, arch.num_classes, rng);
  return net;
}

BoundLayer bind_layer(ad::Tape& tape, const AffineLayer& layer, bool trainable) {
  if (trainable) return {tape.variable(layer.weight), tape.variable(layer.bias)};
  return {tape.constant(layer.weight), tape.constant(layer.bias)};
}

BoundNetwork bind(ad::Tape& tape, const SegNetwork& net, unsigned trainable) {
  return {bind_layer(tape, net.encoder, trainable & kEncoder),
          bind_layer(tape, net.decoder_hidden, trainable & kDecoder),
          bind_layer(tape, net.decoder_out, trainable & kDecoder),
          bind_layer(tape, net.classifier, trainable & kClassifier)};
}

Tensor patch_features(const Tensor& images, const Architecture& arch) {
  check_images(images, arch);
  const std::size_t n = images.extent(0);
  std::vector<PixelRef> pixels;
  pixels.reserve(n * arch.width * arch.height);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t x = 0; x < arch.width; ++x) {
      for (std::size_t y = 0; y < arch.height; ++y) pixels.push_back({i, x, y});
    }
  }
  return patch_features(images, arch, pixels);
}

Tensor patch_features(const Tensor& images, const Architecture& arch,
                      std::span<const PixelRef> pixels) {
  check_images(images, arch);
  Tensor out({pixels.size(), arch.patch_features()});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto& p = pixels[i];
    if (p.image >= images.extent(0) || p.x >= arch.width || p.y >= arch.height) {
      throw InvalidInput("patch_features: pixel outside the image batch");
    }
    write_patch(images, arch, p, out.row(i));
  }
  return out;
}

ad::DiffValue embed(const BoundNetwork& net, const ad::DiffValue& features) {
  const auto code = ad::relu(affine(net.encoder, features));
  const auto hidden = ad::relu(affine(net.decoder_hidden, code));
  return affine(net.decoder_out, hidden);
}

ad::DiffValue classify(const BoundLayer& classifier, const ad::DiffValue& embeddings) {
  return ad::softmax_rows(affine(classifier, embeddings));
}

ForwardResult forward(const SegNetwork& net, const Tensor& images) {
  check_images(images, net.arch);
  const std::size_t n = images.extent(0);
  const std::size_t pix = net.arch.width * net.arch.height;
  const std::size_t f = net.arch.embedding_dim, k = net.arch.num_classes;
  ForwardResult out{Tensor({n, net.arch.width, net.arch.height, f}),
                    Tensor({n, net.arch.width, net.arch.height, k})};
  // One image per tape keeps the recorded intermediates small.
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<PixelRef> pixels;
    pixels.reserve(pix);
    for (std::size_t x = 0; x < net.arch.width; ++x) {
      for (std::size_t y = 0; y < net.arch.height; ++y) pixels.push_back({i, x, y});
    }
    ad::Tape tape;
    const BoundNetwork bound = bind(tape, net, 0);
    const auto z = embed(bound, tape.constant(patch_features(images, net.arch, pixels)));
    const auto p = classify(bound.classifier, z);
    std::copy(z.value().data().begin(), z.value().data().end(),
              out.embeddings.data().begin() + i * pix * f);
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.probs.data().begin() + i * pix * k);
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<double> classifier_probabilities(const AffineLayer& classifier,
                                             std::span<const double> embedding) {
  const std::size_t f = classifier.weight.extent(0), k = classifier.weight.extent(1);
  if (embedding.size() != f) throw InvalidInput("classifier: embedding size mismatch");
  std::vector<double> logits(classifier.bias.data().begin(), classifier.bias.data().end());
  for (std::size_t i = 0; i < f; ++i) {
    const double zi = embedding[i];
    const double* wrow = classifier.weight.raw() + i * k;
    for (std::size_t j = 0; j < k; ++j) logits[j] += zi * wrow[j];
  }
  const Tensor p = softmax(Tensor::vector(std::move(logits)));
  return {p.data().begin(), p.data().end()};
}

ad::DiffValue pixel_cross_entropy(const ad::DiffValue& probs, std::span<const int> labels) {
  const auto picked = ad::pick(ad::log_clamped(probs, kLogFloor), labels, kIgnoreLabel);
  if (picked.value().size() == 0) throw InvalidInput("pixel_cross_entropy: every pixel is ignored");
  return ad::scale(ad::mean(picked), -1.0);
}

double pixel_cross_entropy(const Tensor& probs, std::span<const int> labels) {
  ad::Tape tape;
  return pixel_cross_entropy(tape.constant(probs), labels).value().item();
}

ad::DiffValue classifier_ce_on_pseudo(const BoundLayer& classifier, const Tensor& embeddings,
                                      std::span<const int> labels) {
  if (embeddings.rows() == 0 || labels.empty()) {
    throw InvalidInput("classifier_ce_on_pseudo: empty pseudo-dataset");
  }
  ad::Tape& tape = *classifier.weight.tape();
  const auto probs = classify(classifier, tape.constant(embeddings));
  // Pseudo labels never carry the ignore value; -1 disables it.
  const auto picked = ad::pick(ad::log_clamped(probs, kLogFloor), labels, -1);
  return ad::scale(ad::mean(picked), -1.0);
}

double classifier_ce_on_pseudo(const AffineLayer& classifier, const Tensor& embeddings,
                               std::span<const int> labels) {
  ad::Tape tape;
  return classifier_ce_on_pseudo(bind_layer(tape, classifier, false), embeddings, labels)
      .value()
      .item();
}

void Adam::update(std::size_t slot, Tensor& param, const Tensor& grad) {
  if (step_ == 0) throw InvalidInput("Adam::update before next_step");
  if (slot >= m_.size()) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  if (m_[slot].shape() != param.shape()) {
    m_[slot] = Tensor::zeros(param.shape());
    v_[slot] = Tensor::zeros(param.shape());
  }
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  Tensor& m = m_[slot];
  Tensor& v = v_[slot];
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
    param[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
  }
}

void apply_adam(Adam& adam, SegNetwork& net, const BoundNetwork& bound, unsigned groups) {
  struct Slot {
    unsigned group;
    AffineLayer* layer;
    const BoundLayer* bound;
  };
  const Slot slots[] = {{kEncoder, &net.encoder, &bound.encoder},
                        {kDecoder, &net.decoder_hidden, &bound.decoder_hidden},
                        {kDecoder, &net.decoder_out, &bound.decoder_out},
                        {kClassifier, &net.classifier, &bound.classifier}};
  for (std::size_t i = 0; i < std::size(slots); ++i) {
    if (!(groups & slots[i].group)) continue;
    adam.update(2 * i, slots[i].layer->weight, slots[i].bound->weight.grad());
    adam.update(2 * i + 1, slots[i].layer->bias, slots[i].bound->bias.grad());
  }
}

TrainResult train_source(const SegNetwork& initial, const LabeledDataset& source,
                         const TrainConfig& cfg) {
  source.validate();
  if (source.count() == 0) throw InvalidInput("train_source: empty dataset");
  if (cfg.batch_size == 0) throw InvalidInput("train_source: batch size must be >= 1");
  if (!(cfg.adam.learning_rate > 0.0)) throw InvalidInput("train_source: learning rate must be > 0");
  TrainResult result{initial, {}};
  if (cfg.iterations == 0) return result;

  const Architecture& arch = initial.arch;
  const Tensor features = patch_features(source.images, arch);
  const std::size_t pix = source.pixels_per_image();
  const std::size_t p = arch.patch_features();
  Rng rng(cfg.seed);
  Adam adam(cfg.adam);
  result.loss_curve.reserve(cfg.iterations);
  std::vector<int> labels(cfg.batch_size * pix);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Tensor batch({cfg.batch_size * pix, p});
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t img = rng.uniform_index(source.count());
      std::copy_n(features.raw() + img * pix * p, pix * p, batch.raw() + b * pix * p);
      std::copy_n(source.labels.begin() + static_cast<std::ptrdiff_t>(img * pix), pix,
                  labels.begin() + static_cast<std::ptrdiff_t>(b * pix));
    }
    ad::Tape tape;
    const BoundNetwork bound = bind(tape, result.network, kAllParams);
    const auto probs = classify(bound.classifier, embed(bound, tape.constant(std::move(batch))));
    const auto loss = pixel_cross_entropy(probs, labels);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw Divergence("source training diverged at iteration " + std::to_string(it) +
                       " (loss " + std::to_string(value) + ")");
    }
    result.loss_curve.push_back(value);
    tape.backward(loss);
    adam.next_step();
    apply_adam(adam, result.network, bound, kAllParams);
  }
  return result;
}

}  // namespace mas3
