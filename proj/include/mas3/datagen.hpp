#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mas3/dataset.hpp"

namespace mas3 {

enum class Layout { kStripes, kBlobs, kChecker };

std::string to_string(Layout layout);
Layout layout_from_string(const std::string& s);

struct ClassAppearance {
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double noise = 0.05;            // per-pixel Gaussian sigma
  double texture_amplitude = 0.0;  // triangle-wave luminance pattern
  double texture_period = 4.0;     // pixels
};

// Appearance-only shift; labels never depend on it.
struct DomainShift {
  double hue_degrees = 0.0;  // rotation of RGB about the gray axis
  double brightness = 0.0;   // added to every channel
  double noise_scale = 1.0;  // multiplies every class noise sigma
  double warp = 0.0;         // amplitude (pixels) of the texture-coordinate warp

  bool is_zero() const {
    return hue_degrees == 0.0 && brightness == 0.0 && noise_scale == 1.0 && warp == 0.0;
  }
};

struct DomainSpec {
  std::size_t num_classes = 3;
  std::size_t width = 32;
  std::size_t height = 32;
  Layout layout = Layout::kBlobs;
  std::vector<ClassAppearance> classes;
  DomainShift shift;
  std::uint64_t seed = 0;

  // The fixed "shift-3" benchmark: K = 3, 32 x 32 x 3, hue 25 degrees,
  // brightness +0.2, noise x1.5.
  static DomainSpec shift3(std::uint64_t seed = 2024);

  void validate() const;
};

// Images are a pure function of (spec appearance, shift, seed, index); label
// maps are a pure function of (spec layout, seed, index).
LabeledDataset generate_domain(const DomainSpec& spec, const DomainShift& shift,
                               std::size_t count, std::uint64_t seed);

struct DomainPair {
  LabeledDataset source;
  LabeledDataset target;
  // Smallest distance between two class colors divided by the largest noise
  // sigma, measured on the shifted target appearance.
  double separability = 0.0;
  std::vector<std::string> warnings;
};

// Source uses a zero shift and `spec.seed`; target uses `spec.shift` and a
// seed derived from `spec.seed`.
DomainPair generate_domain_pair(const DomainSpec& spec, std::size_t n_source,
                                std::size_t n_target);

double class_separability(const DomainSpec& spec, const DomainShift& shift);

// Dataset directory: manifest.json + images.tnsr + labels.tnsr.
void save_dataset(const std::filesystem::path& dir, const LabeledDataset& data,
                  const std::string& role);
LabeledDataset load_dataset(const std::filesystem::path& dir);
// Reads only images.tnsr; labels are never opened.
Tensor load_dataset_images(const std::filesystem::path& dir);
std::string dataset_role(const std::filesystem::path& dir);

}  // namespace mas3
