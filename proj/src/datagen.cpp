#include "mas3/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "mas3/error.hpp"
#include "mas3/eval.hpp"
#include "mas3/rng.hpp"
#include "mas3/tensor_io.hpp"

namespace mas3 {
namespace {

using json = nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

// sin/cos from a fixed-length Taylor series so the generator performs only
// IEEE +, -, *, / and sqrt.
std::array<double, 2> portable_cos_sin(double radians) {
  const double two_pi = 2.0 * kPi;
  while (radians > kPi) radians -= two_pi;
  while (radians < -kPi) radians += two_pi;
  double c = 0.0, s = 0.0;
  double term = 1.0;  // radians^n / n!
  for (int n = 0; n < 40; ++n) {
    switch (n % 4) {
      case 0: c += term; break;
      case 1: s += term; break;
      case 2: c -= term; break;
      case 3: s -= term; break;
    }
    term *= radians / static_cast<double>(n + 1);
  }
  return {c, s};
}

// Approximately standard normal: Irwin-Hall sum of 12 uniforms.
double portable_normal(Rng& rng) {
  double s = 0.0;
  for (int i = 0; i < 12; ++i) s += rng.uniform();
  return s - 6.0;
}

double triangle_wave(double t) {
  return 4.0 * std::abs(t - std::floor(t) - 0.5) - 1.0;
}

using Rotation = std::array<std::array<double, 3>, 3>;

Rotation hue_rotation(double degrees) {
  const auto [c, s] = portable_cos_sin(degrees * kPi / 180.0);
  const double k = 1.0 / std::sqrt(3.0);
  const double t = (1.0 - c) / 3.0;
  return {{{c + t, t - s * k, t + s * k},
           {t + s * k, c + t, t - s * k},
           {t - s * k, t + s * k, c + t}}};
}

std::vector<int> blob_layout(const DomainSpec& spec, Rng& rng) {
  const std::size_t k = spec.num_classes;
  const std::size_t seeds = 2 * k + 2;
  std::vector<double> sx(seeds), sy(seeds);
  std::vector<int> cls(seeds);
  for (std::size_t i = 0; i < seeds; ++i) {
    sx[i] = rng.uniform() * static_cast<double>(spec.width);
    sy[i] = rng.uniform() * static_cast<double>(spec.height);
    cls[i] = i < k ? static_cast<int>(i) : static_cast<int>(rng.uniform_index(k));
  }
  std::vector<int> labels(spec.width * spec.height);
  for (std::size_t x = 0; x < spec.width; ++x) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      double best = INFINITY;
      int label = 0;
      for (std::size_t i = 0; i < seeds; ++i) {
        const double dx = static_cast<double>(x) + 0.5 - sx[i];
        const double dy = static_cast<double>(y) + 0.5 - sy[i];
        const double d = dx * dx + dy * dy;
        if (d < best) {
          best = d;
          label = cls[i];
        }
      }
      labels[x * spec.height + y] = label;
    }
  }
  return labels;
}

std::vector<int> stripe_layout(const DomainSpec& spec, Rng& rng) {
  double dx = 0.0, dy = 0.0, norm = 0.0;
  while (norm == 0.0) {
    dx = portable_normal(rng);
    dy = portable_normal(rng);
    norm = std::sqrt(dx * dx + dy * dy);
  }
  dx /= norm;
  dy /= norm;
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  const double corners[4] = {0.0, w * dx, h * dy, w * dx + h * dy};
  const double lo = *std::min_element(corners, corners + 4);
  const double hi = *std::max_element(corners, corners + 4);
  std::vector<double> bounds;
  std::vector<int> cls;
  double t = lo - rng.uniform() * 6.0;
  while (t <= hi) {
    t += 3.0 + rng.uniform() * 6.0;
    bounds.push_back(t);
    cls.push_back(static_cast<int>(rng.uniform_index(spec.num_classes)));
  }
  std::vector<int> labels(spec.width * spec.height);
  for (std::size_t x = 0; x < spec.width; ++x) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      const double p = (static_cast<double>(x) + 0.5) * dx + (static_cast<double>(y) + 0.5) * dy;
      const auto it = std::upper_bound(bounds.begin(), bounds.end(), p);
      const std::size_t idx = std::min<std::size_t>(it - bounds.begin(), cls.size() - 1);
      labels[x * spec.height + y] = cls[idx];
    }
  }
  return labels;
}

std::vector<int> checker_layout(const DomainSpec& spec, Rng& rng) {
  const std::size_t cell = 4 + rng.uniform_index(7);
  const std::size_t ox = rng.uniform_index(cell), oy = rng.uniform_index(cell);
  const std::size_t gx = (spec.width + ox) / cell + 1, gy = (spec.height + oy) / cell + 1;
  std::vector<int> grid(gx * gy);
  for (auto& g : grid) g = static_cast<int>(rng.uniform_index(spec.num_classes));
  std::vector<int> labels(spec.width * spec.height);
  for (std::size_t x = 0; x < spec.width; ++x) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      labels[x * spec.height + y] = grid[((x + ox) / cell) * gy + (y + oy) / cell];
    }
  }
  return labels;
}

}  // namespace

std::string to_string(Layout layout) {
  switch (layout) {
    case Layout::kStripes: return "stripes";
    case Layout::kBlobs: return "blobs";
    case Layout::kChecker: return "checker";
  }
  return "blobs";
}

Layout layout_from_string(const std::string& s) {
  if (s == "stripes") return Layout::kStripes;
  if (s == "blobs") return Layout::kBlobs;
  if (s == "checker") return Layout::kChecker;
  throw InvalidInput("unknown layout '" + s + "'");
}

DomainSpec DomainSpec::shift3(std::uint64_t seed) {
  DomainSpec spec;
  spec.num_classes = 3;
  spec.width = 32;
  spec.height = 32;
  spec.layout = Layout::kBlobs;
  spec.classes = {
      {{0.64, 0.34, 0.30}, 0.06, 0.06, 4.0},
      {{0.44, 0.54, 0.30}, 0.06, 0.06, 8.0},
      {{0.34, 0.40, 0.60}, 0.06, 0.0, 4.0},
  };
  spec.shift = {25.0, 0.2, 1.5, 0.0};
  spec.seed = seed;
  return spec;
}

void DomainSpec::validate() const {
  if (num_classes == 0) throw InvalidInput("DomainSpec: zero classes");
  if (num_classes >= static_cast<std::size_t>(kIgnoreLabel)) {
    throw InvalidInput("DomainSpec: too many classes");
  }
  if (width == 0 || height == 0) throw InvalidInput("DomainSpec: empty image size");
  if (classes.size() != num_classes) {
    throw InvalidInput("DomainSpec: " + std::to_string(classes.size()) +
                       " class appearances for " + std::to_string(num_classes) + " classes");
  }
  for (const auto& c : classes) {
    if (c.noise < 0.0 || c.texture_period <= 0.0) {
      throw InvalidInput("DomainSpec: bad class appearance");
    }
  }
  if (shift.noise_scale < 0.0) throw InvalidInput("DomainSpec: negative noise scale");
}

LabeledDataset generate_domain(const DomainSpec& spec, const DomainShift& shift,
                               std::size_t count, std::uint64_t seed) {
  spec.validate();
  if (count == 0) throw InvalidInput("generate_domain: count must be >= 1");
  const std::size_t w = spec.width, h = spec.height, c = 3;
  LabeledDataset out;
  out.num_classes = spec.num_classes;
  out.images = Tensor({count, w, h, c});
  out.labels.resize(count * w * h);
  const Rotation rot = hue_rotation(shift.hue_degrees);
  const Rng root(seed);
  for (std::size_t n = 0; n < count; ++n) {
    Rng layout_rng = root.fork(2 * n);
    Rng look_rng = root.fork(2 * n + 1);
    std::vector<int> labels;
    switch (spec.layout) {
      case Layout::kBlobs: labels = blob_layout(spec, layout_rng); break;
      case Layout::kStripes: labels = stripe_layout(spec, layout_rng); break;
      case Layout::kChecker: labels = checker_layout(spec, layout_rng); break;
    }
    std::vector<double> phase(spec.num_classes);
    for (auto& p : phase) p = look_rng.uniform();
    std::copy(labels.begin(), labels.end(), out.labels.begin() + n * w * h);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t y = 0; y < h; ++y) {
        const int k = labels[x * h + y];
        const auto& look = spec.classes[static_cast<std::size_t>(k)];
        const double warped =
            static_cast<double>(x) + shift.warp * triangle_wave(static_cast<double>(y) / 8.0);
        const double tex =
            look.texture_amplitude *
            triangle_wave(warped / look.texture_period + phase[static_cast<std::size_t>(k)]);
        double base[3];
        for (std::size_t ch = 0; ch < 3; ++ch) base[ch] = look.color[ch] + tex;
        double* px = out.images.raw() + ((n * w + x) * h + y) * c;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double rotated = rot[ch][0] * base[0] + rot[ch][1] * base[1] + rot[ch][2] * base[2];
          px[ch] = rotated + shift.brightness +
                   look.noise * shift.noise_scale * portable_normal(look_rng);
        }
      }
    }
  }
  return out;
}

double class_separability(const DomainSpec& spec, const DomainShift& shift) {
  spec.validate();
  double min_gap = INFINITY, max_sigma = 0.0;
  for (std::size_t i = 0; i < spec.num_classes; ++i) {
    max_sigma = std::max(max_sigma, spec.classes[i].noise * shift.noise_scale);
    for (std::size_t j = i + 1; j < spec.num_classes; ++j) {
      double d2 = 0.0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double d = spec.classes[i].color[ch] - spec.classes[j].color[ch];
        d2 += d * d;
      }
      min_gap = std::min(min_gap, std::sqrt(d2));
    }
  }
  if (spec.num_classes < 2) return INFINITY;
  return max_sigma > 0.0 ? min_gap / max_sigma : INFINITY;
}

DomainPair generate_domain_pair(const DomainSpec& spec, std::size_t n_source,
                                std::size_t n_target) {
  if (n_source == 0 || n_target == 0) {
    throw InvalidInput("generate_domain_pair: counts must be >= 1");
  }
  DomainPair pair;
  pair.source = generate_domain(spec, DomainShift{}, n_source, spec.seed);
  pair.target = generate_domain(spec, spec.shift, n_target, Rng(spec.seed).fork(0x7A96E7).next_u64());
  // Rotation and offsets preserve color distances; only the noise scale moves
  // the ratio, so measure on the target appearance.
  pair.separability = class_separability(spec, spec.shift);
  if (pair.separability < 3.0) {
    pair.warnings.push_back("class colors collide within noise: separability " +
                            std::to_string(pair.separability) + " < 3");
  }
  return pair;
}

void save_dataset(const std::filesystem::path& dir, const LabeledDataset& data,
                  const std::string& role) {
  data.validate();
  std::filesystem::create_directories(dir);
  json manifest = {
      {"schema", 1},
      {"kind", "mas3-dataset"},
      {"role", role},
      {"num_classes", data.num_classes},
      {"count", data.count()},
      {"width", data.width()},
      {"height", data.height()},
      {"channels", data.channels()},
      {"ignore_label", kIgnoreLabel},
  };
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  save_tensor(dir / "images.tnsr", data.images);
  std::vector<double> labels(data.labels.begin(), data.labels.end());
  save_tensor(dir / "labels.tnsr",
              Tensor({data.count(), data.width(), data.height()}, std::move(labels)));
}

namespace {

json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CorruptFile("missing dataset manifest in " + dir.string());
  try {
    json m = json::parse(in);
    if (m.value("kind", "") != "mas3-dataset") {
      throw CorruptFile(dir.string() + " is not a dataset directory");
    }
    return m;
  } catch (const json::exception& e) {
    throw CorruptFile("unreadable dataset manifest in " + dir.string() + ": " + e.what());
  }
}

void check_image_shape(const json& m, const Tensor& images, const std::filesystem::path& dir) {
  const Tensor::Shape expected = {m.at("count").get<std::size_t>(), m.at("width").get<std::size_t>(),
                                  m.at("height").get<std::size_t>(),
                                  m.at("channels").get<std::size_t>()};
  if (images.shape() != expected) {
    throw CorruptFile("images in " + dir.string() + " have shape " +
                      shape_string(images.shape()) + ", manifest says " +
                      shape_string(expected));
  }
}

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path& dir) {
  const json m = read_manifest(dir);
  LabeledDataset data;
  data.num_classes = m.at("num_classes").get<std::size_t>();
  data.images = load_tensor(dir / "images.tnsr");
  check_image_shape(m, data.images, dir);
  const Tensor labels = load_tensor(dir / "labels.tnsr");
  if (labels.shape() != Tensor::Shape{data.count(), data.width(), data.height()}) {
    throw CorruptFile("labels in " + dir.string() + " have shape " +
                      shape_string(labels.shape()));
  }
  data.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = labels[i];
    if (v != std::floor(v) || v < 0.0 || v > 1e9) {
      throw ValidationError("non-integer label value in " + dir.string());
    }
    data.labels[i] = static_cast<int>(v);
  }
  data.validate();
  return data;
}

Tensor load_dataset_images(const std::filesystem::path& dir) {
  const json m = read_manifest(dir);
  Tensor images = load_tensor(dir / "images.tnsr");
  check_image_shape(m, images, dir);
  return images;
}

std::string dataset_role(const std::filesystem::path& dir) {
  return read_manifest(dir).value("role", "");
}

}  // namespace mas3
