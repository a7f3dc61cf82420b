#include "mas3/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "mas3/error.hpp"

namespace mas3 {
namespace {

constexpr std::array<char, 8> kMagic = {'M', 'A', 'S', '3', 'T', 'N', 'S', 'R'};
constexpr std::uint32_t kMaxRank = 16;

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> buf;
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw CorruptFile(std::string("tensor file truncated while reading ") + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw Error("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CorruptFile("bad tensor magic");
  }
  const auto rank = get_le<std::uint32_t>(in, "rank");
  if (rank > kMaxRank) throw CorruptFile("implausible tensor rank " + std::to_string(rank));
  Tensor::Shape shape(rank);
  std::size_t count = 1;
  for (auto& e : shape) {
    e = get_le<std::uint64_t>(in, "extent");
    if (e != 0 && count > std::numeric_limits<std::size_t>::max() / 8 / e) {
      throw CorruptFile("tensor extents overflow");
    }
    count *= e;
  }
  std::vector<double> data(count);
  for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "payload"));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFile("cannot open tensor file " + path.string());
  Tensor t = read_tensor(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptFile("trailing bytes in tensor file " + path.string());
  }
  return t;
}

}  // namespace mas3
