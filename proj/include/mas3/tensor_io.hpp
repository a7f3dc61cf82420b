#pragma once

#include <filesystem>
#include <iosfwd>

#include "mas3/tensor.hpp"

namespace mas3 {

// Binary tensor container:
//   8 bytes  magic "MAS3TNSR"
//   u32 LE   rank
//   rank x u64 LE extents
//   row-major f64 LE payload
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace mas3
