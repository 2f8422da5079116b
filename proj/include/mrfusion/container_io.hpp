#pragma once

#include <filesystem>
#include <iosfwd>

#include "mrfusion/imaging.hpp"
#include "mrfusion/scene_sim.hpp"

namespace mrfusion {

// Binary container layout (all integers little-endian):
//   bytes 0..7   magic "MRFCONT\0"
//   uint32       format version (1)
//   uint32       header length H in bytes
//   H bytes      UTF-8 JSON header: kind, dtype ("complex64"), dims,
//                dim_names and kind-specific metadata
//   payload      prod(dims) complex64 values (float32 re, float32 im),
//                row-major in dim_names order
// Values are stored as complex64; reading widens them back to double.

void write_cube(std::ostream& os, const SlowTimeCube& cube);
SlowTimeCube read_cube(std::istream& is);
void save_cube(const std::filesystem::path& path, const SlowTimeCube& cube);
SlowTimeCube load_cube(const std::filesystem::path& path);

void write_image(std::ostream& os, const RadarImage& image);
RadarImage read_image(std::istream& is);
void save_image(const std::filesystem::path& path, const RadarImage& image);
RadarImage load_image(const std::filesystem::path& path);

}  // namespace mrfusion
