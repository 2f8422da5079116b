#include "mrfusion/container_io.hpp"

#include <array>
#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace mrfusion {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'M', 'R', 'F', 'C', 'O', 'N', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void write_container(std::ostream& os, const nlohmann::json& header, const std::vector<cplx>& values) {
    const std::string h = header.dump();
    os.write(kMagic.data(), kMagic.size());
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(h.size()));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    std::vector<std::complex<float>> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) buf[i] = std::complex<float>(values[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(buf[0])));
    if (!os) throw std::runtime_error("container: write failed");
}

nlohmann::json read_container(std::istream& is, const std::string& kind, std::vector<cplx>& values) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw std::runtime_error("container: bad magic");
    if (const auto v = read_u32(is); v != kVersion) throw std::runtime_error("container: unsupported version " + std::to_string(v));
    const auto hlen = read_u32(is);
    std::string h(hlen, '\0');
    is.read(h.data(), hlen);
    if (!is) throw std::runtime_error("container: truncated header");
    auto header = nlohmann::json::parse(h);
    if (header.at("kind") != kind) throw std::runtime_error("container: expected kind " + kind);
    if (header.at("dtype") != "complex64") throw std::runtime_error("container: unsupported dtype");
    std::size_t count = 1;
    for (const auto& d : header.at("dims")) count *= d.get<std::size_t>();
    std::vector<std::complex<float>> buf(count);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(buf[0])));
    if (!is) throw std::runtime_error("container: truncated payload");
    values.resize(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = cplx(buf[i]);
    return header;
}

}  // namespace

void write_cube(std::ostream& os, const SlowTimeCube& cube) {
    nlohmann::json h{{"kind", "slow_time_cube"},
                     {"dtype", "complex64"},
                     {"dims", {cube.frames, cube.range_bins, cube.elements}},
                     {"dim_names", {"frame", "range_bin", "element"}},
                     {"radar_id", cube.radar_id},
                     {"range_bin_size", cube.range_bin_size},
                     {"t0", cube.t0},
                     {"slow_dt", cube.slow_dt},
                     {"wavelength", cube.wavelength},
                     {"element_x", cube.element_x}};
    write_container(os, h, cube.samples);
}

SlowTimeCube read_cube(std::istream& is) {
    std::vector<cplx> values;
    const auto h = read_container(is, "slow_time_cube", values);
    SlowTimeCube c(h.at("radar_id").get<int>(), h["dims"][0].get<std::size_t>(), h["dims"][1].get<std::size_t>(),
                   h["dims"][2].get<std::size_t>());
    c.range_bin_size = h.at("range_bin_size").get<double>();
    c.t0 = h.at("t0").get<double>();
    c.slow_dt = h.at("slow_dt").get<double>();
    c.wavelength = h.at("wavelength").get<double>();
    c.element_x = h.at("element_x").get<std::vector<double>>();
    c.samples = std::move(values);
    return c;
}

void write_image(std::ostream& os, const RadarImage& image) {
    const auto& g = image.grid;
    nlohmann::json h{{"kind", "radar_image"},
                     {"dtype", "complex64"},
                     {"dims", {image.frames, g.ny(), g.nx()}},
                     {"dim_names", {"frame", "y", "x"}},
                     {"radar_id", image.radar_id},
                     {"t0", image.t0},
                     {"slow_dt", image.slow_dt},
                     {"grid", {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max},
                               {"pixel_size", g.pixel_size}}}};
    write_container(os, h, image.samples);
}

RadarImage read_image(std::istream& is) {
    std::vector<cplx> values;
    const auto h = read_container(is, "radar_image", values);
    RadarImage img;
    img.radar_id = h.at("radar_id").get<int>();
    img.t0 = h.at("t0").get<double>();
    img.slow_dt = h.at("slow_dt").get<double>();
    const auto& g = h.at("grid");
    img.grid = {g.at("x_min").get<double>(), g.at("x_max").get<double>(), g.at("y_min").get<double>(),
                g.at("y_max").get<double>(), g.at("pixel_size").get<double>()};
    img.frames = h["dims"][0].get<std::size_t>();
    if (img.frames * img.grid.size() != values.size()) throw std::runtime_error("container: grid does not match dims");
    img.samples = std::move(values);
    return img;
}

void save_cube(const std::filesystem::path& path, const SlowTimeCube& cube) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_cube(os, cube);
}

SlowTimeCube load_cube(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_cube(is);
}

void save_image(const std::filesystem::path& path, const RadarImage& image) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_image(os, image);
}

RadarImage load_image(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_image(is);
}

}  // namespace mrfusion
