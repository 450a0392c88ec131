#include <bit>
#include <cstdint>
#include <cstring>

#include "sparsealign/io.hpp"

namespace sparsealign {

namespace {

constexpr std::size_t kMrcHeaderBytes = 1024;

class Reader {
 public:
  Reader(std::string_view bytes, bool big_endian) : bytes_(bytes), big_(big_endian) {}

  std::uint32_t u32(std::size_t offset) const {
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + offset, 4);
    if (big_ != (std::endian::native == std::endian::big)) {
      v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
  }
  std::uint16_t u16(std::size_t offset) const {
    std::uint16_t v;
    std::memcpy(&v, bytes_.data() + offset, 2);
    if (big_ != (std::endian::native == std::endian::big)) v = static_cast<std::uint16_t>((v << 8) | (v >> 8));
    return v;
  }
  std::int32_t i32(std::size_t offset) const { return std::bit_cast<std::int32_t>(u32(offset)); }
  float f32(std::size_t offset) const { return std::bit_cast<float>(u32(offset)); }
  std::int16_t i16(std::size_t offset) const { return std::bit_cast<std::int16_t>(u16(offset)); }

 private:
  std::string_view bytes_;
  bool big_;
};

int bytes_per_value(int mode) { return mode == 1 ? 2 : 4; }

}  // namespace

MrcHeader parse_mrc_header(std::string_view bytes, std::string_view source) {
  const std::string where(source);
  if (bytes.size() < kMrcHeaderBytes) {
    throw DataError(where + ": truncated header: expected " + std::to_string(kMrcHeaderBytes) + " bytes, got " +
                    std::to_string(bytes.size()));
  }
  const auto stamp0 = static_cast<unsigned char>(bytes[212]);
  const auto stamp1 = static_cast<unsigned char>(bytes[213]);
  MrcHeader h;
  if (stamp0 == 0x44 && (stamp1 == 0x44 || stamp1 == 0x41)) {
    h.big_endian = false;
  } else if (stamp0 == 0x11 && stamp1 == 0x11) {
    h.big_endian = true;
  } else {
    throw DataError(where + ": bad machine stamp 0x" + [&] {
      const char *hex = "0123456789abcdef";
      return std::string{hex[stamp0 >> 4], hex[stamp0 & 15], hex[stamp1 >> 4], hex[stamp1 & 15]};
    }());
  }
  const Reader r(bytes, h.big_endian);
  h.nx = r.i32(0);
  h.ny = r.i32(4);
  h.nz = r.i32(8);
  h.mode = r.i32(12);
  h.mx = r.i32(28);
  h.cell_x = r.f32(40);
  h.extended_bytes = r.i32(92);
  if (h.mode != 1 && h.mode != 2) {
    throw DataError(where + ": unsupported MRC mode " + std::to_string(h.mode) +
                    " (supported: 1 = int16, 2 = float32)");
  }
  if (h.nx <= 0 || h.ny <= 0 || h.nz <= 0) throw DataError(where + ": non-positive NX, NY or NZ");
  if (h.extended_bytes < 0) throw DataError(where + ": negative extended header size");
  h.pixel_size = (h.mx > 0 && h.cell_x > 0.0f) ? static_cast<double>(h.cell_x) / h.mx : 1.0;
  return h;
}

TiltStack decode_mrc(std::string_view bytes, const MrcImportOptions &options, std::string_view source) {
  const std::string where(source);
  const MrcHeader h = parse_mrc_header(bytes, source);
  const std::size_t frame = static_cast<std::size_t>(h.nx) * static_cast<std::size_t>(h.ny);
  const std::size_t count = frame * static_cast<std::size_t>(h.nz);
  const std::size_t offset = kMrcHeaderBytes + static_cast<std::size_t>(h.extended_bytes);
  const std::size_t expected = offset + count * static_cast<std::size_t>(bytes_per_value(h.mode));
  if (bytes.size() < expected) {
    throw DataError(where + ": truncated data: header NX*NY*NZ needs " + std::to_string(expected) +
                    " bytes, file has " + std::to_string(bytes.size()));
  }
  if (options.angles_deg.size() != static_cast<std::size_t>(h.nz)) {
    throw ConfigError(where + ": " + std::to_string(h.nz) + " sections but " +
                      std::to_string(options.angles_deg.size()) + " tilt angles supplied");
  }

  TiltGeometry g;
  g.dim = h.ny == 1 ? 2 : 3;
  g.angles_deg = options.angles_deg;
  g.times = options.times.empty() ? TiltGeometry::uniform_times(g.angles_deg.size()) : options.times;
  g.detector = DetectorGrid::centered(g.dim == 2 ? std::vector<int>{h.nx} : std::vector<int>{h.ny, h.nx},
                                      h.pixel_size);
  g.shape_sigma = options.shape_sigma;
  g.tilt_axis = options.tilt_axis;
  g.validate();

  TiltStack stack(g);
  const Reader r(bytes, h.big_endian);
  for (std::size_t i = 0; i < count; ++i) {
    stack.values[i] = h.mode == 2 ? static_cast<double>(r.f32(offset + 4 * i)) : r.i16(offset + 2 * i);
  }
  return stack;
}

TiltStack read_mrc(const std::filesystem::path &path, const MrcImportOptions &options) {
  return decode_mrc(read_file_bytes(path), options, path.string());
}

}  // namespace sparsealign
