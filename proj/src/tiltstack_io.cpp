#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "sparsealign/io.hpp"

namespace sparsealign {

namespace {

using nlohmann::json;

std::uint32_t swap32(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void put_u32le(std::string &out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = swap32(v);
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t get_u32le(const char *p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  if constexpr (std::endian::native == std::endian::big) v = swap32(v);
  return v;
}

json header_json(const TiltGeometry &g) {
  json h;
  h["magic"] = kTiltStackMagic;
  h["dimension"] = g.dim;
  h["n_frames"] = g.frame_count();
  h["detector_shape"] = g.detector.shape;
  h["angles_deg"] = g.angles_deg;
  h["times"] = g.times;
  h["pixel_size"] = g.detector.pixel_size;
  h["eta"] = g.eta;
  h["dtype"] = "f32le";
  h["detector_origin"] = {g.detector.origin_s, g.detector.origin_y};
  h["shape_sigma"] = g.shape_sigma;
  h["antialias_sigma"] = g.antialias_sigma;
  h["tilt_axis"] = g.tilt_axis == kX ? "x" : "y";
  return h;
}

TiltGeometry geometry_from_header(const json &h, std::string_view source) {
  const std::string where(source);
  try {
    if (!h.is_object() || h.value("magic", std::string()) != kTiltStackMagic) {
      throw DataError(where + ": bad magic, expected \"" + std::string(kTiltStackMagic) + "\"");
    }
    if (h.at("dtype").get<std::string>() != "f32le") {
      throw DataError(where + ": unsupported dtype \"" + h.at("dtype").get<std::string>() + "\"");
    }
    TiltGeometry g;
    g.dim = h.at("dimension").get<int>();
    g.angles_deg = h.at("angles_deg").get<std::vector<double>>();
    g.times = h.at("times").get<std::vector<double>>();
    g.detector.shape = h.at("detector_shape").get<std::vector<int>>();
    g.detector.pixel_size = h.at("pixel_size").get<double>();
    g.eta = h.at("eta").get<double>();
    if (h.contains("detector_origin")) {
      const auto o = h.at("detector_origin").get<std::vector<double>>();
      if (o.size() != 2) throw DataError(where + ": detector_origin needs two entries");
      g.detector.origin_s = o[0];
      g.detector.origin_y = o[1];
    } else {
      const DetectorGrid c = DetectorGrid::centered(g.detector.shape, g.detector.pixel_size);
      g.detector.origin_s = c.origin_s;
      g.detector.origin_y = c.origin_y;
    }
    g.shape_sigma = h.value("shape_sigma", 1.0);
    g.antialias_sigma = h.value("antialias_sigma", 0.0);
    const std::string axis = h.value("tilt_axis", std::string("y"));
    if (axis != "x" && axis != "y") throw DataError(where + ": tilt_axis must be \"x\" or \"y\"");
    g.tilt_axis = axis == "x" ? kX : kY;
    if (h.at("n_frames").get<std::size_t>() != g.angles_deg.size()) {
      throw DataError(where + ": n_frames disagrees with the number of angles");
    }
    g.validate();
    return g;
  } catch (const json::exception &e) {
    throw DataError(where + ": malformed header: " + e.what());
  } catch (const ConfigError &e) {
    throw DataError(where + ": invalid header: " + e.what());
  }
}

struct Layout {
  std::size_t header_end = 0;
  json header;
};

Layout parse_layout(std::string_view bytes, std::string_view source) {
  const std::string where(source);
  if (bytes.size() < 4) {
    throw DataError(where + ": truncated: expected at least 4 bytes, got " + std::to_string(bytes.size()));
  }
  const std::size_t n = get_u32le(bytes.data());
  if (bytes.size() < 4 + n) {
    throw DataError(where + ": truncated header: expected " + std::to_string(4 + n) + " bytes, got " +
                    std::to_string(bytes.size()));
  }
  Layout l;
  l.header_end = 4 + n;
  l.header = json::parse(bytes.substr(4, n), nullptr, false);
  if (l.header.is_discarded()) throw DataError(where + ": header is not valid JSON");
  return l;
}

}  // namespace

std::string encode_tiltstack(const TiltStack &stack) {
  stack.validate();
  for (std::size_t i = 0; i < stack.values.size(); ++i) {
    const float f = static_cast<float>(stack.values[i]);
    if (!std::isfinite(f)) {
      throw DataError("refusing to write non-finite value at index " + std::to_string(i) + " (frame " +
                      std::to_string(i / stack.frame_size()) + ")");
    }
  }
  const std::string header = header_json(stack.geometry).dump();
  std::string out;
  out.reserve(4 + header.size() + 4 * stack.values.size());
  put_u32le(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (double v : stack.values) {
    put_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

TiltStack decode_tiltstack(std::string_view bytes, std::string_view source) {
  const Layout l = parse_layout(bytes, source);
  TiltStack stack(geometry_from_header(l.header, source));
  const std::size_t count = stack.frame_count() * stack.frame_size();
  const std::size_t expected = l.header_end + 4 * count;
  if (bytes.size() != expected) {
    throw DataError(std::string(source) + (bytes.size() < expected ? ": truncated payload" : ": trailing bytes") +
                    ": expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  }
  const char *p = bytes.data() + l.header_end;
  for (std::size_t i = 0; i < count; ++i) {
    stack.values[i] = std::bit_cast<float>(get_u32le(p + 4 * i));
  }
  return stack;
}

void write_tiltstack(const std::filesystem::path &path, const TiltStack &stack) {
  write_file_bytes(path, encode_tiltstack(stack));
}

TiltStack read_tiltstack(const std::filesystem::path &path) {
  return decode_tiltstack(read_file_bytes(path), path.string());
}

TiltGeometry read_tiltstack_geometry(const std::filesystem::path &path) {
  const std::string bytes = read_file_bytes(path);
  return geometry_from_header(parse_layout(bytes, path.string()).header, path.string());
}

std::string read_file_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path &path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sparsealign
