#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sparsealign/geometry.hpp"

namespace sparsealign {

/// TiltStackFile layout: a little-endian uint32 giving the header length in
/// bytes, the JSON header, then N_theta * prod(detector_shape) little-endian
/// float32 values, frame-major and row-major within each frame.
inline constexpr std::string_view kTiltStackMagic = "TSTK1";

/// Serializes a stack; throws DataError if any value is not finite.
std::string encode_tiltstack(const TiltStack &stack);
/// Parses bytes produced by encode_tiltstack. `source` names the input in errors.
TiltStack decode_tiltstack(std::string_view bytes, std::string_view source = "tilt stack");

void write_tiltstack(const std::filesystem::path &path, const TiltStack &stack);
TiltStack read_tiltstack(const std::filesystem::path &path);
/// Header only; the payload is not read.
TiltGeometry read_tiltstack_geometry(const std::filesystem::path &path);

/// Acquisition metadata that MRC headers do not carry.
struct MrcImportOptions {
  /// One angle per section; required.
  std::vector<double> angles_deg;
  /// Empty selects uniform times.
  std::vector<double> times;
  double shape_sigma = 1.0;
  int tilt_axis = kY;
};

struct MrcHeader {
  int nx = 0, ny = 0, nz = 0;
  int mode = 0;
  int mx = 0;
  float cell_x = 0.0f;
  int extended_bytes = 0;
  bool big_endian = false;
  /// cell_x / mx (the header's length unit, usually Angstrom).
  double pixel_size = 1.0;
};

/// Parses the 1024-byte MRC2014 main header.
MrcHeader parse_mrc_header(std::string_view bytes, std::string_view source = "MRC file");

/// Reads an MRC2014 stack (mode 1 int16 or mode 2 float32) as NZ tilt
/// frames of NY x NX pixels. A file with NY = 1 yields a 2D-sample stack.
TiltStack decode_mrc(std::string_view bytes, const MrcImportOptions &options,
                     std::string_view source = "MRC file");
TiltStack read_mrc(const std::filesystem::path &path, const MrcImportOptions &options);

/// Whole-file read; throws DataError when the file cannot be opened.
std::string read_file_bytes(const std::filesystem::path &path);
/// Writes through a temporary sibling and renames it into place.
void write_file_bytes(const std::filesystem::path &path, std::string_view bytes);

}  // namespace sparsealign
