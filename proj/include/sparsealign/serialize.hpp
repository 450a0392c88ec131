#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparsealign/baseline.hpp"
#include "sparsealign/deformation.hpp"
#include "sparsealign/evaluate.hpp"
#include "sparsealign/simulate.hpp"
#include "sparsealign/solver.hpp"

namespace sparsealign {

/// Markers plus deformation as stored in ground-truth and result files.
struct ModelDocument {
  MarkerSet markers;
  DeformationModel model;
  /// Present in ground-truth files.
  std::optional<Box> fov;
};

std::string ground_truth_json(const PhantomSpec &spec, const Phantom &phantom);
std::string alignment_result_json(const AlignmentResult &result);
std::string doming_fit_json(const DomingFit &fit);
/// Reads any of the three documents above.
ModelDocument parse_model_document(std::string_view text, std::string_view source = "model file");

std::string error_report_json(const ErrorReport &report);

/// level,iteration,step,loss,markers
std::string loss_history_csv(const std::vector<LossRecord> &history);

/// tilt_index,marker_id,coord0[,coord1],valid
std::string traces_csv(const MarkerTraces &traces);
MarkerTraces parse_traces_csv(std::string_view text, int dim, std::string_view source = "trace file");

/// Error field image: the whole 2D grid, or the middle z slice of a 3D grid,
/// linearly scaled so the largest value maps to 255. Rows run along z (2D)
/// or y (3D), top row first.
std::string error_field_pgm(const ErrorField &field);
/// Same slice as the image: x,z,error (2D) or x,y,error (3D).
std::string error_field_csv(const ErrorField &field);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace sparsealign
