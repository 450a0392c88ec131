#include "sparsealign/serialize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace sparsealign {

namespace {

using nlohmann::json;

json point_json(const Point &p, int dim) { return to_user_coordinates(p, dim); }

json box_json(const Box &b, int dim) { return {{"lower", point_json(b.lower, dim)}, {"upper", point_json(b.upper, dim)}}; }

json markers_json(const MarkerSet &m) {
  json arr = json::array();
  for (std::size_t j = 0; j < m.size(); ++j) {
    arr.push_back({{"location", point_json(m.locations[j], m.dim)}, {"weight", m.weights[j]}});
  }
  return arr;
}

json axes_json(const AxisMask &mask) { return {mask[0], mask[1], mask[2]}; }

json deformation_json(const DeformationModel &model) {
  json coeffs = json::array();
  const Eigen::VectorXd p = model.parameters();
  for (int i = 0; i < model.parameter_count(); ++i) coeffs.push_back({{"name", model.parameter_name(i)}, {"value", p[i]}});
  const Point &s = model.coordinate_scale();
  return {{"dimension", model.dim()},
          {"spatial_degree", model.spatial_degree()},
          {"temporal_degree", model.temporal_degree()},
          {"spatial_axes", axes_json(model.spatial_axes())},
          {"components", axes_json(model.components())},
          {"coordinate_scale", {s.x(), s.y(), s.z()}},
          {"coefficients", coeffs}};
}

AxisMask parse_axes(const json &j) {
  const auto v = j.get<std::vector<bool>>();
  if (v.size() != 3) throw DataError("axis masks need 3 entries");
  return {v[0], v[1], v[2]};
}

DeformationModel parse_deformation(const json &j) {
  const auto scale = j.at("coordinate_scale").get<std::vector<double>>();
  if (scale.size() != 3) throw DataError("coordinate_scale needs 3 entries");
  DeformationModel model(j.at("dimension").get<int>(), j.at("spatial_degree").get<int>(),
                         j.at("temporal_degree").get<int>(), parse_axes(j.at("spatial_axes")),
                         parse_axes(j.at("components")), Point(scale[0], scale[1], scale[2]));
  const json &coeffs = j.at("coefficients");
  if (static_cast<int>(coeffs.size()) != model.parameter_count()) {
    throw DataError("expected " + std::to_string(model.parameter_count()) + " deformation coefficients, got " +
                    std::to_string(coeffs.size()));
  }
  Eigen::VectorXd p(model.parameter_count());
  for (int i = 0; i < model.parameter_count(); ++i) {
    const json &c = coeffs[static_cast<std::size_t>(i)];
    if (c.at("name").get<std::string>() != model.parameter_name(i)) {
      throw DataError("coefficient " + std::to_string(i) + " is named " + c.at("name").get<std::string>() +
                      ", expected " + model.parameter_name(i));
    }
    p[i] = c.at("value").get<double>();
  }
  model.set_parameters(p);
  return model;
}

MarkerSet parse_markers(const json &arr, int dim) {
  MarkerSet m;
  m.dim = dim;
  for (const json &e : arr) m.add(from_user_coordinates(e.at("location").get<std::vector<double>>(), dim), e.at("weight").get<double>());
  m.validate();
  return m;
}

std::string dump(const json &j) { return j.dump(2) + "\n"; }

/// The 2D grid, or the middle z slice of a 3D one: {width, height, index(col, row)}.
struct Slice {
  int width = 0;
  int height = 0;
  std::size_t offset = 0;
  std::size_t row_stride = 0;
};

Slice field_slice(const ErrorField &f) {
  const auto &s = f.grid.shape;
  Slice sl;
  sl.width = s[0];
  if (f.grid.dim == 2) {
    sl.height = s[2];
    sl.row_stride = static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]);
  } else {
    sl.height = s[1];
    sl.row_stride = static_cast<std::size_t>(s[0]);
    sl.offset = static_cast<std::size_t>(s[2] / 2) * static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]);
  }
  return sl;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string ground_truth_json(const PhantomSpec &spec, const Phantom &phantom) {
  json j{{"kind", "ground_truth"},
         {"dimension", spec.dim},
         {"seed", spec.seed},
         {"shape_sigma", spec.shape_sigma},
         {"fov", box_json(spec.fov, spec.dim)},
         {"marker_region", box_json(spec.marker_region, spec.dim)},
         {"markers", markers_json(phantom.markers)},
         {"deformation", deformation_json(phantom.model)}};
  return dump(j);
}

std::string alignment_result_json(const AlignmentResult &result) {
  json levels = json::array();
  for (const auto &l : result.levels) {
    levels.push_back({{"eta", l.eta},
                      {"iterations", l.iterations},
                      {"initial_loss", l.initial_loss},
                      {"final_loss", l.final_loss},
                      {"markers", l.markers.size()}});
  }
  json j{{"kind", "alignment_result"},
         {"dimension", result.markers.dim},
         {"final_loss", result.final_loss},
         {"levels", levels},
         {"markers", markers_json(result.markers)},
         {"deformation", deformation_json(result.model)}};
  return dump(j);
}

std::string doming_fit_json(const DomingFit &fit) {
  json j{{"kind", "doming_fit"},
         {"dimension", fit.markers.dim},
         {"residual", fit.residual},
         {"iterations", fit.iterations},
         {"status", to_string(fit.status)},
         {"markers", markers_json(fit.markers)},
         {"deformation", deformation_json(fit.model)}};
  return dump(j);
}

ModelDocument parse_model_document(std::string_view text, std::string_view source) {
  const std::string where(source);
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError(where + ": not a JSON object");
  try {
    ModelDocument doc;
    const int dim = j.at("dimension").get<int>();
    if (dim != 2 && dim != 3) throw DataError("dimension must be 2 or 3");
    doc.model = parse_deformation(j.at("deformation"));
    if (doc.model.dim() != dim) throw DataError("deformation dimension differs from the document's");
    doc.markers = parse_markers(j.at("markers"), dim);
    if (j.contains("fov")) {
      doc.fov = Box{from_user_coordinates(j["fov"].at("lower").get<std::vector<double>>(), dim),
                    from_user_coordinates(j["fov"].at("upper").get<std::vector<double>>(), dim)};
    }
    return doc;
  } catch (const json::exception &e) {
    throw DataError(where + ": " + e.what());
  } catch (const Error &e) {
    throw DataError(where + ": " + e.what());
  }
}

std::string error_report_json(const ErrorReport &report) {
  const int dim = report.grid.dim;
  const Point h = report.grid.spacing();
  json j{{"kind", "error_report"},
         {"E_global", report.e_global},
         {"E_markers", report.e_markers},
         {"marker_errors", report.marker_errors},
         {"grid",
          {{"shape", report.grid.shape},
           {"lower", point_json(report.grid.box.lower, dim)},
           {"upper", point_json(report.grid.box.upper, dim)},
           {"spacing", point_json(h, dim)}}}};
  if (report.has_matching) {
    json matches = json::array();
    for (const auto &m : report.matching.matches) {
      matches.push_back({{"estimate", m.estimate}, {"truth", m.truth}, {"distance", m.distance}});
    }
    j["matching"] = {{"matches", matches},
                     {"spurious", report.matching.spurious},
                     {"missed", report.matching.missed},
                     {"spurious_count", report.matching.spurious.size()},
                     {"missed_count", report.matching.missed.size()}};
  }
  return dump(j);
}

std::string loss_history_csv(const std::vector<LossRecord> &history) {
  std::string out = "level,iteration,step,loss,markers\n";
  for (const auto &r : history) {
    out += std::to_string(r.level) + "," + std::to_string(r.iteration) + "," + to_string(r.step) + "," +
           format_double(r.loss) + "," + std::to_string(r.markers) + "\n";
  }
  return out;
}

std::string traces_csv(const MarkerTraces &traces) {
  std::string out = traces.dim == 2 ? "tilt_index,marker_id,coord0,valid\n" : "tilt_index,marker_id,coord0,coord1,valid\n";
  for (std::size_t t = 0; t < traces.frames; ++t)
    for (std::size_t j = 0; j < traces.markers; ++j) {
      const DetectorPoint &q = traces.at(t, j);
      out += std::to_string(t) + "," + std::to_string(j) + "," + format_double(q.s) + ",";
      if (traces.dim == 3) out += format_double(q.y) + ",";
      out += traces.is_valid(t, j) ? "1\n" : "0\n";
    }
  return out;
}

MarkerTraces parse_traces_csv(std::string_view text, int dim, std::string_view source) {
  const std::string where(source);
  if (dim != 2 && dim != 3) throw ConfigError("trace dimension must be 2 or 3");
  struct Row {
    std::size_t t, j;
    double c0, c1;
    bool valid;
  };
  std::vector<Row> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  const std::size_t fields = dim == 2 ? 4 : 5;
  const std::string header = dim == 2 ? "tilt_index,marker_id,coord0,valid" : "tilt_index,marker_id,coord0,coord1,valid";
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != header) throw DataError(where + ": expected header \"" + header + "\"");
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != fields) {
      throw DataError(where + ":" + std::to_string(line_no) + ": expected " + std::to_string(fields) + " fields");
    }
    try {
      std::size_t pos = 0;
      Row r{};
      r.t = std::stoul(cells[0], &pos);
      r.j = std::stoul(cells[1], &pos);
      r.c0 = std::stod(cells[2], &pos);
      r.c1 = dim == 3 ? std::stod(cells[3], &pos) : 0.0;
      const std::string &v = cells.back();
      if (v != "0" && v != "1") throw std::invalid_argument("valid");
      r.valid = v == "1";
      rows.push_back(r);
    } catch (const std::exception &) {
      throw DataError(where + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  if (rows.empty()) throw DataError(where + ": no trace rows");
  std::size_t frames = 0, markers = 0;
  for (const Row &r : rows) {
    frames = std::max(frames, r.t + 1);
    markers = std::max(markers, r.j + 1);
  }
  MarkerTraces traces(dim, frames, markers);
  std::vector<bool> seen(frames * markers, false);
  for (const Row &r : rows) {
    const std::size_t k = r.t * markers + r.j;
    if (seen[k]) {
      throw DataError(where + ": duplicate entry for tilt " + std::to_string(r.t) + ", marker " + std::to_string(r.j));
    }
    seen[k] = true;
    traces.at(r.t, r.j) = {r.c0, r.c1};
    traces.valid[k] = r.valid ? 1 : 0;
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) traces.valid[k] = 0;
    if (traces.valid[k] && !(std::isfinite(traces.points[k].s) && std::isfinite(traces.points[k].y))) {
      throw DataError(where + ": non-finite coordinate in a valid entry");
    }
  }
  return traces;
}

std::string error_field_pgm(const ErrorField &field) {
  const Slice sl = field_slice(field);
  double vmax = 0.0;
  for (int r = 0; r < sl.height; ++r)
    for (int c = 0; c < sl.width; ++c) vmax = std::max(vmax, field.values[sl.offset + r * sl.row_stride + c]);
  std::string out = "P5\n" + std::to_string(sl.width) + " " + std::to_string(sl.height) + "\n255\n";
  for (int r = sl.height - 1; r >= 0; --r)
    for (int c = 0; c < sl.width; ++c) {
      const double v = field.values[sl.offset + static_cast<std::size_t>(r) * sl.row_stride + c];
      const double scaled = vmax > 0.0 ? std::round(255.0 * v / vmax) : 0.0;
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0))));
    }
  return out;
}

std::string error_field_csv(const ErrorField &field) {
  const Slice sl = field_slice(field);
  const int second = field.grid.dim == 2 ? kZ : kY;
  std::string out = field.grid.dim == 2 ? "x,z,error\n" : "x,y,error\n";
  for (int r = 0; r < sl.height; ++r)
    for (int c = 0; c < sl.width; ++c) {
      const std::size_t i = sl.offset + static_cast<std::size_t>(r) * sl.row_stride + c;
      const Point p = field.grid.node(i);
      out += format_double(p.x()) + "," + format_double(p[second]) + "," + format_double(field.values[i]) + "\n";
    }
  return out;
}

}  // namespace sparsealign
