#pragma once

// Predictions file (CSV, coordinates in meters):
//   sample_id,joint_id,px,py,pz,gx,gy,gz,uncertainty

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "handunc/errors.hpp"
#include "handunc/metrics.hpp"

namespace handunc::metrics {

inline constexpr std::string_view kPredictionsHeader = "sample_id,joint_id,px,py,pz,gx,gy,gz,uncertainty";

/// Shortest decimal text that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_predictions(std::ostream& os, const std::vector<JointPrediction>& preds) {
  os << kPredictionsHeader << '\n';
  for (const auto& p : preds) {
    os << p.sample_id << ',' << p.joint_id;
    for (int c = 0; c < 3; ++c) os << ',' << format_double(p.pred[c]);
    for (int c = 0; c < 3; ++c) os << ',' << format_double(p.gt[c]);
    os << ',' << format_double(p.uncertainty) << '\n';
  }
  if (!os) throw Error(ErrorCode::IoError, "failed writing predictions");
}

inline void save_predictions(const std::string& path, const std::vector<JointPrediction>& preds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  write_predictions(os, preds);
}

namespace detail {

template <class T>
T parse_field(std::string_view text, std::size_t line, const char* name) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ParseError(line, std::string("bad value for ") + name + ": '" + std::string(text) + "'");
  return value;
}

}  // namespace detail

inline std::vector<JointPrediction> read_predictions(std::istream& is) {
  static constexpr const char* kNames[] = {"sample_id", "joint_id", "px", "py", "pz",
                                           "gx",        "gy",       "gz", "uncertainty"};
  std::vector<JointPrediction> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError(1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kPredictionsHeader) throw ParseError(line_no, "unexpected header '" + line + "'");

  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 9)
      throw ParseError(line_no, "expected 9 fields, found " + std::to_string(fields.size()));
    JointPrediction p;
    p.sample_id = detail::parse_field<std::uint64_t>(fields[0], line_no, kNames[0]);
    p.joint_id = detail::parse_field<int>(fields[1], line_no, kNames[1]);
    for (int c = 0; c < 3; ++c) p.pred[c] = detail::parse_field<double>(fields[2 + c], line_no, kNames[2 + c]);
    for (int c = 0; c < 3; ++c) p.gt[c] = detail::parse_field<double>(fields[5 + c], line_no, kNames[5 + c]);
    p.uncertainty = detail::parse_field<double>(fields[8], line_no, kNames[8]);
    if (p.joint_id < 0 || p.joint_id >= kNumJoints) throw ParseError(line_no, "joint_id out of range");
    if (!p.pred.allFinite() || !p.gt.allFinite()) throw ParseError(line_no, "non-finite coordinate");
    if (!(p.uncertainty >= 0.0) || !std::isfinite(p.uncertainty))
      throw ParseError(line_no, "uncertainty must be finite and >= 0");
    out.push_back(p);
  }
  return out;
}

inline std::vector<JointPrediction> load_predictions(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_predictions(is);
}

}  // namespace handunc::metrics
