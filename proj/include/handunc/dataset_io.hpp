#pragma once

// Line-oriented dataset files: a JSON header line followed by one JSON
// record per sample.
//
//   {"format":"handsim-dataset","version":1,"skeleton_hash":"...","count":N,"seed":S,"feature_dim":43}
//   {"id":0,"features":[...],"gt_joints":[63],"occlusion":o,"noise_cov_packed":[2016]}
//
// noise_cov_packed is the lower triangle of the 63 x 63 covariance in
// row-major order: (0,0), (1,0), (1,1), (2,0), ...

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "handunc/errors.hpp"
#include "handunc/handsim.hpp"

namespace handunc::handsim {

inline constexpr int kDatasetVersion = 1;
inline constexpr const char* kDatasetFormat = "handsim-dataset";
inline constexpr int kPackedCovSize = kOutputDim * (kOutputDim + 1) / 2;

struct DatasetHeader {
  int version = kDatasetVersion;
  std::string skeleton_hash;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  int feature_dim = kFeatureDim;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SyntheticSample> samples;
};

inline std::vector<double> pack_lower(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.rows() * (m.rows() + 1) / 2));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out.push_back(m(i, j));
  return out;
}

inline Matrix unpack_lower(const std::vector<double>& packed, Eigen::Index d) {
  if (static_cast<Eigen::Index>(packed.size()) != d * (d + 1) / 2)
    throw Error(ErrorCode::ShapeError, "packed covariance has wrong length");
  Matrix m(d, d);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = m(j, i) = packed[k++];
  return m;
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline void write_dataset(std::ostream& os, const DatasetHeader& header, const std::vector<SyntheticSample>& samples) {
  nlohmann::ordered_json h;
  h["format"] = kDatasetFormat;
  h["version"] = header.version;
  h["skeleton_hash"] = header.skeleton_hash;
  h["count"] = samples.size();
  h["seed"] = header.seed;
  h["feature_dim"] = header.feature_dim;
  os << h.dump() << '\n';
  for (const auto& s : samples) {
    nlohmann::ordered_json r;
    r["id"] = s.id;
    r["features"] = detail::to_std(s.features);
    r["gt_joints"] = detail::to_std(s.gt_joints);
    r["occlusion"] = s.occlusion;
    r["noise_cov_packed"] = pack_lower(s.noise_cov);
    os << r.dump() << '\n';
  }
  if (!os) throw Error(ErrorCode::IoError, "failed writing dataset");
}

inline void save_dataset(const std::string& path, const DatasetHeader& header,
                         const std::vector<SyntheticSample>& samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  write_dataset(os, header, samples);
}

/// Parses and validates a dataset stream. Every record must have the declared
/// dimensions, finite values, occlusion in [0, 1] and a positive definite
/// noise covariance.
inline Dataset read_dataset(std::istream& is) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError(1, "missing header line");
  ++line_no;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format").get<std::string>() != kDatasetFormat) throw ParseError(line_no, "not a handsim dataset");
    ds.header.version = h.at("version").get<int>();
    if (ds.header.version != kDatasetVersion)
      throw ParseError(line_no, "unsupported dataset version " + std::to_string(ds.header.version));
    ds.header.skeleton_hash = h.at("skeleton_hash").get<std::string>();
    ds.header.count = h.at("count").get<std::size_t>();
    ds.header.seed = h.at("seed").get<std::uint64_t>();
    ds.header.feature_dim = h.at("feature_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, e.what());
  }

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    SyntheticSample s;
    try {
      const auto r = nlohmann::json::parse(line);
      s.id = r.at("id").get<std::uint64_t>();
      s.features = detail::to_eigen(r.at("features").get<std::vector<double>>());
      s.gt_joints = detail::to_eigen(r.at("gt_joints").get<std::vector<double>>());
      s.occlusion = r.at("occlusion").get<double>();
      const auto packed = r.at("noise_cov_packed").get<std::vector<double>>();
      if (static_cast<int>(packed.size()) != kPackedCovSize) throw ParseError(line_no, "noise_cov_packed length");
      s.noise_cov = unpack_lower(packed, kOutputDim);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (s.features.size() != ds.header.feature_dim) throw ParseError(line_no, "features length");
    if (s.gt_joints.size() != kOutputDim) throw ParseError(line_no, "gt_joints length");
    if (!s.features.allFinite() || !s.gt_joints.allFinite() || !s.noise_cov.allFinite())
      throw ParseError(line_no, "non-finite value");
    if (!(s.occlusion >= 0.0 && s.occlusion <= 1.0)) throw ParseError(line_no, "occlusion outside [0, 1]");
    if (Eigen::LLT<Matrix>(s.noise_cov).info() != Eigen::Success)
      throw ParseError(line_no, "noise covariance is not positive definite");
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != ds.header.count)
    throw ParseError(line_no, "header declares " + std::to_string(ds.header.count) + " records, found " +
                                  std::to_string(ds.samples.size()));
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_dataset(is);
}

}  // namespace handunc::handsim
